"""Rank nodes of a directed network from graph embeddings and a subsampled tree ensemble."""

__version__ = "0.1.0"
