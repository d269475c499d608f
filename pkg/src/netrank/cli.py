"""Command-line entry point: embed, pipeline, compare, synth and eval subcommands.

Settings come from four layers, later ones winning: built-in defaults, a
JSON config file (``--config``; a previous run's manifest.json also works),
``NETRANK_<KEY>`` environment variables, and command-line flags.

Exit codes: 0 success, 1 runtime failure, 2 configuration or usage error.
"""

from __future__ import annotations

import argparse
import contextlib
import copy
import dataclasses
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .evaluation import (cross_val_grid_search, enrichment_curves, percentile_overlap, rank_ids,
                         read_gmt)
from .graph import load_edge_list, load_feature_table, load_labels, write_embeddings
from .imgagn import ImgagnConfig, TrainLog
from .line import LineConfig
from .node2vec import Node2VecConfig
from .pipeline import (METHODS, PipelineConfig, assemble_features, correlation_filter,
                       cross_validate, derive_seed, embed, predict_ensemble, read_predictions,
                       train_ensemble, write_predictions)
from .synth import SbmSpec, write_benchmark
from .trees import CLASSIFIERS, make_classifier

logger = logging.getLogger("netrank")

ENV_PREFIX = "NETRANK_"
PATH_KEYS = ("edges", "features", "labels", "ext_features", "known", "gene_sets", "predictions")
SECTIONS = {"node2vec": Node2VecConfig, "line": LineConfig, "imgagn": ImgagnConfig, "synth": SbmSpec}
DEFAULTS = {
    "edges": None,
    "features": None,  # node attributes: ImGAGN input and, unless ext_features is set, the extended set
    "labels": None,
    "ext_features": None,
    "known": None,  # reference positives for overlap/enrichment; defaults to labels
    "gene_sets": None,
    "predictions": None,  # eval only
    "out": "netrank_out",
    "seed": 0,
    "method": "imgagn",
    "classifier": "gbt",
    "classifier_params": {},
    "grid": None,
    "dim": None,
    "folds": 5,
    "M": 10,
    "positive_frac": 0.8,
    "neg_ratio": 2,
    "corr_threshold": 0.85,
    "top_frac": 0.05,
    "bin_width": 0.05,
    "window": 15,
    "methods": list(METHODS),
    "classifiers": list(CLASSIFIERS),
    "cell_overrides": {},
    "node2vec": {},
    "line": {},
    "imgagn": {},
    "synth": {},
}
REQUIRED = {
    "embed": ("edges",),
    "pipeline": ("edges", "features", "labels"),
    "compare": ("edges", "features", "labels"),
    "synth": (),
    "eval": ("predictions",),
}


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"config error in field '{field}': {message}")
        self.field = field


class StageError(RuntimeError):
    pass


@contextlib.contextmanager
def stage(name: str):
    try:
        yield
    except (ConfigError, StageError):
        raise
    except Exception as exc:  # noqa: BLE001 - any failure is reported with its stage
        raise StageError(f"{name}: {exc}") from exc


# --- configuration ----------------------------------------------------------------

def _env_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def load_config_file(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError("config", f"file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"{path} is not valid JSON ({exc})") from exc
    if isinstance(data, dict) and "config" in data and "inputs" in data:
        data = data["config"]  # a manifest from an earlier run
    if not isinstance(data, dict):
        raise ConfigError("config", "top level must be an object")
    base = path.resolve().parent
    for key in PATH_KEYS:
        if isinstance(data.get(key), str):
            data[key] = str((base / data[key]).resolve())
    if isinstance(data.get("out"), str):
        data["out"] = str((base / data["out"]).resolve())
    return data


def resolve_config(file_values: dict, env: dict, flags: dict) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    for key, value in file_values.items():
        if key not in DEFAULTS:
            raise ConfigError(key, "unknown setting")
        cfg[key] = value
    for key in DEFAULTS:
        raw = env.get(ENV_PREFIX + key.upper())
        if raw is not None:
            cfg[key] = _env_value(raw)
    for key, value in flags.items():
        if value is not None:
            cfg[key] = value
    for key in PATH_KEYS + ("out",):
        if isinstance(cfg[key], str):
            cfg[key] = str(Path(cfg[key]).resolve())
    return cfg


def _is_int(v) -> bool:
    return isinstance(v, (int, np.integer)) and not isinstance(v, bool)


def _section(name: str, cls, values) -> object:
    if not isinstance(values, dict):
        raise ConfigError(name, "must be an object")
    names = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in values.items():
        if key not in names:
            raise ConfigError(f"{name}.{key}", "unknown setting")
        kwargs[key] = tuple(value) if isinstance(value, list) else value
    try:
        obj = cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(name, str(exc)) from exc
    if cls is SbmSpec:
        try:
            obj.validate()
        except ValueError as exc:
            raise ConfigError(name, str(exc)) from exc
    return obj


def validate(cfg: dict, command: str) -> dict:
    """Type-check the resolved settings and build the typed config objects."""
    for key in REQUIRED[command]:
        if not cfg.get(key):
            raise ConfigError(key, f"required by '{command}'")
    for key in PATH_KEYS:
        value = cfg.get(key)
        if value is not None and not Path(value).is_file():
            raise ConfigError(key, f"file not found: {value}")
    if not _is_int(cfg["seed"]) or cfg["seed"] < 0:
        raise ConfigError("seed", "must be a non-negative integer")
    if cfg["method"] not in METHODS:
        raise ConfigError("method", f"{cfg['method']!r} is not one of {', '.join(METHODS)}")
    if cfg["classifier"] not in CLASSIFIERS:
        raise ConfigError("classifier", f"{cfg['classifier']!r} is not one of {', '.join(CLASSIFIERS)}")
    for key in ("methods", "classifiers"):
        allowed = METHODS if key == "methods" else CLASSIFIERS
        if not isinstance(cfg[key], list) or not cfg[key] or any(v not in allowed for v in cfg[key]):
            raise ConfigError(key, f"must be a non-empty list drawn from {', '.join(allowed)}")
    if cfg["dim"] is not None and (not _is_int(cfg["dim"]) or cfg["dim"] < 1):
        raise ConfigError("dim", "must be a positive integer")
    for key, lo in (("folds", 2), ("M", 1), ("neg_ratio", 1), ("window", 1)):
        if not _is_int(cfg[key]) or cfg[key] < lo:
            raise ConfigError(key, f"must be an integer >= {lo}")
    if cfg["window"] % 2 == 0:
        raise ConfigError("window", "must be odd")
    for key in ("positive_frac", "corr_threshold", "top_frac", "bin_width"):
        v = cfg[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not 0 < v <= 1:
            raise ConfigError(key, "must be a number in (0, 1]")
    if not isinstance(cfg["classifier_params"], dict):
        raise ConfigError("classifier_params", "must map classifier kinds to parameter objects")
    for kind, params in cfg["classifier_params"].items():
        try:
            make_classifier(kind, **params)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"classifier_params.{kind}", str(exc)) from exc
    if cfg["grid"] is not None:
        if not isinstance(cfg["grid"], list) or not cfg["grid"]:
            raise ConfigError("grid", "must be a non-empty list of parameter objects")
        for i, params in enumerate(cfg["grid"]):
            try:
                make_classifier(cfg["classifier"], **params)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"grid[{i}]", str(exc)) from exc
    if not isinstance(cfg["cell_overrides"], dict):
        raise ConfigError("cell_overrides", "must map 'method/classifier' to parameter objects")

    typed = {name: _section(name, cls, cfg[name]) for name, cls in SECTIONS.items()}
    if cfg["dim"] is not None:
        typed["node2vec"].dim = cfg["dim"]
        typed["line"].dim_total = cfg["dim"]
        typed["imgagn"].dim = cfg["dim"]
    typed["pipeline"] = PipelineConfig(M=cfg["M"], positive_frac=cfg["positive_frac"],
                                       neg_ratio=cfg["neg_ratio"], cv_folds=cfg["folds"],
                                       corr_threshold=cfg["corr_threshold"], node2vec=typed["node2vec"],
                                       line=typed["line"], imgagn=typed["imgagn"])
    return typed


# --- shared plumbing ----------------------------------------------------------------

def sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def write_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def write_manifest(cfg: dict, command: str, out: Path, outputs: list[Path], seeds: dict) -> Path:
    manifest = {
        "command": command,
        "version": __version__,
        "config": cfg,
        "seeds": seeds,
        "inputs": {k: {"path": cfg[k], "sha256": sha256(cfg[k])} for k in PATH_KEYS if cfg.get(k)},
        "outputs": {p.name: sha256(p) for p in outputs},
    }
    path = out / "manifest.json"
    write_json(manifest, path)
    return path


def load_inputs(cfg: dict):
    with stage("load"):
        g = load_edge_list(cfg["edges"])
        node_features = load_feature_table(cfg["features"]) if cfg.get("features") else None
        labels = load_labels(cfg["labels"]) if cfg.get("labels") else None
        ext = load_feature_table(cfg["ext_features"]) if cfg.get("ext_features") else node_features
        if labels is not None:
            g = g.with_isolated(sorted(set(labels.universe) - set(g.node_ids)))
    return g, node_features, ext, labels


def classifier_params(cfg: dict, kind: str) -> dict:
    return dict(cfg["classifier_params"].get(kind, {}))


# --- subcommands ----------------------------------------------------------------------

def cmd_embed(cfg: dict, typed: dict) -> int:
    method = cfg["method"]
    if method == "imgagn":
        for key in ("features", "labels"):
            if not cfg.get(key):
                raise ConfigError(key, "required by method 'imgagn'")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    g, node_features, _, labels = load_inputs(cfg)
    with stage("embed"):
        emb, log = embed(method, g, node_features, labels, typed["pipeline"], cfg["seed"])
    emb_path, log_path = out / "embeddings.tsv", out / "train_log.json"
    write_embeddings(emb, emb_path)
    if isinstance(log, TrainLog):
        log.write(log_path)
    else:
        write_json(log, log_path)
    write_manifest(cfg, "embed", out, [emb_path, log_path], {"run": cfg["seed"], method: emb.seed})
    print(f"wrote {emb.values.shape[0]} x {emb.dim} embeddings to {emb_path}")
    return 0


def _top_ids(ranking: list[str], frac: float) -> list[str]:
    return ranking[:max(1, int(len(ranking) * frac))]


def evaluation_report(ranking: list[str], known, gene_sets_path, cfg: dict) -> tuple[dict, list[dict]]:
    bins = percentile_overlap(ranking, known, cfg["bin_width"])
    report = {"overlap_bins": [dataclasses.asdict(b) for b in bins]}
    curves: list[dict] = []
    if gene_sets_path:
        gsc = read_gmt(gene_sets_path)
        known_in = sorted(set(known) & set(ranking))
        curves = enrichment_curves(_top_ids(ranking, cfg["top_frac"]), known_in, gsc, ranking,
                                   cfg["window"])
        report["enrichment"] = {
            "order": "pathways sorted by reference enrichment score, descending",
            "pathways": [r["pathway"] for r in curves],
            "reference": [r["reference"] for r in curves],
            "query": [r["query"] for r in curves],
            "reference_smoothed": [r["reference_smoothed"] for r in curves],
            "query_smoothed": [r["query_smoothed"] for r in curves],
        }
    return report, curves


def write_curves(curves: list[dict], path: Path) -> None:
    cols = ["pathway", "reference", "query", "reference_smoothed", "query_smoothed"]
    with path.open("w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for r in curves:
            fh.write(",".join([r["pathway"]] + [f"{r[c]:.9g}" for c in cols[1:]]) + "\n")


def cmd_pipeline(cfg: dict, typed: dict) -> int:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    method, kind, seed = cfg["method"], cfg["classifier"], cfg["seed"]
    pcfg = typed["pipeline"]
    g, node_features, ext, labels = load_inputs(cfg)
    params = classifier_params(cfg, kind)
    seeds = {"run": seed}
    outputs = []

    with stage("embed"):
        emb, log = embed(method, g, node_features, labels, pcfg, seed)
        seeds[method] = emb.seed
    emb_path, log_path = out / "embeddings.tsv", out / "train_log.json"
    write_embeddings(emb, emb_path)
    if isinstance(log, TrainLog):
        log.write(log_path)
    else:
        write_json(log, log_path)
    outputs += [emb_path, log_path]

    with stage("correlation_filter"):
        ext_f, kept = correlation_filter(ext, pcfg.corr_threshold)
    with stage("assemble"):
        X = assemble_features(emb, ext_f)
    if cfg["grid"]:
        with stage("grid_search"):
            ids = [v for v in labels.universe if v in set(X.row_ids)]
            params, grid_means = cross_val_grid_search(
                X.rows(ids), labels.y(ids), cfg["grid"], lambda **p: make_classifier(kind, **p),
                k=pcfg.cv_folds, seed=derive_seed(seed, "grid"))
    with stage("cross_validate"):
        shared = {method: emb} if method in ("node2vec", "line") else None
        cv = cross_validate(g, node_features, ext, labels, method, kind, params, pcfg, seed,
                            embeddings=shared)
    with stage("train"):
        seeds["ensemble"] = derive_seed(seed, "ensemble")
        ens = train_ensemble(X, labels, pcfg.M, kind, params, seeds["ensemble"], pcfg.positive_frac,
                             pcfg.neg_ratio)
    with stage("predict"):
        rows = predict_ensemble(ens, X)
    pred_path = out / "predictions.csv"
    write_predictions(rows, pred_path)
    outputs.append(pred_path)

    with stage("evaluate"):
        known = load_labels(cfg["known"]).positives if cfg.get("known") else labels.positives
        report, curves = evaluation_report([v for v, _ in rows], known, cfg.get("gene_sets"), cfg)
    metrics = {"method": method, "classifier": kind, "classifier_params": params,
               "fold_auc": cv["fold_auc"], "mean_auc": cv["mean_auc"],
               "n_features": len(X.col_names), "kept_features": kept,
               "n_predictions": len(rows), **report}
    if cfg["grid"]:
        metrics["grid_mean_auc"] = grid_means
    metrics_path = out / "metrics.json"
    write_json(metrics, metrics_path)
    outputs.append(metrics_path)
    if curves:
        curve_path = out / "enrichment.csv"
        write_curves(curves, curve_path)
        outputs.append(curve_path)
    write_manifest(cfg, "pipeline", out, outputs, seeds)
    print(f"mean {pcfg.cv_folds}-fold AUC {cv['mean_auc']:.4f}; {len(rows)} predictions in {pred_path}")
    return 0


def format_table(methods, classifiers, cells) -> str:
    width = max(10, *(len(m) for m in methods))
    lines = ["method".ljust(width) + "".join(c.rjust(10) for c in classifiers)]
    for m in methods:
        row = m.ljust(width)
        for c in classifiers:
            v = cells[m][c]
            row += ("FAILED" if v is None else f"{v:.4f}").rjust(10)
        lines.append(row)
    return "\n".join(lines)


def cmd_compare(cfg: dict, typed: dict) -> int:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    pcfg, seed = typed["pipeline"], cfg["seed"]
    g, node_features, ext, labels = load_inputs(cfg)
    methods, classifiers = cfg["methods"], cfg["classifiers"]
    cells: dict = {m: {} for m in methods}
    details = []
    embeddings: dict = {}
    fold_caches: dict = {m: {} for m in methods}
    for m in methods:
        if m in ("node2vec", "line"):
            try:
                with stage(f"embed {m}"):
                    embeddings[m] = embed(m, g, None, None, pcfg, seed)[0]
            except StageError as exc:
                logger.error("%s", exc)
        for c in classifiers:
            params = {**classifier_params(cfg, c), **cfg["cell_overrides"].get(f"{m}/{c}", {})}
            entry = {"method": m, "classifier": c, "params": params}
            try:
                if m in ("node2vec", "line") and m not in embeddings:
                    raise StageError(f"embed {m}: embedding failed")
                with stage(f"{m}/{c}"):
                    cv = cross_validate(g, node_features, ext, labels, m, c, params, pcfg, seed,
                                        embeddings=embeddings, fold_cache=fold_caches[m])
                cells[m][c] = cv["mean_auc"]
                entry.update(cv)
            except StageError as exc:
                cells[m][c] = None
                entry["error"] = str(exc)
                logger.error("cell failed: %s", exc)
            details.append(entry)
            shown = "FAILED" if cells[m][c] is None else f"{cells[m][c]:.4f}"
            print(f"{m:>9} + {c:<4} mean AUC {shown}", flush=True)

    table_path, json_path = out / "compare.csv", out / "compare.json"
    with table_path.open("w", encoding="utf-8") as fh:
        fh.write(",".join(["method", *classifiers]) + "\n")
        for m in methods:
            vals = ["FAILED" if cells[m][c] is None else f"{cells[m][c]:.9g}" for c in classifiers]
            fh.write(",".join([m, *vals]) + "\n")
    write_json({"methods": methods, "classifiers": classifiers, "cells": details}, json_path)
    write_manifest(cfg, "compare", out, [table_path, json_path], {"run": seed})
    print(format_table(methods, classifiers, cells))
    failed = sum(v is None for row in cells.values() for v in row.values())
    if failed:
        print(f"{failed} of {len(methods) * len(classifiers)} cells failed", file=sys.stderr)
        return 1
    return 0


def cmd_synth(cfg: dict, typed: dict) -> int:
    spec = typed["synth"]
    if "seed" not in cfg["synth"]:
        spec.seed = cfg["seed"]
    out = Path(cfg["out"])
    with stage("synth"):
        paths = write_benchmark(spec, out)
    write_manifest(cfg, "synth", out, list(paths.values()), {"run": cfg["seed"], "synth": spec.seed})
    print(f"wrote {', '.join(p.name for p in paths.values())} to {out}")
    return 0


def cmd_eval(cfg: dict, typed: dict) -> int:
    if not (cfg.get("known") or cfg.get("labels")):
        raise ConfigError("known", "eval needs reference positives via 'known' or 'labels'")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    with stage("evaluate"):
        scores = read_predictions(cfg["predictions"])
        known = load_labels(cfg.get("known") or cfg["labels"]).positives
        report, curves = evaluation_report(rank_ids(scores), known, cfg.get("gene_sets"), cfg)
    metrics_path = out / "eval_metrics.json"
    write_json(report, metrics_path)
    outputs = [metrics_path]
    if curves:
        outputs.append(out / "enrichment.csv")
        write_curves(curves, outputs[-1])
    write_manifest(cfg, "eval", out, outputs, {"run": cfg["seed"]})
    top = report["overlap_bins"][0]
    print(f"top bin holds {top['overlap']} known positives (p = {top['p_value']:.3g})")
    return 0


COMMANDS = {"embed": cmd_embed, "pipeline": cmd_pipeline, "compare": cmd_compare,
            "synth": cmd_synth, "eval": cmd_eval}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file or a previous run's manifest.json")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--method", help="embedding method: " + ", ".join(METHODS))
    common.add_argument("--classifier", help="classifier: " + ", ".join(CLASSIFIERS))
    common.add_argument("--dim", type=int, help="embedding width")
    common.add_argument("--folds", type=int, help="cross-validation folds")
    common.add_argument("--edges")
    common.add_argument("--features")
    common.add_argument("--labels")
    common.add_argument("--gene-sets", dest="gene_sets")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="netrank", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"netrank {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("embed", parents=[common], help="embed a graph and write embeddings.tsv")
    sub.add_parser("pipeline", parents=[common], help="embed, train the ensemble, rank and evaluate")
    sub.add_parser("compare", parents=[common], help="cross-validated AUC for each method x classifier")
    p = sub.add_parser("synth", parents=[common], help="write a planted-label benchmark")
    p.add_argument("--n", type=int)
    p.add_argument("--blocks", help="comma-separated block sizes")
    p.add_argument("--p-in", type=float, dest="p_in")
    p.add_argument("--p-out", type=float, dest="p_out")
    p.add_argument("--flip-rate", type=float, dest="flip_rate")
    p = sub.add_parser("eval", parents=[common], help="percentile overlap and enrichment of a ranking")
    p.add_argument("--predictions")
    p.add_argument("--known")
    return parser


def main(argv: list[str] | None = None, env: dict | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    env = os.environ if env is None else env
    flags = {k: getattr(args, k, None) for k in
             ("seed", "out", "method", "classifier", "dim", "folds", "edges", "features", "labels",
              "gene_sets", "predictions", "known")}
    try:
        file_values = load_config_file(args.config) if args.config else {}
        cfg = resolve_config(file_values, env, flags)
        if args.command == "synth":
            cfg["synth"] = dict(cfg["synth"])
            for key in ("n", "p_in", "p_out", "flip_rate"):
                if getattr(args, key) is not None:
                    cfg["synth"][key] = getattr(args, key)
            if args.blocks is not None:
                try:
                    cfg["synth"]["block_sizes"] = [int(b) for b in args.blocks.split(",")]
                except ValueError:
                    raise ConfigError("synth.block_sizes", f"not a list of integers: {args.blocks!r}")
                cfg["synth"].setdefault("n", sum(cfg["synth"]["block_sizes"]))
        typed = validate(cfg, args.command)
        return COMMANDS[args.command](cfg, typed)
    except ConfigError as exc:
        print(f"netrank: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"netrank: {args.command} failed at {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
