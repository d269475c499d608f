"""Write the default benchmark and fill the embedder x classifier AUC table through the CLI.

    python scripts/run_compare.py --out results/compare --seed 0
"""

import argparse
import sys
from pathlib import Path

from netrank.cli import main as cli


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("results/compare"))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    data = args.out / "data"
    code = cli(["synth", "--out", str(data), "--seed", str(args.seed)])
    if code:
        return code
    return cli(["compare", "--edges", str(data / "edges.tsv"), "--features", str(data / "features.csv"),
                "--labels", str(data / "labels.csv"), "--seed", str(args.seed), "--out", str(args.out)])


if __name__ == "__main__":
    sys.exit(main())
