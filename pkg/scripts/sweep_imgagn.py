"""Grid over ImGAGN regularisation settings on the benchmark, one line per (setting, seed).

Used to pick the default epochs and weight decay; see the README.

    python scripts/sweep_imgagn.py --seeds 0 1 --grid '[{"epochs": 20, "weight_decay": 0.05}]'
"""

import argparse
import json
import time

from netrank.imgagn import ImgagnConfig
from netrank.pipeline import PipelineConfig, cross_validate
from netrank.synth import SbmSpec, generate

DEFAULT_GRID = [
    {"epochs": 50, "weight_decay": 0.0},
    {"epochs": 10, "weight_decay": 0.0},
    {"epochs": 50, "weight_decay": 0.005},
    {"epochs": 50, "encoder_hidden": 16},
    {"epochs": 50, "lr": 0.001},
    {"epochs": 20, "weight_decay": 0.05},
]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--grid", default=json.dumps(DEFAULT_GRID))
    args = ap.parse_args()
    for seed in args.seeds:
        g, fm, labels = generate(SbmSpec(seed=seed))
        raw = cross_validate(g, fm, fm, labels, None, "gbt", {}, PipelineConfig(), seed)["mean_auc"]
        for setting in json.loads(args.grid):
            cfg = PipelineConfig(imgagn=ImgagnConfig(**setting))
            t0 = time.perf_counter()
            auc = cross_validate(g, fm, fm, labels, "imgagn", "gbt", {}, cfg, seed)["mean_auc"]
            print(f"seed {seed} {json.dumps(setting)} raw {raw:.4f} imgagn {auc:.4f} "
                  f"{time.perf_counter() - t0:.0f} s", flush=True)


if __name__ == "__main__":
    main()
