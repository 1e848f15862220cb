"""Run every config under configs/ (or the ones given) and write results/<name>.csv plus summaries."""

import argparse
import json
import pathlib
import time

from drifttrack.config import load_config
from drifttrack.runner import emit_results, run_experiment

ROOT = pathlib.Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("configs", nargs="*", type=pathlib.Path)
    ap.add_argument("--out-dir", type=pathlib.Path, default=ROOT / "results")
    ap.add_argument("--workers", type=int, default=None)
    args = ap.parse_args()
    paths = args.configs or sorted((ROOT / "configs").glob("*.toml"))
    args.out_dir.mkdir(parents=True, exist_ok=True)
    for path in paths:
        cfg = load_config(path)
        t0 = time.perf_counter()
        table = run_experiment(cfg, workers=args.workers)
        out = args.out_dir / f"{path.stem}.csv"
        emit_results(table, out, cfg)
        print(f"{path.stem}: {time.perf_counter() - t0:.1f}s -> {out}")
        print(json.dumps(table.summary, default=float, indent=1))


if __name__ == "__main__":
    main()
