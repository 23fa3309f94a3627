#!/usr/bin/env python3
"""Run the four-method comparison on one task and analyse the results.

Executes `--runs` independent evolutionary runs per method (fit, ns-ts,
ns-sd, ns-sd+), then aggregates fitness curves, per-run bests, pairwise
Mann-Whitney tests, MI relevance tables, and behaviour-space maps into
OUT/analysis.

Example (a desk-scale resource sharing comparison):

    python scripts/run_comparison.py --task resource_sharing \
        --runs 8 --population 50 --generations 60 --trials 10 \
        --param max_steps=150 --param start_energy=20 --out out/comparison
"""

import argparse
import sys
import time
from multiprocessing import get_context
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from sdbc.cli import execute_run, main as sdbc_main  # noqa: E402
from sdbc.config import config_from_dict  # noqa: E402

METHODS = ("fit", "ns-ts", "ns-sd", "ns-sd+")
METHOD_SEED_BASE = {"fit": 1000, "ns-ts": 2000, "ns-sd": 3000, "ns-sd+": 4000}


def parse_param(text: str):
    key, _, value = text.partition("=")
    for cast in (int, float):
        try:
            return key, cast(value)
        except ValueError:
            continue
    return key, value


def build_config(args, method: str, run_index: int) -> dict:
    return {
        "task": args.task,
        "method": method,
        "seed": METHOD_SEED_BASE[method] + run_index,
        "dump_population": True,
        "ga": {
            "population": args.population,
            "generations": args.generations,
            "trials": args.trials,
        },
        "novelty": {"k": args.k, "archive_rate": args.archive_rate},
        "task_params": dict(parse_param(p) for p in args.param),
    }


def run_job(payload):
    cfg_dict, run_dir = payload
    t0 = time.time()
    out = execute_run(config_from_dict(cfg_dict), run_dir)
    return run_dir, out["best_fitness"], time.time() - t0


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--task", default="resource_sharing")
    ap.add_argument("--methods", nargs="*", default=list(METHODS))
    ap.add_argument("--runs", type=int, default=8)
    ap.add_argument("--population", type=int, default=50)
    ap.add_argument("--generations", type=int, default=60)
    ap.add_argument("--trials", type=int, default=10)
    ap.add_argument("--k", type=int, default=15)
    ap.add_argument("--archive-rate", type=float, default=0.025)
    ap.add_argument("--param", action="append", default=[],
                    help="task parameter override, e.g. --param max_steps=150")
    ap.add_argument("--parallel", type=int, default=2)
    ap.add_argument("--out", default="out/comparison")
    args = ap.parse_args()

    out_root = Path(args.out)
    jobs = []
    for method in args.methods:
        for i in range(args.runs):
            run_dir = out_root / method.replace("+", "plus") / f"run_{i:03d}"
            jobs.append((build_config(args, method, i), str(run_dir)))

    t0 = time.time()
    with get_context("spawn").Pool(args.parallel) as pool:
        for run_dir, best, dt in pool.imap_unordered(run_job, jobs):
            print(f"{run_dir}: best {best:.4f} ({dt:.0f}s)", flush=True)
    print(f"all runs finished in {time.time() - t0:.0f}s")

    run_dirs = [str(d) for _, d in jobs]
    return sdbc_main(["analyze", *run_dirs, "--out", str(out_root / "analysis")])


if __name__ == "__main__":
    raise SystemExit(main())
