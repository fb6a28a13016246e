"""Run the full experiment grid and print the aggregated report.

120 runs: {threshold, frqi, neqr} x {F=2 S=1 R=4, F=4 S=2 R=10} x
{trainable, untrainable} x seeds 0-9, each 50 epochs of 100 steps on the
10000/200/1000 split.  Expect many hours of CPU time (the NEQR and
Threshold 2x2 groups dominate); use --jobs to spread runs over cores.
Finished runs are skipped, so an interrupted grid can be resumed.
"""

import argparse
import itertools
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from quanvnet.cli import main as cli

ENCODERS = ("threshold", "frqi", "neqr")
FILTERS = {2: (1, 4), 4: (2, 10)}  # F -> (stride, rotations)


def plan(out: Path, seeds: int):
    for enc, (f, (s, r)), trainable, seed in itertools.product(
        ENCODERS, FILTERS.items(), (True, False), range(seeds)
    ):
        tag = "trainable" if trainable else "untrainable"
        metrics = out / f"{enc}_f{f}_{tag}_seed{seed}.csv"
        argv = ["train", "--encoder", enc, "--filter", str(f), "--stride", str(s), "--rotations", str(r),
                "--seed", str(seed), "--trainable", str(trainable).lower(), "--metrics-out", str(metrics)]
        yield metrics, argv


def run_one(job):
    metrics, argv, extra = job
    cli(argv + extra)
    return metrics


def build_parser():
    p = argparse.ArgumentParser(
        description=__doc__.replace("%", "%%"), formatter_class=argparse.RawDescriptionHelpFormatter
    )
    p.add_argument("--out", default="grid", help="directory for per-run metrics CSVs")
    p.add_argument("--data-dir", help="IDX directory (default: $QUANVNET_DATA_DIR)")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--last-epochs", type=int, default=20)
    p.add_argument("--dry-run", action="store_true", help="list the runs without executing them")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    extra = ["--data-dir", args.data_dir] if args.data_dir else []
    jobs = []
    for metrics, run_argv in plan(out, args.seeds):
        state = "done" if metrics.exists() else "todo"
        print(f"run {state} {' '.join(run_argv)}")
        if state == "todo":
            jobs.append((metrics, run_argv, extra))
    if args.dry_run:
        return 0
    out.mkdir(parents=True, exist_ok=True)
    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        for metrics in pool.map(run_one, jobs):
            print(f"finished {metrics}", flush=True)
    return cli(["report", "--metrics-glob", str(out / "*.csv"), "--last-epochs", str(args.last_epochs)])


if __name__ == "__main__":
    sys.exit(main())
