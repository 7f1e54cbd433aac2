"""Association timing (graph build, limb parsing, assembly) per frame.

Frames carry the previous frame's skeletons as prior, as in full mode.
Timing excludes I/O, 3D fitting and the warm-up frames that trigger
compilation. Reports median, minimum and 90th percentile with the
software environment.

    python3 scripts/benchmark.py --persons 5 --views 5 --frames 200 --repeats 3
"""

import argparse
import json

import numpy as np

from fourdassoc.cli import bench_association, bench_environment
from fourdassoc.solver import SolverConfig


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--persons", type=int, default=5)
    ap.add_argument("--views", type=int, default=5)
    ap.add_argument("--frames", type=int, default=200)
    ap.add_argument("--warmup", type=int, default=10)
    ap.add_argument("--repeats", type=int, default=3, help="independent runs; the best median is reported too")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--json")
    args = ap.parse_args()
    medians = []
    for r in range(args.repeats):
        t = bench_association(args.persons, args.views, args.frames, args.warmup, seed=r,
                              solver_cfg=SolverConfig(threads=args.threads))
        medians.append(float(np.median(t)))
        print(f"run {r}: median {np.median(t):.2f} ms, min {t.min():.2f} ms, p90 {np.percentile(t, 90):.2f} ms")
    doc = {"persons": args.persons, "views": args.views, "frames": args.frames, "threads": args.threads,
           "medians_ms": medians, "best_median_ms": min(medians), "environment": bench_environment()}
    print(json.dumps(doc, indent=1))
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(doc, fh, indent=1)


if __name__ == "__main__":
    main()
