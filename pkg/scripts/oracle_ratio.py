"""Greedy objective against the exhaustive optimum on small instances.

Each instance is a 2-view frame of two persons' right arms (3-joint chain).
Prints, per miss probability, the share of instances whose greedy objective
reaches 0.9 of the optimum and the share solved optimally.

    python3 scripts/oracle_ratio.py --instances 200 --miss 0 0.05 0.1
"""

import argparse
import dataclasses
import time

import numpy as np

from fourdassoc.detections import chain_topology
from fourdassoc.eval import brute_force_solve
from fourdassoc.graph import GraphConfig, build_graph
from fourdassoc.solver import solve_frame
from fourdassoc.synth import oracle_instance, oracle_noise


def ratios(n: int, noise, cfg: GraphConfig) -> np.ndarray:
    topo = chain_topology(3)
    out = []
    for seed in range(n):
        cams, frame, _ = oracle_instance(seed, noise=noise)
        _, diag = solve_frame(frame, None, cams, cfg, topo)
        _, opt = brute_force_solve(build_graph(frame, None, cams, cfg, topo))
        out.append(diag.objective / opt if opt > 0 else 1.0)
    return np.array(out)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--instances", type=int, default=200)
    ap.add_argument("--miss", type=float, nargs="+", default=[0.0, 0.05, 0.1])
    ap.add_argument("--noiseless", action="store_true", help="also run clean instances")
    args = ap.parse_args()
    cfg = GraphConfig()
    print("noise\tmiss\t>=0.9\toptimal\tmin\tseconds")
    runs = [("noisy", dataclasses.replace(oracle_noise(True), miss_prob=m)) for m in args.miss]
    if args.noiseless:
        runs.append(("clean", oracle_noise(False)))
    for name, noise in runs:
        t0 = time.perf_counter()
        r = ratios(args.instances, noise, cfg)
        print(f"{name}\t{noise.miss_prob:g}\t{100 * np.mean(r >= 0.9):.1f}%\t"
              f"{100 * np.mean(r >= 1 - 1e-9):.1f}%\t{r.min():.3f}\t{time.perf_counter() - t0:.1f}")


if __name__ == "__main__":
    main()
