"""Assembly errors as a function of the parsing-edge weight.

Solves single frames without a prior and counts ground-truth detections
whose person label disagrees with the label most of that person's
detections received (or that were left unassigned).

    python3 scripts/parsing_weight_sweep.py --weights 1 2 3 4 --frames 40
"""

import argparse

import numpy as np

from fourdassoc.detections import default_topology
from fourdassoc.graph import GraphConfig
from fourdassoc.solver import solve_frame
from fourdassoc.synth import NoiseConfig, SceneConfig, make_sequence


def label_errors(asm, index) -> tuple[int, int, int]:
    """(mislabelled, unassigned, total) over the ground-truth detections of one frame."""
    N, J, P = index.shape
    wrong = missing = total = 0
    for p in range(P):
        labels = np.array([asm.labels[v][j][index[v, j, p]] for v in range(N) for j in range(J)
                           if index[v, j, p] >= 0])
        if labels.size == 0:
            continue
        assigned = labels[labels >= 0]
        owner = np.bincount(assigned).argmax() if assigned.size else -1
        wrong += int(np.sum((labels >= 0) & (labels != owner)))
        missing += int(np.sum(labels < 0))
        total += labels.size
    return wrong, missing, total


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--weights", type=float, nargs="+", default=[1.0, 2.0, 3.0, 4.0])
    ap.add_argument("--frames", type=int, default=40)
    ap.add_argument("--persons", type=int, default=4)
    ap.add_argument("--views", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    topo = default_topology()
    cams, frames, gt = make_sequence(SceneConfig(n_persons=args.persons, n_views=args.views,
                                                 n_frames=args.frames), NoiseConfig(), args.seed)
    print("w_parsing\tmislabelled%\tunassigned%")
    for w in args.weights:
        cfg = GraphConfig(w_parsing=w)
        sums = np.zeros(3)
        for t, f in enumerate(frames):
            asm, _ = solve_frame(f, None, cams, cfg, topo, check=False)
            sums += label_errors(asm, gt.index[t])
        print(f"{w:g}\t{100 * sums[0] / sums[2]:.2f}\t{100 * sums[1] / sums[2]:.2f}")


if __name__ == "__main__":
    main()
