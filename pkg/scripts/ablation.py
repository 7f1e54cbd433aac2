"""Compare the three association modes on the synthetic benchmark.

Prints mean PCP, precision, recall and id switches per mode over several
seeds, for the default occluder radius and a heavier one.

    python3 scripts/ablation.py --seeds 5 --frames 300
"""

import argparse

import numpy as np

from fourdassoc.detections import default_topology
from fourdassoc.eval import gt_frames, id_switches, pcp, precision_recall
from fourdassoc.pipeline import MODES, reconstruct
from fourdassoc.synth import NoiseConfig, SceneConfig, make_sequence


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--frames", type=int, default=300)
    ap.add_argument("--persons", type=int, default=4)
    ap.add_argument("--views", type=int, default=5)
    ap.add_argument("--radius", type=float, nargs="+", default=[0.15, 0.3], help="occluder radii (m)")
    args = ap.parse_args()
    topo = default_topology()
    scene = SceneConfig(n_persons=args.persons, n_views=args.views, n_frames=args.frames)
    print("radius\tmode\tPCP\tprecision\trecall\tid_switches")
    for radius in args.radius:
        noise = NoiseConfig(blocking_radius=radius)
        for mode in MODES:
            rows = []
            for seed in range(args.seeds):
                cams, frames, gt = make_sequence(scene, noise, seed)
                pred = [r.skeletons for r in reconstruct(frames, cams, topo, mode)]
                ref = gt_frames(gt)
                rows.append((pcp(pred, ref, topo).average, *precision_recall(pred, ref, n_joints=topo.n_joints),
                             id_switches(pred, ref, n_joints=topo.n_joints)))
            m = np.mean(rows, axis=0)
            print(f"{radius:g}\t{mode}\t{m[0]:.2f}\t{m[1]:.2f}\t{m[2]:.2f}\t{m[3]:.1f}")


if __name__ == "__main__":
    main()
