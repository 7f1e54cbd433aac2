"""Per-frame association graph over 2D joint candidates and last-frame 3D joints.

Three edge families:

* parsing  - candidates of adjacent joint types in the same view, weight = PAF score
* matching - candidates of the same joint type in two views, weight from the
  distance between their viewing rays
* tracking - a previous-frame 3D joint and a current candidate of the same
  joint type, weight from the point-to-ray distance

Candidates of joint ``j`` are indexed globally across views: candidate ``m``
of view ``v`` has index ``offsets[j][v] + m``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .detections import DetectionFrame, SkeletonTopology
from .geometry import (
    Camera,
    back_project,
    line_line_distance,
    pairwise_line_distances,
    point_line_distance,
    point_line_distance_many,
)

PARSING, MATCHING, TRACKING = 0, 1, 2
EDGE_KINDS = ("parsing", "matching", "tracking")


class GraphConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GraphConfig:
    epipolar_norm: float = 0.2  # Z, meters
    tracking_norm: float = 0.2  # T, meters
    w_parsing: float = 3.0
    w_matching: float = 1.0
    w_tracking: float = 1.0
    w_size: float = 0.25  # clique-size term weight
    prune_epsilon: float = 0.05

    def __post_init__(self):
        if not (self.epipolar_norm > 0 and self.tracking_norm > 0):
            raise GraphConfigError("normalisation distances must be positive")
        if min(self.w_parsing, self.w_matching, self.w_tracking, self.w_size) < 0:
            raise GraphConfigError("weights must be non-negative")
        if not 0 <= self.prune_epsilon < 1:
            raise GraphConfigError("prune_epsilon must lie in [0, 1)")

    def kind_weights(self) -> np.ndarray:
        return np.array([self.w_parsing, self.w_matching, self.w_tracking])


@dataclass(frozen=True, eq=False)
class PriorSkeletons:
    """Last-frame 3D skeletons: ``joints`` is (K, J, 3), ``valid`` is (K, J)."""

    person_ids: np.ndarray
    joints: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        ids = np.asarray(self.person_ids, dtype=np.int64).reshape(-1)
        joints = np.asarray(self.joints, dtype=float)
        valid = np.asarray(self.valid, dtype=bool)
        if joints.ndim != 3 or joints.shape[0] != ids.shape[0] or valid.shape != joints.shape[:2]:
            raise ValueError("prior arrays have inconsistent shapes")
        if ids.size and not valid.any(axis=1).all():
            raise ValueError("every prior person needs at least one valid joint")
        if np.any(~np.isfinite(joints[valid])):
            raise ValueError("valid prior joints must be finite")
        object.__setattr__(self, "person_ids", ids)
        object.__setattr__(self, "joints", joints)
        object.__setattr__(self, "valid", valid)

    @classmethod
    def empty(cls, n_joints: int) -> "PriorSkeletons":
        return cls(np.zeros(0, dtype=np.int64), np.zeros((0, n_joints, 3)), np.zeros((0, n_joints), dtype=bool))

    def __len__(self) -> int:
        return int(self.person_ids.shape[0])


def _check_prob(x: float, what: str) -> float:
    x = float(x)
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"{what} must lie in [0, 1], got {x}")
    return x


def parsing_weight(paf_score: float) -> float:
    return _check_prob(paf_score, "PAF score")


def matching_weight(cam1: Camera, d1, cam2: Camera, d2, Z: float) -> float:
    if cam1.id == cam2.id:
        raise ValueError("matching edges connect two different cameras")
    dist = line_line_distance(back_project(cam1, d1), back_project(cam2, d2))
    return float(np.clip(1.0 - dist / Z, 0.0, 1.0))


def tracking_weight(X, cam: Camera, d, T: float) -> float:
    X = np.asarray(X, dtype=float)
    if not np.all(np.isfinite(X)):
        raise ValueError("3D joint must be finite")
    dist = point_line_distance(X, back_project(cam, d))
    return float(np.clip(1.0 - dist / T, 0.0, 1.0))


@dataclass(eq=False)
class EdgeTable:
    """Flat edge list. For tracking edges ``view_b`` is -1 and ``cand_b`` is the prior person index."""

    kind: np.ndarray
    joint_a: np.ndarray
    view_a: np.ndarray
    cand_a: np.ndarray
    joint_b: np.ndarray
    view_b: np.ndarray
    cand_b: np.ndarray
    weight: np.ndarray

    def __len__(self) -> int:
        return int(self.kind.shape[0])

    def save(self, path) -> None:
        with Path(path).open("w") as fh:
            fh.write("# kind joint_a view_a cand_a joint_b view_b cand_b weight\n")
            for row in zip(self.kind, self.joint_a, self.view_a, self.cand_a,
                           self.joint_b, self.view_b, self.cand_b, self.weight):
                fh.write(f"{EDGE_KINDS[row[0]]} {row[1]} {row[2]} {row[3]} {row[4]} {row[5]} {row[6]} {float(row[7])!r}\n")

    @classmethod
    def load(cls, path) -> "EdgeTable":
        cols: list[list] = [[] for _ in range(8)]
        for line in Path(path).read_text().splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split()
            cols[0].append(EDGE_KINDS.index(parts[0]))
            for c in range(1, 7):
                cols[c].append(int(parts[c]))
            cols[7].append(float(parts[7]))
        ints = [np.array(c, dtype=np.int64) for c in cols[:7]]
        return cls(*ints, np.array(cols[7], dtype=float))


@dataclass(frozen=True, eq=False)
class PackedGraph:
    """Dense, zero-padded copies of the graph weights.

    ``paf[l, v, m, n]`` and ``mat[j, a, b]`` / ``trk[j, a, k]`` use local and
    global candidate indices respectively; masks mark edges that survived pruning.
    """

    counts: np.ndarray  # (J, N)
    limbs: np.ndarray  # (n_limbs, 2)
    paf: np.ndarray  # (n_limbs, N, C, C)
    paf_mask: np.ndarray
    mat: np.ndarray  # (J, M, M)
    mat_mask: np.ndarray
    trk: np.ndarray  # (J, M, K)
    trk_mask: np.ndarray
    prior_valid: np.ndarray  # (K, J)


@dataclass(eq=False)
class Graph4D:
    cameras: tuple[Camera, ...]
    topology: SkeletonTopology
    config: GraphConfig
    prior: PriorSkeletons
    offsets: np.ndarray  # (J, N+1)
    cand_view: list[np.ndarray]
    cand_local: list[np.ndarray]
    pixels: list[np.ndarray]
    dirs: list[np.ndarray]
    parsing: list[list[np.ndarray]]  # [limb][view] -> (M_i, M_j)
    parsing_mask: list[list[np.ndarray]]
    matching: list[np.ndarray]  # [joint] -> (Mtot, Mtot)
    matching_mask: list[np.ndarray]
    tracking: list[np.ndarray]  # [joint] -> (Mtot, K)
    tracking_mask: list[np.ndarray]
    # the same weights as padded arrays for the compiled solver
    packed: "PackedGraph | None" = field(default=None, repr=False)
    _edges: EdgeTable | None = field(default=None, repr=False)

    @property
    def n_views(self) -> int:
        return len(self.cameras)

    @property
    def n_joints(self) -> int:
        return self.topology.n_joints

    def count(self, view: int, joint: int) -> int:
        return int(self.offsets[joint][view + 1] - self.offsets[joint][view])

    def gidx(self, joint: int, view: int, cand: int) -> int:
        return int(self.offsets[joint][view] + cand)

    def matching_block(self, joint: int, va: int, vb: int) -> np.ndarray:
        o = self.offsets[joint]
        return self.matching[joint][o[va]:o[va + 1], o[vb]:o[vb + 1]]

    def tracking_block(self, joint: int, view: int) -> np.ndarray:
        """Tracking weights of one view as an (M, K) matrix."""
        o = self.offsets[joint]
        return self.tracking[joint][o[view]:o[view + 1]]

    def edges(self) -> EdgeTable:
        if self._edges is None:
            self._edges = self._build_edge_table()
        return self._edges

    def _build_edge_table(self) -> EdgeTable:
        rows: list[np.ndarray] = []
        weights: list[np.ndarray] = []
        for l, (a, b) in enumerate(self.topology.limbs):
            for v in range(self.n_views):
                m, n = np.nonzero(self.parsing_mask[l][v])
                k = m.shape[0]
                rows.append(np.stack([np.full(k, PARSING), np.full(k, a), np.full(k, v), m,
                                      np.full(k, b), np.full(k, v), n], axis=1))
                weights.append(self.parsing[l][v][m, n])
        for j in range(self.n_joints):
            ga, gb = np.nonzero(np.triu(self.matching_mask[j]))
            k = ga.shape[0]
            rows.append(np.stack([np.full(k, MATCHING), np.full(k, j), self.cand_view[j][ga], self.cand_local[j][ga],
                                  np.full(k, j), self.cand_view[j][gb], self.cand_local[j][gb]], axis=1))
            weights.append(self.matching[j][ga, gb])
        for j in range(self.n_joints):
            g, kk = np.nonzero(self.tracking_mask[j])
            # order by (view, candidate, person)
            k = g.shape[0]
            rows.append(np.stack([np.full(k, TRACKING), np.full(k, j), self.cand_view[j][g], self.cand_local[j][g],
                                  np.full(k, j), np.full(k, -1), kk], axis=1))
            weights.append(self.tracking[j][g, kk])
        table = np.concatenate(rows).astype(np.int64) if rows else np.zeros((0, 7), dtype=np.int64)
        w = np.concatenate(weights) if weights else np.zeros(0)
        return EdgeTable(*[table[:, c].copy() for c in range(7)], w.astype(float))


def build_graph(frame: DetectionFrame, prior: PriorSkeletons | None, cams: Sequence[Camera],
                cfg: GraphConfig, topology: SkeletonTopology) -> Graph4D:
    """Construct all parsing, matching and tracking edges for one frame.

    Views follow the order of ``frame.views``; ``cams`` may contain extra
    cameras but must cover every view. Edges below ``cfg.prune_epsilon``
    are dropped. An empty or missing prior yields no tracking edges.
    """
    by_id = {c.id: c for c in cams}
    missing = [cid for cid in frame.camera_ids if cid not in by_id]
    if missing:
        raise GraphConfigError(f"no calibration for camera ids {missing}")
    cameras = tuple(by_id[cid] for cid in frame.camera_ids)
    J = topology.n_joints
    N = len(cameras)
    if prior is None:
        prior = PriorSkeletons.empty(J)
    if prior.joints.shape[1] != J:
        raise GraphConfigError("prior skeleton joint count does not match topology")
    K = len(prior)
    eps = cfg.prune_epsilon

    counts = np.array([[view.candidates[j].shape[0] for view in frame.views] for j in range(J)],
                      dtype=np.int64).reshape(J, N)
    offsets = np.zeros((J, N + 1), dtype=np.int64)
    offsets[:, 1:] = np.cumsum(counts, axis=1)
    totals = offsets[:, -1]
    mmax = int(totals.max()) if J else 0

    cand_view, cand_local, pixels, dirs = [], [], [], []
    # padded per-joint arrays for the batched distance computations
    O = np.zeros((J, mmax, 3))
    D = np.zeros((J, mmax, 3))
    D[:, :, 2] = 1.0
    V = np.full((J, mmax), -1, dtype=np.int64)
    centers = np.array([c.center for c in cameras]).reshape(N, 3)
    view_dirs = []
    for v, (cam, view) in enumerate(zip(cameras, frame.views)):
        allpix = np.concatenate([view.candidates[j][:, :2] for j in range(J)]) if J else np.zeros((0, 2))
        view_dirs.append(np.split(cam.ray_directions(allpix), np.cumsum(counts[:, v])[:-1]))
    for j in range(J):
        cv = np.repeat(np.arange(N), counts[j])
        cl = np.concatenate([np.arange(c) for c in counts[j]]) if N else np.zeros(0, dtype=np.int64)
        px = np.concatenate([frame.views[v].candidates[j][:, :2] for v in range(N)]) if N else np.zeros((0, 2))
        dj = np.concatenate([view_dirs[v][j] for v in range(N)]) if N else np.zeros((0, 3))
        cand_view.append(cv.astype(np.int64))
        cand_local.append(cl.astype(np.int64))
        pixels.append(px)
        dirs.append(dj)
        n = totals[j]
        if n:
            O[j, :n] = centers[cv]
            D[j, :n] = dj
            V[j, :n] = cv

    cmax = int(counts.max()) if counts.size else 0
    n_limbs = topology.n_limbs
    paf_pad = np.zeros((n_limbs, N, cmax, cmax))
    paf_pad_mask = np.zeros((n_limbs, N, cmax, cmax), dtype=bool)
    parsing, parsing_mask = [], []
    for l, (a, b) in enumerate(topology.limbs):
        pl, ml = [], []
        for v in range(N):
            p = frame.views[v].pafs[l]
            pm = p >= eps
            pl.append(p)
            ml.append(pm)
            paf_pad[l, v, :p.shape[0], :p.shape[1]] = p
            paf_pad_mask[l, v, :p.shape[0], :p.shape[1]] = pm
        parsing.append(pl)
        parsing_mask.append(ml)
    if paf_pad.size and (paf_pad.min() < 0 or paf_pad.max() > 1):
        l, v = np.argwhere((paf_pad < 0) | (paf_pad > 1))[0, :2]
        raise ValueError(f"PAF score outside [0, 1] (view {v}, limb {l})")

    matching, matching_mask = [], []
    w = np.zeros((J, mmax, mmax))
    mask = np.zeros((J, mmax, mmax), dtype=bool)
    if mmax:
        dist = pairwise_line_distances(O, D, V)
        w = np.clip(1.0 - dist / cfg.epipolar_norm, 0.0, 1.0)
        mask = np.isfinite(dist) & (w >= eps)
        w = np.where(mask, w, 0.0)
    for j in range(J):
        n = totals[j]
        if n:
            matching.append(w[j, :n, :n].copy())
            matching_mask.append(mask[j, :n, :n].copy())
        else:
            matching.append(np.zeros((0, 0)))
            matching_mask.append(np.zeros((0, 0), dtype=bool))

    tw = np.zeros((J, mmax, K))
    tm = np.zeros((J, mmax, K), dtype=bool)
    if K and mmax:
        # prior joints as (J, 1, K, 3) against padded rays (J, M, 1, 3)
        dist = point_line_distance_many(prior.joints.transpose(1, 0, 2)[:, None], O[:, :, None], D[:, :, None])
        tw = np.clip(1.0 - dist / cfg.tracking_norm, 0.0, 1.0)
        tm = prior.valid.T[:, None, :] & (V[:, :, None] >= 0) & (tw >= eps)
        tw = np.where(tm, tw, 0.0)
    tracking = [tw[j, :totals[j]].copy() for j in range(J)]
    tracking_mask = [tm[j, :totals[j]].copy() for j in range(J)]

    limbs = np.array(topology.limbs, dtype=np.int64).reshape(-1, 2)
    packed = PackedGraph(counts, limbs, paf_pad, paf_pad_mask, w, mask, tw, tm,
                         np.ascontiguousarray(prior.valid))
    return Graph4D(cameras, topology, cfg, prior, offsets, cand_view, cand_local, pixels, dirs,
                   parsing, parsing_mask, matching, matching_mask, tracking, tracking_mask, packed)


def objective(selection, graph: Graph4D, cfg: GraphConfig) -> float:
    """Weighted sum of the weights of the selected edges."""
    edges = graph.edges() if isinstance(graph, Graph4D) else graph
    sel = np.asarray(selection, dtype=bool).reshape(-1)
    if sel.shape[0] != len(edges):
        raise ValueError(f"selection has {sel.shape[0]} entries for {len(edges)} edges")
    total = 0.0
    for kind, w in enumerate(cfg.kind_weights()):
        pick = sel & (edges.kind == kind)
        if w:
            total += w * float(edges.weight[pick].sum())
    return total


@dataclass(frozen=True)
class Violation:
    kind: str
    detail: str


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    violations: tuple[Violation, ...] = ()

    def __bool__(self) -> bool:
        return self.feasible


def _dupes(keys: np.ndarray) -> np.ndarray:
    if keys.shape[0] == 0:
        return keys
    uniq, counts = np.unique(keys, axis=0, return_counts=True)
    return uniq[counts > 1]


def check_feasible(selection, graph) -> FeasibilityReport:
    """Check the one-edge-per-node constraints on a 0/1 edge selection.

    * parsing: a candidate is used by at most one selected limb of each type
    * matching: a candidate links to at most one candidate of any other view
    * tracking: a last-frame joint links to at most one candidate per view,
      and a candidate to at most one last-frame joint
    """
    edges = graph.edges() if isinstance(graph, Graph4D) else graph
    sel = np.asarray(selection, dtype=bool).reshape(-1)
    if sel.shape[0] != len(edges):
        raise ValueError(f"selection has {sel.shape[0]} entries for {len(edges)} edges")
    out: list[Violation] = []
    e = {name: getattr(edges, name)[sel] for name in
         ("kind", "joint_a", "view_a", "cand_a", "joint_b", "view_b", "cand_b")}

    p = e["kind"] == PARSING
    for side_j, side_c, other_j, label in (("joint_a", "cand_a", "joint_b", "first"),
                                          ("joint_b", "cand_b", "joint_a", "second")):
        keys = np.stack([e["joint_a"][p], e["joint_b"][p], e["view_a"][p], e[side_c][p]], axis=1)
        for ja, jb, v, c in _dupes(keys):
            node_j = ja if side_j == "joint_a" else jb
            out.append(Violation("parsing", f"candidate {c} of joint {node_j} in view {v} is the {label} "
                                            f"endpoint of several selected limbs ({ja}, {jb})"))

    m = e["kind"] == MATCHING
    for va, ca, vb in (("view_a", "cand_a", "view_b"), ("view_b", "cand_b", "view_a")):
        keys = np.stack([e["joint_a"][m], e[va][m], e[ca][m], e[vb][m]], axis=1)
        for j, v, c, v2 in _dupes(keys):
            out.append(Violation("matching", f"candidate {c} of joint {j} in view {v} matches several "
                                             f"candidates in view {v2}"))

    t = e["kind"] == TRACKING
    keys = np.stack([e["joint_a"][t], e["view_a"][t], e["cand_b"][t]], axis=1)
    for j, v, k in _dupes(keys):
        out.append(Violation("tracking", f"prior person {k}, joint {j} tracks several candidates in view {v}"))
    keys = np.stack([e["joint_a"][t], e["view_a"][t], e["cand_a"][t]], axis=1)
    for j, v, c in _dupes(keys):
        out.append(Violation("tracking", f"candidate {c} of joint {j} in view {v} tracks several prior persons"))
    return FeasibilityReport(not out, tuple(out))
