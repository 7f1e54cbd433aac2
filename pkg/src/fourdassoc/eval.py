"""Accuracy metrics, identity tracking checks and an exhaustive association oracle.

Predicted persons are matched to ground-truth actors per frame by minimum
total mean-joint-distance (Hungarian), ignoring pairs further apart than a
gating radius. All metrics count joints and limbs over all frames.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .detections import SkeletonTopology
from .graph import TRACKING, EdgeTable, Graph4D, GraphConfig, objective

GATE_M = 1.0


class EvaluationError(ValueError):
    pass


class InstanceTooLarge(RuntimeError):
    pass


@dataclass(eq=False)
class PoseFrame:
    """Persons of one frame as arrays; absent joints are NaN."""

    ids: np.ndarray  # (P,)
    joints: np.ndarray  # (P, J, 3)

    @classmethod
    def from_skeletons(cls, skels, n_joints: int) -> "PoseFrame":
        if not skels:
            return cls(np.zeros(0, dtype=np.int64), np.zeros((0, n_joints, 3)))
        joints = np.stack([np.where(s.present[:, None], s.joints, np.nan) for s in skels])
        return cls(np.array([s.person_id for s in skels], dtype=np.int64), joints)

    @classmethod
    def from_array(cls, joints, ids=None) -> "PoseFrame":
        joints = np.asarray(joints, dtype=float)
        ids = np.arange(joints.shape[0]) if ids is None else np.asarray(ids, dtype=np.int64)
        return cls(ids, joints)


def _as_frames(seq, n_joints: int | None = None) -> list[PoseFrame]:
    out = []
    for item in seq:
        if isinstance(item, PoseFrame):
            out.append(item)
        elif isinstance(item, np.ndarray):
            out.append(PoseFrame.from_array(item))
        else:
            if n_joints is None:
                n_joints = item[0].n_joints if item else 0
            out.append(PoseFrame.from_skeletons(item, n_joints))
    return out


def match_frame(pred: PoseFrame, gt: PoseFrame, gate: float = GATE_M) -> dict[int, int]:
    """GT row -> pred row, minimising mean distance over commonly present joints."""
    P, Q = gt.joints.shape[0], pred.joints.shape[0]
    if P == 0 or Q == 0:
        return {}
    diff = np.linalg.norm(gt.joints[:, None] - pred.joints[None], axis=-1)  # (P, Q, J)
    with np.errstate(invalid="ignore"):
        valid = np.isfinite(diff)
        cnt = valid.sum(axis=-1)
        cost = np.where(cnt > 0, np.where(valid, diff, 0.0).sum(axis=-1) / np.maximum(cnt, 1), np.inf)
    big = 1e6
    gated = np.where(cost <= gate, cost, big)
    rows, cols = linear_sum_assignment(gated)
    return {int(r): int(c) for r, c in zip(rows, cols) if gated[r, c] < big}


def _check_aligned(pred, gt) -> None:
    if len(pred) != len(gt):
        raise EvaluationError(f"sequences are not aligned: {len(pred)} predicted vs {len(gt)} GT frames")


@dataclass
class PCPResult:
    per_actor: np.ndarray
    average: float
    correct: int
    total: int


def pcp(pred_seq, gt_seq, topology: SkeletonTopology, alpha: float = 0.5, gate: float = GATE_M) -> PCPResult:
    """Percentage of limbs whose two endpoints are within ``alpha`` x GT limb length."""
    pred = _as_frames(pred_seq, topology.n_joints)
    gt = _as_frames(gt_seq, topology.n_joints)
    _check_aligned(pred, gt)
    if not gt or all(g.joints.shape[0] == 0 for g in gt):
        raise EvaluationError("ground truth is empty")
    n_actor = max(g.joints.shape[0] for g in gt)
    correct = np.zeros(n_actor)
    total = np.zeros(n_actor)
    limbs = np.array(topology.limbs, dtype=np.int64).reshape(-1, 2)
    for p_f, g_f in zip(pred, gt):
        m = match_frame(p_f, g_f, gate)
        for a in range(g_f.joints.shape[0]):
            G = g_f.joints[a]
            ok_gt = np.isfinite(G[limbs[:, 0]]).all(axis=1) & np.isfinite(G[limbs[:, 1]]).all(axis=1)
            total[a] += ok_gt.sum()
            if a not in m:
                continue
            X = p_f.joints[m[a]]
            L = np.linalg.norm(G[limbs[:, 0]] - G[limbs[:, 1]], axis=1)
            with np.errstate(invalid="ignore"):
                e0 = np.linalg.norm(X[limbs[:, 0]] - G[limbs[:, 0]], axis=1)
                e1 = np.linalg.norm(X[limbs[:, 1]] - G[limbs[:, 1]], axis=1)
                good = ok_gt & (e0 <= alpha * L) & (e1 <= alpha * L)
            correct[a] += good.sum()
    with np.errstate(invalid="ignore", divide="ignore"):
        per = np.where(total > 0, 100.0 * correct / total, np.nan)
    avg = float(np.nanmean(per)) if np.isfinite(per).any() else 0.0
    return PCPResult(per, avg, int(correct.sum()), int(total.sum()))


def precision_recall(pred_seq, gt_seq, threshold: float = 0.2, gate: float = GATE_M,
                     n_joints: int | None = None) -> tuple[float, float]:
    """Joint-level precision and recall in percent; unmatched predictions count as wrong."""
    pred = _as_frames(pred_seq, n_joints)
    gt = _as_frames(gt_seq, n_joints)
    _check_aligned(pred, gt)
    correct = est = total = 0
    for p_f, g_f in zip(pred, gt):
        est += int(np.isfinite(p_f.joints).all(axis=-1).sum())
        total += int(np.isfinite(g_f.joints).all(axis=-1).sum())
        for a, q in match_frame(p_f, g_f, gate).items():
            with np.errstate(invalid="ignore"):
                d = np.linalg.norm(p_f.joints[q] - g_f.joints[a], axis=-1)
            correct += int((d <= threshold).sum())
    precision = 100.0 * correct / est if est else 0.0
    recall = 100.0 * correct / total if total else 0.0
    return precision, recall


def id_switches(pred_seq, gt_seq, gate: float = GATE_M, n_joints: int | None = None) -> int:
    """Frames in which a GT actor's matched predicted id differs from its last matched id."""
    pred = _as_frames(pred_seq, n_joints)
    gt = _as_frames(gt_seq, n_joints)
    _check_aligned(pred, gt)
    last: dict[int, int] = {}
    switches = 0
    for p_f, g_f in zip(pred, gt):
        for a, q in match_frame(p_f, g_f, gate).items():
            actor = int(g_f.ids[a])
            pid = int(p_f.ids[q])
            if actor in last and last[actor] != pid:
                switches += 1
            last[actor] = pid
    return switches


@dataclass
class MatchReport:
    pcp_per_actor: list[float]
    pcp_average: float
    precision: float
    recall: float
    id_switches: int
    alpha: float = 0.5
    threshold: float = 0.2
    objectives: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pcp_per_actor"] = [None if not np.isfinite(x) else round(float(x), 4) for x in self.pcp_per_actor]
        for k in ("pcp_average", "precision", "recall"):
            d[k] = round(float(d[k]), 4)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def table(self) -> str:
        lines = [f"{'metric':<22}{'value':>10}"]
        for a, v in enumerate(self.pcp_per_actor):
            lines.append(f"{f'PCP actor {a}':<22}{v:>10.2f}")
        lines.append(f"{'PCP average':<22}{self.pcp_average:>10.2f}")
        lines.append(f"{f'precision @{self.threshold:g} m':<22}{self.precision:>10.2f}")
        lines.append(f"{f'recall @{self.threshold:g} m':<22}{self.recall:>10.2f}")
        lines.append(f"{'id switches':<22}{self.id_switches:>10d}")
        return "\n".join(lines)


def evaluate(pred_seq, gt_seq, topology: SkeletonTopology, alpha: float = 0.5, threshold: float = 0.2,
             gate: float = GATE_M) -> MatchReport:
    pred = _as_frames(pred_seq, topology.n_joints)
    gt = _as_frames(gt_seq, topology.n_joints)
    res = pcp(pred, gt, topology, alpha, gate)
    prec, rec = precision_recall(pred, gt, threshold, gate)
    return MatchReport([float(x) for x in res.per_actor], res.average, prec, rec,
                       id_switches(pred, gt, gate), alpha, threshold)


def gt_frames(gt) -> list[PoseFrame]:
    """Pose frames from a synth ``GroundTruth``."""
    return [PoseFrame(gt.person_ids, gt.joints[t]) for t in range(gt.n_frames)]


# ---------------------------------------------------------------------------
# exhaustive oracle


def brute_force_solve(graph_or_edges: Graph4D | EdgeTable, cfg: GraphConfig | None = None,
                      cap: int = 10_000_000) -> tuple[np.ndarray, float]:
    """Exact maximum of the association objective by enumerating person partitions.

    Items are prior persons and every 2D candidate touched by an edge. A
    partition puts items into persons such that no person holds two prior
    skeletons or two candidates of the same (view, joint); the selection
    is every edge inside one person. Branch and bound with an optimistic
    bound keeps the search small; more than ``cap`` search nodes raises
    :class:`InstanceTooLarge`.
    """
    if isinstance(graph_or_edges, Graph4D):
        e = graph_or_edges.edges()
        cfg = cfg or graph_or_edges.config
    else:
        e = graph_or_edges
        cfg = cfg or GraphConfig()
    n_e = len(e)
    if n_e == 0:
        return np.zeros(0, dtype=bool), 0.0
    w = cfg.kind_weights()[e.kind] * e.weight

    # items: priors first (key (-1, k)), then candidates by (joint, view, cand)
    keys: dict[tuple, int] = {}
    tr = e.kind == TRACKING
    for k in sorted(set(int(x) for x in e.cand_b[tr])):
        keys[("p", k)] = len(keys)
    cand_keys = set()
    for k in range(n_e):
        cand_keys.add((int(e.joint_a[k]), int(e.view_a[k]), int(e.cand_a[k])))
        if not tr[k]:
            cand_keys.add((int(e.joint_b[k]), int(e.view_b[k]), int(e.cand_b[k])))
    for key in sorted(cand_keys):
        keys[("c",) + key] = len(keys)
    n = len(keys)
    item_a = np.array([keys[("c", int(e.joint_a[k]), int(e.view_a[k]), int(e.cand_a[k]))] for k in range(n_e)])
    item_b = np.array([keys[("p", int(e.cand_b[k]))] if tr[k] else
                       keys[("c", int(e.joint_b[k]), int(e.view_b[k]), int(e.cand_b[k]))] for k in range(n_e)])
    # cannot-link class per item: priors share one class, candidates by (view, joint)
    klass = [None] * n
    for key, i in keys.items():
        klass[i] = ("p",) if key[0] == "p" else (key[2], key[1])
    W = np.zeros((n, n))
    np.add.at(W, (item_a, item_b), w)
    np.add.at(W, (item_b, item_a), w)
    # optimistic bound: every remaining item collects all its positive edges to earlier items
    earlier = np.array([np.clip(W[i, :i], 0, None).sum() for i in range(n)])
    suffix = np.concatenate([np.cumsum(earlier[::-1])[::-1], [0.0]])

    group_of = np.full(n, -1, dtype=np.int64)
    best = {"value": -1.0, "groups": None}
    visits = 0
    groups: list[list[int]] = []
    gclass: list[set] = []

    def rec(i: int, value: float) -> None:
        nonlocal visits
        visits += 1
        if visits > cap:
            raise InstanceTooLarge(f"instance too large: more than {cap} search nodes")
        if value + suffix[i] <= best["value"] + 1e-12:
            return
        if i == n:
            best["value"] = value
            best["groups"] = group_of.copy()
            return
        options = []
        for g, members in enumerate(groups):
            if klass[i] in gclass[g]:
                continue
            options.append((W[i, members].sum(), g))
        # try the most rewarding group first so good incumbents appear early
        options.sort(key=lambda t: (-t[0], t[1]))
        for gain, g in options:
            groups[g].append(i)
            gclass[g].add(klass[i])
            group_of[i] = g
            rec(i + 1, value + gain)
            groups[g].pop()
            gclass[g].discard(klass[i])
        groups.append([i])
        gclass.append({klass[i]})
        group_of[i] = len(groups) - 1
        rec(i + 1, value)
        groups.pop()
        gclass.pop()
        group_of[i] = -1

    rec(0, 0.0)
    g = best["groups"]
    sel = g[item_a] == g[item_b]
    return sel, float(objective(sel, e, cfg))
