"""Frame-by-frame reconstruction of a sequence in one of three association modes.

``full``
    4D association: last frame's fitted skeletons enter the graph as the
    prior, ids carry over, skeletons are refined with shape and temporal terms.
``no-tracking``
    The same solver without a prior, every frame on its own; 3D by
    triangulation.
``two-step``
    Each view is parsed on its own first, then parsed 2D persons are matched
    across views; 3D by triangulation.

The per-frame modes carry no identity from frame to frame: ids are
numbered per frame, unless ``link_gate`` enables :func:`link_identities`,
a nearest-skeleton linker between consecutive frames.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .detections import DetectionFrame, SkeletonTopology
from .geometry import Camera
from .graph import Graph4D, GraphConfig, PriorSkeletons, build_graph, check_feasible, objective
from .skelfit import (
    BoneLengthState,
    FitConfig,
    FitWarning,
    Skeleton3D,
    fit_parametric,
    triangulate_person,
    update_bone_lengths,
)
from .solver import (
    Assembly,
    Diagnostics,
    LimbGraph,
    Person,
    SolverConfig,
    assemble_skeletons,
    build_limb_graph,
    keep_person,
    parse_limb_bundles,
    selection_from_assembly,
    solve_frame,
)

MODES = ("full", "no-tracking", "two-step")


def prior_from_skeletons(skels: Sequence[Skeleton3D], n_joints: int) -> PriorSkeletons:
    skels = [s for s in skels if s.present.any()]
    if not skels:
        return PriorSkeletons.empty(n_joints)
    joints = np.stack([np.where(s.present[:, None], s.joints, 0.0) for s in skels])
    return PriorSkeletons(np.array([s.person_id for s in skels], dtype=np.int64), joints,
                          np.stack([s.present for s in skels]))


def _restrict_to_view(lg: LimbGraph, view: int, min_unary: float = 0.0) -> LimbGraph:
    keep = np.nonzero((lg.node_view == view) & (lg.unary >= min_unary))[0]
    return LimbGraph(lg.limb, lg.joints, lg.n_views, lg.node_view[keep], lg.node_m[keep], lg.node_n[keep],
                     lg.unary[keep], lg.compat[np.ix_(keep, keep)], lg.pair[np.ix_(keep, keep)], keep.shape[0])


def _affinity(a: Person, b: Person, graph: Graph4D) -> float:
    """Summed same-joint matching weights between two single-view persons."""
    va = int(np.nonzero((a.assign >= 0).any(axis=1))[0][0])
    vb = int(np.nonzero((b.assign >= 0).any(axis=1))[0][0])
    total = 0.0
    for j in np.nonzero((a.assign[va] >= 0) & (b.assign[vb] >= 0))[0]:
        total += graph.matching[j][graph.gidx(j, va, a.assign[va, j]), graph.gidx(j, vb, b.assign[vb, j])]
    return total


def solve_frame_two_step(frame: DetectionFrame, cams: Sequence[Camera], cfg: GraphConfig,
                         topology: SkeletonTopology, scfg: SolverConfig | None = None,
                         min_affinity: float = 1.0, min_paf: float = 0.5) -> tuple[Assembly, Diagnostics]:
    """Per-view greedy parsing, then greedy cross-view grouping of the parsed persons.

    Per-view parsing only accepts limbs with a PAF score of at least
    ``min_paf``, like the connection threshold of single-view parsers.
    Pairs of 2D persons from different views are visited by decreasing
    affinity; two groups are joined when they share no view.
    """
    scfg = scfg or SolverConfig()
    diag = Diagnostics()
    t0 = time.perf_counter()
    graph = build_graph(frame, None, cams, cfg, topology)
    t1 = time.perf_counter()
    N = graph.n_views
    singles: list[Person] = []
    n_bundles = 0
    for v in range(N):
        bundles = []
        for limb in range(topology.n_limbs):
            lg = _restrict_to_view(build_limb_graph(graph, limb), v, cfg.w_parsing * min_paf)
            bundles.extend(parse_limb_bundles(lg, cfg, scfg))
        n_bundles += len(bundles)
        asm_v = assemble_skeletons(bundles, graph, next_id=0)
        singles.extend(p for p in asm_v.persons if (p.assign >= 0).sum() >= 2)
    t2 = time.perf_counter()

    views_of = [int(np.nonzero((p.assign >= 0).any(axis=1))[0][0]) for p in singles]
    pairs = []
    for a in range(len(singles)):
        for b in range(a + 1, len(singles)):
            if views_of[a] != views_of[b]:
                w = _affinity(singles[a], singles[b], graph)
                if w >= min_affinity:
                    pairs.append((-w, a, b))
    pairs.sort()
    group = list(range(len(singles)))
    members = {a: {a} for a in range(len(singles))}
    gviews = {a: {views_of[a]} for a in range(len(singles))}
    for _, a, b in pairs:
        ga, gb = group[a], group[b]
        if ga == gb or gviews[ga] & gviews[gb]:
            continue
        for m in members[gb]:
            group[m] = ga
        members[ga] |= members.pop(gb)
        gviews[ga] |= gviews.pop(gb)
    persons = []
    for g in sorted(members):
        assign = np.full((N, topology.n_joints), -1, dtype=np.int64)
        for m in members[g]:
            take = singles[m].assign >= 0
            assign[take] = singles[m].assign[take]
        p = Person(len(persons), -1, assign)
        if keep_person(p, scfg):
            p.person_id = len(persons)
            persons.append(p)
    asm = Assembly.empty(graph)
    asm = Assembly(persons, asm.labels, N, topology.n_joints, graph)
    asm.relabel()
    t3 = time.perf_counter()
    diag.build_ms = 1e3 * (t1 - t0)
    diag.parse_ms = 1e3 * (t2 - t1)
    diag.assemble_ms = 1e3 * (t3 - t2)
    diag.n_bundles = n_bundles
    diag.n_persons = len(persons)
    sel = selection_from_assembly(asm, graph)
    diag.n_edges = len(graph.edges())
    diag.objective = objective(sel, graph, cfg)
    diag.feasible = check_feasible(sel, graph).feasible
    return asm, diag


def skeleton_distance(a: Skeleton3D, b: Skeleton3D) -> float:
    """Mean joint distance over joints present in both; inf if none are shared."""
    both = a.present & b.present
    if not both.any():
        return np.inf
    return float(np.linalg.norm(a.joints[both] - b.joints[both], axis=1).mean())


def link_identities(prev: Sequence[Skeleton3D], cur: Sequence[Skeleton3D], next_id: int,
                    gate: float = 0.5) -> int:
    """Give ``cur`` the ids of their nearest ``prev`` skeletons (one-to-one, within ``gate`` metres).

    Unlinked skeletons get fresh ids from ``next_id``; returns the next free id.
    """
    ids = [-1] * len(cur)
    if prev and cur:
        cost = np.array([[skeleton_distance(p, c) for c in cur] for p in prev])
        big = 1e6
        rows, cols = linear_sum_assignment(np.where(np.isfinite(cost), cost, big))
        for r, c in zip(rows, cols):
            if cost[r, c] <= gate:
                ids[c] = prev[r].person_id
    for c, skel in enumerate(cur):
        if ids[c] < 0:
            ids[c] = next_id
            next_id += 1
        skel.person_id = ids[c]
    return next_id


@dataclass
class FrameResult:
    frame: int
    skeletons: list[Skeleton3D]
    diagnostics: Diagnostics
    assembly: Assembly | None = field(default=None, repr=False)


class SequenceReconstructor:
    """Carries identities, last-frame skeletons and bone lengths from frame to frame."""

    def __init__(self, cams: Sequence[Camera], topology: SkeletonTopology, mode: str = "full",
                 graph_cfg: GraphConfig | None = None, solver_cfg: SolverConfig | None = None,
                 fit_cfg: FitConfig | None = None, link_gate: float | None = None):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
        self.cams = list(cams)
        self.topology = topology
        self.mode = mode
        self.graph_cfg = graph_cfg or GraphConfig()
        self.solver_cfg = solver_cfg or SolverConfig()
        self.fit_cfg = fit_cfg or FitConfig()
        self.link_gate = link_gate
        self.prev: list[Skeleton3D] = []
        self.bones: dict[int, BoneLengthState] = {}
        self.next_id = 0

    def _triangulate(self, asm: Assembly, frame: DetectionFrame) -> list[Skeleton3D]:
        out = []
        for p in asm.persons:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", FitWarning)
                skel = triangulate_person(p, frame, self.cams)
            if skel.present.any():
                out.append(skel)
        return out

    def step(self, frame: DetectionFrame) -> FrameResult:
        topo = self.topology
        if self.mode != "full":
            if self.mode == "two-step":
                asm, diag = solve_frame_two_step(frame, self.cams, self.graph_cfg, topo, self.solver_cfg)
            else:
                asm, diag = solve_frame(frame, None, self.cams, self.graph_cfg, topo, self.solver_cfg, next_id=0)
            skels = self._triangulate(asm, frame)
            if self.link_gate is not None:
                self.next_id = link_identities(self.prev, skels, self.next_id, self.link_gate)
                self.prev = skels
            return FrameResult(frame.frame, skels, diag, asm)

        prior = prior_from_skeletons(self.prev, topo.n_joints)
        asm, diag = solve_frame(frame, prior, self.cams, self.graph_cfg, topo, self.solver_cfg,
                                next_id=self.next_id)
        prev_by_id = {s.person_id: s for s in self.prev}
        out = []
        for p in asm.persons:
            self.next_id = max(self.next_id, p.person_id + 1)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", FitWarning)
                tri = triangulate_person(p, frame, self.cams)
                if not tri.present.any():
                    continue
                prev = prev_by_id.get(p.person_id) if p.prior_index >= 0 else None
                state = self.bones.get(p.person_id) if prev is not None else None
                if state is None:
                    # a returning or new person starts a fresh bone-length record
                    state = BoneLengthState.new(p.person_id, topo.n_limbs)
                skel, _ = fit_parametric(tri, prev, state, p, frame, self.cams, topo, self.fit_cfg)
            self.bones[p.person_id] = update_bone_lengths(state, tri, tri.views, topo,
                                                          self.fit_cfg.min_visibility)
            out.append(skel)
        alive = {s.person_id for s in out}
        self.bones = {k: v for k, v in self.bones.items() if k in alive}
        self.prev = out
        return FrameResult(frame.frame, out, diag, asm)

    def run(self, frames: Iterable[DetectionFrame]) -> Iterable[FrameResult]:
        for f in frames:
            yield self.step(f)


def reconstruct(frames: Iterable[DetectionFrame], cams: Sequence[Camera], topology: SkeletonTopology,
                mode: str = "full", graph_cfg: GraphConfig | None = None, solver_cfg: SolverConfig | None = None,
                fit_cfg: FitConfig | None = None, link_gate: float | None = None) -> list[FrameResult]:
    rec = SequenceReconstructor(cams, topology, mode, graph_cfg, solver_cfg, fit_cfg, link_gate)
    return list(rec.run(frames))
