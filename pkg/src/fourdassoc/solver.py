"""Limb-bundle parsing and bundle-Kruskal skeleton assembly.

Per limb type the graph is cut down to a :class:`LimbGraph` whose nodes are
2D limbs (one parsing edge each) and last-frame 3D limbs. Cliques of these
nodes are scored, extracted greedily and finally merged into persons in
decreasing score order, splitting bundles whose joints already belong to
different persons.
"""

from __future__ import annotations

import heapq
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _assembly, _cliques
from .detections import DetectionFrame, SkeletonTopology
from .geometry import Camera
from .graph import (
    TRACKING,
    Graph4D,
    GraphConfig,
    PriorSkeletons,
    build_graph,
    check_feasible,
    objective,
)


@dataclass(frozen=True)
class SolverConfig:
    beam_width: int = 4
    score_floor: float = 0.1
    # clutter rejection for finished persons
    min_views: int = 2
    min_joint_fraction: float = 0.4
    threads: int = 1

    def __post_init__(self):
        if self.beam_width < 1:
            raise ValueError("beam_width must be at least 1")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")


def welsch(x: float, c: float) -> float:
    if not c > 0:
        raise ValueError(f"Welsch scale must be positive, got {c}")
    r = x / c
    return 1.0 - math.exp(-0.5 * r * r)


def welsch_scale(n_views: int) -> float:
    return (n_views - 1) / 2.0


def size_term(size: int, n_views: int, w_size: float) -> float:
    """Clique-size term; with a single camera every clique has size 1 and the term is dropped."""
    if n_views < 2:
        return 0.0
    return w_size * welsch(size, welsch_scale(n_views))


def stop_score(n_views: int, cfg: GraphConfig, scfg: SolverConfig) -> float:
    return size_term(1, n_views, cfg.w_size) + scfg.score_floor


@dataclass(eq=False)
class LimbGraph:
    limb: int
    joints: tuple[int, int]
    n_views: int
    node_view: np.ndarray  # slot; n_views for 3D limbs
    node_m: np.ndarray  # cand of joint i (2D) / prior index (3D)
    node_n: np.ndarray  # cand of joint j (2D) / prior index (3D)
    unary: np.ndarray
    compat: np.ndarray
    pair: np.ndarray
    n_2d: int

    def __len__(self) -> int:
        return int(self.node_view.shape[0])

    @property
    def n_slots(self) -> int:
        return self.n_views + 1


def build_limb_graph(graph: Graph4D, limb: int) -> LimbGraph:
    cfg = graph.config
    i, j = graph.topology.limbs[limb]
    N = graph.n_views
    views, ms, ns, paf = [], [], [], []
    for v in range(N):
        m, n = np.nonzero(graph.parsing_mask[limb][v])
        views.append(np.full(m.shape[0], v, dtype=np.int64))
        ms.append(m)
        ns.append(n)
        paf.append(graph.parsing[limb][v][m, n])
    view2d = np.concatenate(views) if views else np.zeros(0, dtype=np.int64)
    m2d = np.concatenate(ms).astype(np.int64) if ms else np.zeros(0, dtype=np.int64)
    n2d = np.concatenate(ns).astype(np.int64) if ns else np.zeros(0, dtype=np.int64)
    gi = graph.offsets[i][view2d] + m2d
    gj = graph.offsets[j][view2d] + n2d
    L2 = view2d.shape[0]

    prior = graph.prior
    if len(prior):
        ks = np.nonzero(prior.valid[:, i] & prior.valid[:, j])[0].astype(np.int64)
    else:
        ks = np.zeros(0, dtype=np.int64)
    L = L2 + ks.shape[0]

    compat = np.zeros((L, L), dtype=bool)
    pair = np.zeros((L, L))
    if L2:
        compat[:L2, :L2] = graph.matching_mask[i][np.ix_(gi, gi)] & graph.matching_mask[j][np.ix_(gj, gj)]
        pair[:L2, :L2] = cfg.w_matching * (graph.matching[i][np.ix_(gi, gi)] + graph.matching[j][np.ix_(gj, gj)])
        if ks.shape[0]:
            tm = graph.tracking_mask[i][np.ix_(gi, ks)] & graph.tracking_mask[j][np.ix_(gj, ks)]
            tw = cfg.w_tracking * (graph.tracking[i][np.ix_(gi, ks)] + graph.tracking[j][np.ix_(gj, ks)])
            compat[:L2, L2:] = tm
            compat[L2:, :L2] = tm.T
            pair[:L2, L2:] = tw
            pair[L2:, :L2] = tw.T
    pair[~compat] = 0.0
    unary = np.zeros(L)
    unary[:L2] = cfg.w_parsing * (np.concatenate(paf) if paf else np.zeros(0))
    return LimbGraph(
        limb=limb, joints=(i, j), n_views=N,
        node_view=np.concatenate([view2d, np.full(ks.shape[0], N, dtype=np.int64)]),
        node_m=np.concatenate([m2d, ks]), node_n=np.concatenate([n2d, ks]),
        unary=unary, compat=compat, pair=pair, n_2d=L2,
    )


@dataclass(frozen=True)
class LimbBundle:
    """A set of same-limb observations: ``parts`` are (view, cand_i, cand_j) sorted by view."""

    limb: int
    parts: tuple[tuple[int, int, int], ...]
    prior: int = -1  # index into the prior skeletons, -1 if none
    score: float = 0.0

    @property
    def size(self) -> int:
        return len(self.parts) + (self.prior >= 0)

    @property
    def key(self) -> tuple:
        return (self.limb, self.parts, self.prior)


def write_bundles(path, bundles: Sequence[LimbBundle]) -> None:
    """One bundle per line: ``limb prior score view:cand_i:cand_j ...``."""
    with open(path, "w") as fh:
        fh.write("# limb prior score parts(view:cand_i:cand_j)\n")
        for b in bundles:
            parts = " ".join(f"{v}:{m}:{n}" for v, m, n in b.parts)
            fh.write(f"{b.limb} {b.prior} {b.score!r} {parts}".rstrip() + "\n")


def read_bundles(path) -> list[LimbBundle]:
    out = []
    with open(path) as fh:
        for line in fh:
            if not line.strip() or line.startswith("#"):
                continue
            tok = line.split()
            parts = tuple(tuple(int(x) for x in p.split(":")) for p in tok[3:])
            out.append(LimbBundle(int(tok[0]), parts, int(tok[1]), float(tok[2])))
    return out


def _bundle_from_slots(lg: LimbGraph, slots: np.ndarray, score: float) -> LimbBundle:
    parts = []
    prior = -1
    for a in slots:
        if a < 0:
            continue
        if a >= lg.n_2d:
            prior = int(lg.node_m[a])
        else:
            parts.append((int(lg.node_view[a]), int(lg.node_m[a]), int(lg.node_n[a])))
    return LimbBundle(lg.limb, tuple(sorted(parts)), prior, float(score))


def clique_energy(bundle: LimbBundle, graph: Graph4D) -> float:
    """Summed weighted edge energy inside a bundle, recomputed from the graph."""
    cfg = graph.config
    i, j = graph.topology.limbs[bundle.limb]
    E = 0.0
    for v, m, n in bundle.parts:
        E += cfg.w_parsing * graph.parsing[bundle.limb][v][m, n]
    for a in range(len(bundle.parts)):
        va, ma, na = bundle.parts[a]
        for b in range(a + 1, len(bundle.parts)):
            vb, mb, nb = bundle.parts[b]
            E += cfg.w_matching * (graph.matching[i][graph.gidx(i, va, ma), graph.gidx(i, vb, mb)]
                                   + graph.matching[j][graph.gidx(j, va, na), graph.gidx(j, vb, nb)])
    if bundle.prior >= 0:
        k = bundle.prior
        for v, m, n in bundle.parts:
            E += cfg.w_tracking * (graph.tracking[i][graph.gidx(i, v, m), k]
                                   + graph.tracking[j][graph.gidx(j, v, n), k])
    return float(E)


def clique_score(bundle: LimbBundle, graph: Graph4D) -> float:
    size = bundle.size
    if size == 0:
        return -math.inf
    return clique_energy(bundle, graph) / size + size_term(size, graph.n_views, graph.config.w_size)


def is_clique(bundle: LimbBundle, graph: Graph4D) -> bool:
    """All same-type edges inside the bundle exist, and at most one limb per view."""
    i, j = graph.topology.limbs[bundle.limb]
    views = [p[0] for p in bundle.parts]
    if len(set(views)) != len(views):
        return False
    for v, m, n in bundle.parts:
        if not graph.parsing_mask[bundle.limb][v][m, n]:
            return False
    for a in range(len(bundle.parts)):
        va, ma, na = bundle.parts[a]
        for b in range(a + 1, len(bundle.parts)):
            vb, mb, nb = bundle.parts[b]
            if not (graph.matching_mask[i][graph.gidx(i, va, ma), graph.gidx(i, vb, mb)]
                    and graph.matching_mask[j][graph.gidx(j, va, na), graph.gidx(j, vb, nb)]):
                return False
    if bundle.prior >= 0:
        for v, m, n in bundle.parts:
            if not (graph.tracking_mask[i][graph.gidx(i, v, m), bundle.prior]
                    and graph.tracking_mask[j][graph.gidx(j, v, n), bundle.prior]):
                return False
    return True


def _kernel_args(lg: LimbGraph, cfg: GraphConfig):
    N = lg.n_views
    use = N >= 2
    c = welsch_scale(N) if use else 1.0
    return (lg.node_view, lg.unary, np.ascontiguousarray(lg.compat), np.ascontiguousarray(lg.pair),
            lg.n_slots), (cfg.w_size, c, use)


def enumerate_cliques(lg: LimbGraph, cfg: GraphConfig, scfg: SolverConfig | None = None) -> list[LimbBundle]:
    """Every candidate clique produced by beam growth from every seed node.

    Duplicates reached from different seeds are reported once.
    """
    scfg = scfg or SolverConfig()
    if len(lg) == 0:
        return []
    (slot, unary, compat, pair, n_slots), (w, c, use) = _kernel_args(lg, cfg)
    slots, scores, _, _ = _cliques.enumerate_all(slot, unary, compat, pair, n_slots, scfg.beam_width, w, c, use)
    seen = {}
    for s, sc in zip(slots, scores):
        b = _bundle_from_slots(lg, s, sc)
        seen.setdefault(b.key, b)
    return sorted(seen.values(), key=lambda b: (-b.score, b.key))


def parse_limb_bundles(lg: LimbGraph, cfg: GraphConfig, scfg: SolverConfig | None = None) -> list[LimbBundle]:
    """Greedy extraction of node-disjoint limb bundles, best score first."""
    scfg = scfg or SolverConfig()
    if len(lg) == 0:
        return []
    (slot, unary, compat, pair, n_slots), (w, c, use) = _kernel_args(lg, cfg)
    stop = stop_score(lg.n_views, cfg, scfg)
    slots, scores = _cliques.greedy_parse(slot, lg.node_m, lg.node_n, unary, compat, pair, n_slots,
                                          scfg.beam_width, w, c, use, stop)
    return [_bundle_from_slots(lg, s, sc) for s, sc in zip(slots, scores)]


@dataclass(eq=False)
class Person:
    person_id: int
    prior_index: int  # -1 unless inherited from a last-frame skeleton
    assign: np.ndarray  # (N, J) candidate index, -1 when unassigned

    def views_per_joint(self) -> np.ndarray:
        return (self.assign >= 0).sum(axis=0)


@dataclass(eq=False)
class Assembly:
    persons: list[Person]
    labels: list[list[np.ndarray]]  # [view][joint] -> person slot per candidate, -1 if free
    n_views: int
    n_joints: int
    graph: Graph4D | None = None

    @classmethod
    def empty(cls, graph: Graph4D) -> "Assembly":
        sizes = np.diff(graph.offsets, axis=1).T.reshape(graph.n_views, graph.n_joints)
        return cls([], _label_views(sizes, []), graph.n_views, graph.n_joints)

    def relabel(self) -> None:
        """Rebuild ``labels`` from the persons (fresh arrays, earlier ones are left untouched)."""
        sizes = np.array([[a.shape[0] for a in view] for view in self.labels],
                         dtype=np.int64).reshape(self.n_views, self.n_joints)
        self.labels = _label_views(sizes, self.persons)


def _label_views(sizes: np.ndarray, persons: Sequence[Person]) -> list[list[np.ndarray]]:
    """Per (view, joint) label arrays as views into one flat array, filled from ``persons``."""
    N, J = sizes.shape
    base = np.zeros(N * J, dtype=np.int64)
    np.cumsum(sizes.ravel()[:-1], out=base[1:])
    base = base.reshape(N, J)
    flat = np.full(int(sizes.sum()), -1, dtype=np.int64)
    if persons:
        A = np.stack([p.assign for p in persons])
        p, v, j = np.nonzero(A >= 0)
        flat[base[v, j] + A[p, v, j]] = p
    return [[flat[base[v, j]:base[v, j] + sizes[v, j]] for j in range(J)] for v in range(N)]


class _Assembler:
    """Mutable state of one bundle-Kruskal run."""

    def __init__(self, graph: Graph4D):
        self.g = graph
        self.N = graph.n_views
        self.J = graph.n_joints
        self.persons: list[Person | None] = []
        self.labels = Assembly.empty(graph).labels
        self.prior_owner: dict[int, int] = {}
        self.log: list[tuple[str, LimbBundle]] = []

    def owners(self, b: LimbBundle) -> tuple[list[int], list[int]]:
        i, j = self.g.topology.limbs[b.limb]
        li = [int(self.labels[v][i][m]) for v, m, _ in b.parts]
        lj = [int(self.labels[v][j][n]) for v, _, n in b.parts]
        return li, lj

    def try_merge(self, b: LimbBundle) -> bool:
        g = self.g
        i, j = g.topology.limbs[b.limb]
        li, lj = self.owners(b)
        involved = sorted({p for p in li + lj if p >= 0}
                          | ({self.prior_owner[b.prior]} if b.prior in self.prior_owner else set()))
        priors = {self.persons[p].prior_index for p in involved if self.persons[p].prior_index >= 0}
        if b.prior >= 0:
            priors.add(b.prior)
        if len(priors) > 1:
            return False
        prior_k = priors.pop() if priors else -1

        # merged slot table, remembering where each entry came from (-1 = the bundle)
        merged = np.full((self.N, self.J), -1, dtype=np.int64)
        source = np.full((self.N, self.J), -2, dtype=np.int64)
        for p in involved:
            a = self.persons[p].assign
            clash = (merged >= 0) & (a >= 0) & (merged != a)
            if clash.any():
                return False
            take = a >= 0
            merged[take] = a[take]
            source[take] = p
        for (v, m, n), pi, pj in zip(b.parts, li, lj):
            for joint, cand, lab in ((i, m, pi), (j, n, pj)):
                if merged[v, joint] >= 0 and merged[v, joint] != cand:
                    return False
                if merged[v, joint] < 0:
                    merged[v, joint] = cand
                    source[v, joint] = lab if lab >= 0 else -1

        # joints where entries from different sources meet need cross-view checks;
        # joints joining a last-frame identity for the first time with a single
        # view need a temporal check
        joint_sources: dict[int, set] = {}
        for p in involved:
            for joint in np.nonzero((self.persons[p].assign >= 0).any(axis=0))[0]:
                joint_sources.setdefault(int(joint), set()).add(p)
        for pi, pj in zip(li, lj):
            if pi < 0:
                joint_sources.setdefault(i, set()).add(-1)
            if pj < 0:
                joint_sources.setdefault(j, set()).add(-1)

        def bound(src: int) -> bool:
            if src == -1:
                return b.prior == prior_k
            return self.persons[src].prior_index == prior_k

        for joint, srcs in joint_sources.items():
            if len(srcs) > 1:
                vs = np.nonzero(merged[:, joint] >= 0)[0]
                mask = g.matching_mask[joint]
                for x in range(vs.shape[0]):
                    for y in range(x + 1, vs.shape[0]):
                        vx, vy = vs[x], vs[y]
                        if source[vx, joint] == source[vy, joint]:
                            continue
                        if not mask[g.gidx(joint, vx, merged[vx, joint]), g.gidx(joint, vy, merged[vy, joint])]:
                            return False
            if prior_k >= 0 and g.prior.valid[prior_k, joint]:
                vs = np.nonzero(merged[:, joint] >= 0)[0]
                if vs.shape[0] == 1 and not bound(int(source[vs[0], joint])):
                    # a lone view cannot be cross-checked; require the temporal link instead
                    v = vs[0]
                    if not g.tracking_mask[joint][g.gidx(joint, v, merged[v, joint]), prior_k]:
                        return False

        if involved:
            target = involved[0]
            for p in involved[1:]:
                self.persons[p] = None
        else:
            target = len(self.persons)
            self.persons.append(Person(-1, -1, merged))
        person = self.persons[target]
        person.assign = merged
        person.prior_index = prior_k
        if prior_k >= 0:
            self.prior_owner[prior_k] = target
        vs, js = np.nonzero(merged >= 0)
        for v, jj in zip(vs, js):
            self.labels[v][jj][merged[v, jj]] = target
        for k, p in list(self.prior_owner.items()):
            if self.persons[p] is None:
                self.prior_owner[k] = target
        return True

    def split(self, b: LimbBundle) -> list[LimbBundle]:
        li, lj = self.owners(b)
        groups: dict[int, list] = {}
        for part, pi, pj in zip(b.parts, li, lj):
            owner = pi if pi >= 0 else pj
            groups.setdefault(owner, []).append(part)
        prior_holder = self.prior_owner.get(b.prior, -1) if b.prior >= 0 else -2
        frags: list[tuple[tuple, int]] = []
        if len(groups) >= 2:
            for owner in sorted(groups):
                k = b.prior if (b.prior >= 0 and owner == prior_holder) else -1
                frags.append((tuple(groups[owner]), k))
        elif b.prior >= 0:
            frags.append((b.parts, -1))
        elif len(b.parts) > 1:
            frags.extend(((p,), -1) for p in b.parts)
        out = []
        for parts, k in frags:
            if not parts:
                continue
            f = LimbBundle(b.limb, parts, k)
            out.append(LimbBundle(b.limb, parts, k, clique_score(f, self.g)))
        return out


def assemble_skeletons(bundles: Sequence[LimbBundle], graph: Graph4D,
                       next_id: int | None = None) -> Assembly:
    """Bundle Kruskal over :class:`LimbBundle` objects (see :func:`assemble_reference`)."""
    return assemble_reference(bundles, graph, next_id)[0]


def assemble_reference(bundles: Sequence[LimbBundle], graph: Graph4D,
                       next_id: int | None = None) -> tuple[Assembly, int]:
    """Bundle Kruskal: merge bundles into persons in decreasing score order.

    A bundle whose joints already carry different person labels (or that
    cannot join its person consistently) is split by owner, re-scored and
    pushed back. Persons inheriting a last-frame skeleton keep its id;
    new persons get ids from ``next_id`` upwards.
    """
    asm = _Assembler(graph)
    heap: list = []
    seq = 0
    for b in bundles:
        heapq.heappush(heap, (-b.score, b.key, seq, b))
        seq += 1
    while heap:
        _, _, _, b = heapq.heappop(heap)
        if asm.try_merge(b):
            asm.log.append(("merge", b))
            continue
        frags = asm.split(b)
        asm.log.append(("split", b))
        for f in frags:
            heapq.heappush(heap, (-f.score, f.key, seq, f))
            seq += 1

    prior = graph.prior
    if next_id is None:
        next_id = int(prior.person_ids.max()) + 1 if len(prior) else 0
    persons = []
    for p in asm.persons:
        if p is None:
            continue
        if p.prior_index >= 0:
            p.person_id = int(prior.person_ids[p.prior_index])
        else:
            p.person_id = next_id
            next_id += 1
        persons.append(p)
    out = Assembly(persons, asm.labels, graph.n_views, graph.n_joints, graph)
    out.relabel()
    return out, sum(1 for kind, _ in asm.log if kind == "split")


def keep_person(person: Person, scfg: SolverConfig) -> bool:
    views = person.views_per_joint()
    if not (views >= 2).any():
        return False
    if person.prior_index >= 0:
        return True
    return (views >= scfg.min_views).mean() >= scfg.min_joint_fraction


def keep_mask(persons: Sequence[Person], scfg: SolverConfig) -> np.ndarray:
    """:func:`keep_person` for many persons at once."""
    if not persons:
        return np.zeros(0, dtype=bool)
    views = (np.stack([p.assign for p in persons]) >= 0).sum(axis=1)  # (P, J)
    prior = np.array([p.prior_index >= 0 for p in persons])
    frac = (views >= scfg.min_views).mean(axis=1)
    return (views >= 2).any(axis=1) & (prior | (frac >= scfg.min_joint_fraction))


def drop_clutter(assembly: Assembly, scfg: SolverConfig) -> Assembly:
    keep = keep_mask(assembly.persons, scfg)
    persons = [p for p, k in zip(assembly.persons, keep) if k]
    out = Assembly(persons, assembly.labels, assembly.n_views, assembly.n_joints, assembly.graph)
    out.relabel()
    return out


def selection_from_assembly(assembly: Assembly, graph: Graph4D) -> np.ndarray:
    """0/1 edge selection induced by the persons: every edge inside one person."""
    e = graph.edges()
    sel = np.zeros(len(e), dtype=bool)
    if not len(e):
        return sel
    lab_a = np.array([assembly.labels[v][j][c] for v, j, c in zip(e.view_a, e.joint_a, e.cand_a)], dtype=np.int64)
    two_d = e.kind != TRACKING
    lab_b = np.full(len(e), -1, dtype=np.int64)
    idx = np.nonzero(two_d)[0]
    lab_b[idx] = [assembly.labels[e.view_b[k]][e.joint_b[k]][e.cand_b[k]] for k in idx]
    sel[two_d] = (lab_a[two_d] >= 0) & (lab_a[two_d] == lab_b[two_d])
    tr = np.nonzero(~two_d)[0]
    if tr.shape[0]:
        prior_of = np.array([p.prior_index for p in assembly.persons] + [-1], dtype=np.int64)
        sel[tr] = (lab_a[tr] >= 0) & (prior_of[lab_a[tr]] == e.cand_b[tr])
    return sel


@dataclass
class Diagnostics:
    build_ms: float = 0.0
    parse_ms: float = 0.0
    assemble_ms: float = 0.0
    n_edges: int = 0
    n_bundles: int = 0
    n_splits: int = 0
    n_persons: int = 0
    objective: float = 0.0
    feasible: bool = True
    bundles: list[LimbBundle] = field(default_factory=list, repr=False)
    packed_bundles: "PackedBundles | None" = field(default=None, repr=False)

    def all_bundles(self) -> list[LimbBundle]:
        if self.packed_bundles is not None:
            return self.packed_bundles.to_bundles()
        return list(self.bundles)

    @property
    def association_ms(self) -> float:
        return self.build_ms + self.parse_ms + self.assemble_ms

    def as_line(self) -> str:
        keys = ("build_ms", "parse_ms", "assemble_ms", "n_edges", "n_bundles", "n_splits",
                "n_persons", "objective", "feasible")
        vals = []
        for k in keys:
            v = getattr(self, k)
            vals.append(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}")
        return " ".join(vals)


_POOLS: dict[int, ThreadPoolExecutor] = {}


def _pool(threads: int) -> ThreadPoolExecutor:
    if threads not in _POOLS:
        _POOLS[threads] = ThreadPoolExecutor(max_workers=threads)
    return _POOLS[threads]


@dataclass(frozen=True)
class PackedBundles:
    """Bundles of all limbs as arrays: per-view candidates of both limb joints (-1 if absent)."""

    limb: np.ndarray  # (B,)
    m: np.ndarray  # (B, N)
    n: np.ndarray  # (B, N)
    prior: np.ndarray  # (B,)
    score: np.ndarray  # (B,)

    def __len__(self) -> int:
        return int(self.limb.shape[0])

    def to_bundles(self) -> list[LimbBundle]:
        out = []
        for l, m, n, k, sc in zip(self.limb, self.m, self.n, self.prior, self.score):
            vs = np.nonzero(m >= 0)[0]
            parts = tuple((int(v), int(m[v]), int(n[v])) for v in vs)
            out.append(LimbBundle(int(l), parts, int(k), float(sc)))
        return out


def _size_args(graph: Graph4D) -> tuple[float, float, bool]:
    N = graph.n_views
    use = N >= 2
    return graph.config.w_size, (welsch_scale(N) if use else 1.0), use


def _parse_packed_limb(graph: Graph4D, scfg: SolverConfig, limb: int):
    pk, cfg = graph.packed, graph.config
    i, j = graph.topology.limbs[limb]
    w, c, use = _size_args(graph)
    return _cliques.parse_packed(limb, i, j, pk.counts, pk.paf, pk.paf_mask, pk.mat, pk.mat_mask, pk.trk,
                                 pk.trk_mask, pk.prior_valid, graph.offsets, cfg.w_parsing, cfg.w_matching,
                                 cfg.w_tracking, scfg.beam_width, w, c, use,
                                 stop_score(graph.n_views, cfg, scfg))


def parse_packed_limbs(graph: Graph4D, scfg: SolverConfig) -> PackedBundles:
    """Compiled per-limb parsing; results are concatenated in limb order whatever the thread count."""
    def run(limb):
        return _parse_packed_limb(graph, scfg, limb)

    limbs = range(graph.topology.n_limbs)
    if scfg.threads > 1:
        results = list(_pool(scfg.threads).map(run, limbs))
    else:
        results = [run(l) for l in limbs]
    N = graph.n_views
    if not results:
        z = np.zeros(0, dtype=np.int64)
        return PackedBundles(z, np.zeros((0, N), np.int64), np.zeros((0, N), np.int64), z, np.zeros(0))
    limb_ids = np.concatenate([np.full(r[0].shape[0], l, dtype=np.int64) for l, r in enumerate(results)])
    return PackedBundles(limb_ids, np.concatenate([r[0] for r in results]), np.concatenate([r[1] for r in results]),
                         np.concatenate([r[2] for r in results]), np.concatenate([r[3] for r in results]))


def parse_all_limbs(graph: Graph4D, scfg: SolverConfig) -> list[LimbBundle]:
    """Reference route: Python limb graphs, compiled greedy extraction."""
    def run(limb):
        return parse_limb_bundles(build_limb_graph(graph, limb), graph.config, scfg)

    limbs = range(graph.topology.n_limbs)
    if scfg.threads > 1:
        results = list(_pool(scfg.threads).map(run, limbs))
    else:
        results = [run(l) for l in limbs]
    return [b for r in results for b in r]


def assemble_packed(bundles: PackedBundles, graph: Graph4D, next_id: int | None = None) -> tuple[Assembly, int]:
    """Compiled bundle Kruskal; same result as :func:`assemble_skeletons`. Also returns the split count."""
    pk, cfg = graph.packed, graph.config
    w, c, use = _size_args(graph)
    assign, prior_of, n_splits = _assembly.assemble(
        bundles.limb, bundles.m, bundles.n, bundles.prior, bundles.score, pk.limbs, pk.counts, graph.offsets,
        pk.paf, pk.mat, pk.mat_mask, pk.trk, pk.trk_mask, pk.prior_valid,
        cfg.w_parsing, cfg.w_matching, cfg.w_tracking, w, c, use)
    prior = graph.prior
    if next_id is None:
        next_id = int(prior.person_ids.max()) + 1 if len(prior) else 0
    persons = []
    for a, k in zip(assign, prior_of):
        if k >= 0:
            pid = int(prior.person_ids[k])
        else:
            pid = next_id
            next_id += 1
        persons.append(Person(pid, int(k), a.copy()))
    sizes = np.diff(graph.offsets, axis=1).T.reshape(graph.n_views, graph.n_joints)
    out = Assembly(persons, _label_views(sizes, persons), graph.n_views, graph.n_joints, graph)
    return out, int(n_splits)


def solve_graph(graph: Graph4D, scfg: SolverConfig, next_id: int | None = None,
                diag: Diagnostics | None = None, reference: bool = False) -> Assembly:
    """Parse and assemble one graph.

    ``reference=True`` runs the Python limb graphs and assembler instead of
    the compiled ones; both give the same persons.
    """
    diag = diag if diag is not None else Diagnostics()
    t0 = time.perf_counter()
    if reference or graph.packed is None:
        bundles = parse_all_limbs(graph, scfg)
        t1 = time.perf_counter()
        asm, n_splits = assemble_reference(bundles, graph, next_id)
        diag.bundles = bundles
        diag.n_bundles = len(bundles)
    else:
        packed = parse_packed_limbs(graph, scfg)
        t1 = time.perf_counter()
        asm, n_splits = assemble_packed(packed, graph, next_id)
        diag.packed_bundles = packed
        diag.n_bundles = len(packed)
    asm = drop_clutter(asm, scfg)
    t2 = time.perf_counter()
    diag.parse_ms = 1e3 * (t1 - t0)
    diag.assemble_ms = 1e3 * (t2 - t1)
    diag.n_splits = n_splits
    diag.n_persons = len(asm.persons)
    return asm


def solve_frame(frame: DetectionFrame, prior: PriorSkeletons | None, cams: Sequence[Camera],
                cfg: GraphConfig, topology: SkeletonTopology, scfg: SolverConfig | None = None,
                next_id: int | None = None, check: bool = True) -> tuple[Assembly, Diagnostics]:
    """Graph construction, per-limb bundle parsing and assembly for one frame."""
    scfg = scfg or SolverConfig()
    diag = Diagnostics()
    t0 = time.perf_counter()
    graph = build_graph(frame, prior, cams, cfg, topology)
    diag.build_ms = 1e3 * (time.perf_counter() - t0)
    asm = solve_graph(graph, scfg, next_id, diag)
    if check:
        sel = selection_from_assembly(asm, graph)
        diag.n_edges = len(graph.edges())
        diag.objective = objective(sel, graph, cfg)
        diag.feasible = check_feasible(sel, graph).feasible
    return asm, diag
