import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fourdassoc.detections import DetectionFrame, ViewDetections, chain_topology, default_topology
from fourdassoc.geometry import look_at
from fourdassoc.graph import GraphConfig, PriorSkeletons, build_graph
from fourdassoc.pipeline import SequenceReconstructor, prior_from_skeletons
from fourdassoc.solver import (
    LimbBundle,
    LimbGraph,
    PackedBundles,
    Person,
    SolverConfig,
    assemble_packed,
    assemble_reference,
    assemble_skeletons,
    build_limb_graph,
    clique_energy,
    clique_score,
    enumerate_cliques,
    is_clique,
    keep_mask,
    keep_person,
    parse_all_limbs,
    parse_limb_bundles,
    parse_packed_limbs,
    read_bundles,
    size_term,
    solve_frame,
    solve_graph,
    stop_score,
    welsch,
    welsch_scale,
    write_bundles,
)
from fourdassoc.synth import ARM_CHAIN, NoiseConfig, SceneConfig, generate_scene, make_sequence, render_detections


# -- reference implementations used as oracles ------------------------------

def _penalty(size: int, n_views: int, w_size: float) -> float:
    if n_views < 2:
        return 0.0
    x = size / ((n_views - 1) / 2.0)
    return w_size * (1.0 - math.exp(-0.5 * x * x))


def _better(a, b) -> bool:
    """Higher score first, then the lexicographically smaller slot vector."""
    return a[1] > b[1] or (a[1] == b[1] and a[0] < b[0])


def oracle_grow(lg: LimbGraph, s: int, alive, beam: int, w_size: float):
    """Beam growth from one seed, written from the documented procedure.

    Each partial clique keeps the nodes that may still join it with their
    accumulated gain (unary plus pair weights towards all members, added
    in insertion order). Children are deduplicated by slot vector (first
    one wins); the top ``beam`` children by score, then by slot vector,
    survive to the next size.
    """
    S, N, slot = lg.n_slots, lg.n_views, lg.node_view
    root = [-1] * S
    root[slot[s]] = s
    opts = [(b, lg.unary[b] + lg.pair[s, b]) for b in range(len(lg))
            if lg.compat[s, b] and alive[b] and slot[b] != slot[s]]
    level = [(tuple(root), float(lg.unary[s]), opts)]
    out = [(tuple(root), lg.unary[s] + _penalty(1, N, w_size))]
    for size in range(2, S + 1):
        children, seen = [], set()
        for slots, E, options in level:
            for b, g in options:
                child = list(slots)
                child[slot[b]] = b
                child = tuple(child)
                if child not in seen:
                    seen.add(child)
                    children.append((child, E + g, options, b))
        if not children:
            break
        pen = _penalty(size, N, w_size)
        ranked = sorted(((E / size + pen, child, E, options, b) for child, E, options, b in children),
                        key=lambda t: (-t[0], t[1]))
        level = []
        for score, child, E, options, b in ranked[:beam]:
            kept = [(d, g + lg.pair[b, d]) for d, g in options if slot[d] != slot[b] and lg.compat[b, d]]
            level.append((child, E, kept))
            out.append((child, score))
    return out


def oracle_parse(lg: LimbGraph, cfg: GraphConfig, scfg: SolverConfig):
    """Greedy extraction that re-grows every surviving seed after each removal."""
    alive = np.ones(len(lg), dtype=bool)
    stop = stop_score(lg.n_views, cfg, scfg)
    out = []
    while True:
        best = None
        for s in range(len(lg)):
            if not alive[s]:
                continue
            cands = oracle_grow(lg, s, alive, scfg.beam_width, cfg.w_size)
            top = cands[0]
            for c in cands[1:]:
                if _better(c, top):
                    top = c
            if best is None or _better(top, best):
                best = top
        if best is None or not best[1] > stop:
            return out
        out.append(best)
        for a in best[0]:
            if a < 0:
                continue
            same = (lg.node_view == lg.node_view[a]) & ((lg.node_m == lg.node_m[a]) | (lg.node_n == lg.node_n[a]))
            alive &= ~same


def as_bundle(lg: LimbGraph, slots, score) -> LimbBundle:
    parts, prior = [], -1
    for a in slots:
        if a < 0:
            continue
        if lg.node_view[a] == lg.n_views:
            prior = int(lg.node_m[a])
        else:
            parts.append((int(lg.node_view[a]), int(lg.node_m[a]), int(lg.node_n[a])))
    return LimbBundle(lg.limb, tuple(sorted(parts)), prior, float(score))


def brute_force_cliques(lg: LimbGraph, w_size: float):
    """Every set of pairwise compatible nodes with at most one node per slot, with its score."""
    out = []
    L = len(lg)
    for r in range(1, lg.n_slots + 1):
        for combo in itertools.combinations(range(L), r):
            if len({lg.node_view[a] for a in combo}) < r:
                continue
            if not all(lg.compat[a, b] for a, b in itertools.combinations(combo, 2)):
                continue
            E = sum(lg.unary[a] for a in combo) + sum(lg.pair[a, b] for a, b in itertools.combinations(combo, 2))
            slots = [-1] * lg.n_slots
            for a in combo:
                slots[lg.node_view[a]] = a
            out.append((tuple(slots), E / r + _penalty(r, lg.n_views, w_size)))
    return out


def random_limb_graph(seed: int, quantized: bool) -> LimbGraph:
    """Random limb graph in the documented node order; quantized weights create exact ties."""
    rng = np.random.default_rng(seed)
    N = int(rng.integers(1, 5))
    view, ms, ns = [], [], []
    for v in range(N):
        pairs = sorted({(int(rng.integers(0, 3)), int(rng.integers(0, 3))) for _ in range(rng.integers(0, 5))})
        for m, n in pairs:
            view.append(v)
            ms.append(m)
            ns.append(n)
    L2 = len(view)
    K = int(rng.integers(0, 3))
    view += [N] * K
    ms += list(range(K))
    ns += list(range(K))
    L = L2 + K
    view, ms, ns = (np.array(a, dtype=np.int64) for a in (view, ms, ns))

    def draw(size, hi):
        if quantized:
            return rng.integers(0, int(4 * hi) + 1, size=size) / 4.0
        return rng.uniform(0.0, hi, size=size)

    compat = rng.random((L, L)) < 0.6
    compat = np.triu(compat, 1)
    compat = compat | compat.T
    compat &= view[:, None] != view[None, :]
    pair = np.triu(draw((L, L), 2.0), 1)
    pair = (pair + pair.T) * compat
    unary = np.zeros(L)
    unary[:L2] = draw(L2, 3.0)
    return LimbGraph(0, (0, 1), N, view, ms, ns, unary, compat, pair, L2)


def two_view_cams():
    return [look_at(k, (5 * np.cos(a), 5 * np.sin(a), 2.0), (0.0, 0.0, 1.0), 1000.0)
            for k, a in enumerate((0.0, 1.5, 3.0))]


def single_limb_frame(n_views: int, pafs_per_view, shift=None):
    """Chain of 2 joints; view v has one candidate per joint and PAF ``pafs_per_view[v]`` (None = empty).

    ``shift[v]`` moves view v's candidates horizontally by that many pixels.
    """
    shift = shift or [0.0] * n_views
    topo = chain_topology(2)
    views = []
    for v in range(n_views):
        p = pafs_per_view[v]
        if p is None:
            views.append(ViewDetections(v, [np.zeros((0, 3)), np.zeros((0, 3))], [np.zeros((0, 0))]))
        else:
            u = 1000.0 + shift[v]
            views.append(ViewDetections(v, [np.array([[u, 900.0, 0.9]]), np.array([[u, 1100.0, 0.9]])],
                                        [np.array([[p]])]))
    return DetectionFrame(0, tuple(views)), topo


# -- Welsch and clique scores ----------------------------------------------

def test_welsch_fixed_points():
    assert welsch(0.0, 2.0) == 0.0
    for c in (0.5, 1.0, 2.0, 3.7):
        assert abs(welsch(c, c) - (1.0 - math.exp(-0.5))) <= 1e-12
    assert welsch(1.0, 1.0) == pytest.approx(0.393469, abs=1e-6)


def test_welsch_rejects_non_positive_scale():
    with pytest.raises(ValueError):
        welsch(1.0, 0.0)
    with pytest.raises(ValueError):
        welsch(1.0, -1.0)


@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(0.1, 10))
def test_welsch_is_even_monotone_and_bounded(a, b, c):
    lo, hi = sorted((abs(a), abs(b)))
    assert welsch(a, c) == welsch(-a, c)
    assert 0.0 <= welsch(lo, c) <= welsch(hi, c) <= 1.0


def test_welsch_scale_and_size_term():
    assert welsch_scale(5) == 2.0
    assert size_term(3, 1, 0.25) == 0.0
    assert size_term(2, 5, 0.25) == pytest.approx(0.25 * (1 - math.exp(-0.5)))


def test_single_view_clique_score_examples():
    frame, topo = single_limb_frame(3, [0.8, None, None])
    g = build_graph(frame, None, two_view_cams(), GraphConfig(w_parsing=1.0, w_size=0.0), topo)
    b = LimbBundle(0, ((0, 0, 0),))
    assert clique_score(b, g) == pytest.approx(0.8, abs=1e-15)
    g = build_graph(frame, None, two_view_cams(), GraphConfig(w_parsing=1.0, w_size=0.25), topo)
    assert clique_score(b, g) == pytest.approx(0.8 + 0.25 * (1 - math.exp(-0.5)), abs=1e-15)


def test_zero_weight_matching_edges_only_change_the_normalisation():
    # the two views see the limb at unrelated places, so the matching weights clamp to 0;
    # with no pruning the zero-weight edges still exist and the pair is a clique
    frame, topo = single_limb_frame(3, [0.8, 0.6, None], shift=[0.0, 900.0, 0.0])
    cfg = GraphConfig(w_parsing=1.0, prune_epsilon=0.0)
    g = build_graph(frame, None, two_view_cams(), cfg, topo)
    assert g.matching[0][0, 1] == 0.0 and g.matching_mask[0][0, 1]
    pair = LimbBundle(0, ((0, 0, 0), (1, 0, 0)))
    assert is_clique(pair, g)
    single = [LimbBundle(0, ((v, 0, 0),)) for v in (0, 1)]
    energies = [clique_energy(s, g) for s in single]
    assert clique_energy(pair, g) == pytest.approx(sum(energies), abs=1e-15)
    assert clique_score(pair, g) == pytest.approx(sum(energies) / 2 + size_term(2, 3, cfg.w_size), abs=1e-15)


# -- clique enumeration ------------------------------------------------------

def test_one_limb_in_one_view_is_one_size_one_clique():
    frame, topo = single_limb_frame(1, [0.7])
    g = build_graph(frame, None, two_view_cams()[:1], GraphConfig(), topo)
    cliques = enumerate_cliques(build_limb_graph(g, 0), g.config)
    assert len(cliques) == 1
    assert cliques[0].parts == ((0, 0, 0),) and cliques[0].size == 1


def test_empty_limb_graph_parses_to_nothing():
    frame, topo = single_limb_frame(2, [None, None])
    g = build_graph(frame, None, two_view_cams()[:2], GraphConfig(), topo)
    lg = build_limb_graph(g, 0)
    assert len(lg) == 0
    assert parse_limb_bundles(lg, g.config) == []
    assert enumerate_cliques(lg, g.config) == []


def _person_arm(seed, n_persons, n_views, noise, with_prior):
    cams, gt = generate_scene(SceneConfig(n_persons=n_persons, n_views=n_views, n_frames=1), seed)
    sub = gt.subset(ARM_CHAIN, chain_topology(3))
    frames, sub = render_detections(sub, cams, noise, seed + 1)
    prior = None
    if with_prior:
        prior = PriorSkeletons(sub.person_ids, sub.joints[0], np.ones(sub.joints.shape[1:3], dtype=bool))
    g = build_graph(frames[0], prior, cams, GraphConfig(), sub.topology)
    return g, sub


def test_full_temporal_clique_has_the_maximal_score():
    noise = NoiseConfig(pixel_sigma=0.0, miss_prob=0.0, clutter_rate=1.0, paf_true_sigma=0.0,
                        paf_false_sigma=0.0, occlusion=False)
    g, sub = _person_arm(2, 1, 3, noise, with_prior=True)
    lg = build_limb_graph(g, 0)
    truth = LimbBundle(0, tuple((v, int(sub.index[0][v, 0, 0]), int(sub.index[0][v, 1, 0])) for v in range(3)), 0)
    assert truth.size == 4
    oracle = brute_force_cliques(lg, g.config.w_size)
    best_slots, best_score = max(oracle, key=lambda t: (t[1], [-x for x in t[0]]))
    assert as_bundle(lg, best_slots, best_score).key == truth.key
    found = {b.key: b for b in enumerate_cliques(lg, g.config)}
    assert truth.key in found
    assert found[truth.key].score == pytest.approx(best_score, abs=1e-12)
    assert max(b.score for b in found.values()) == found[truth.key].score


def test_separated_persons_never_mix_across_views():
    g, sub = _person_arm(9, 2, 2, NoiseConfig.clean(), with_prior=False)
    heads = sub.joints[0, :, 0]
    assert np.linalg.norm(heads[0] - heads[1]) > 0.5
    owner = {}
    for v in range(2):
        for p in range(2):
            for j in range(3):
                owner[(v, j, int(sub.index[0][v, j, p]))] = p
    for limb in range(2):
        lg = build_limb_graph(g, limb)
        cliques = enumerate_cliques(lg, g.config)
        keys = {b.key for b in cliques}
        for p in range(2):
            parts = tuple((v, int(sub.index[0][v, limb, p]), int(sub.index[0][v, limb + 1, p])) for v in range(2))
            assert (limb, parts, -1) in keys
        assert {b.key for b in cliques[:2]} == {(limb, tuple((v, int(sub.index[0][v, limb, p]),
                                                             int(sub.index[0][v, limb + 1, p])) for v in range(2)), -1)
                                                 for p in range(2)}
        for b in cliques:
            assert is_clique(b, g)
            # a single limb node may pair two persons' joints, but across views each joint stays one person
            assert len({owner[(v, limb, m)] for v, m, _ in b.parts}) == 1
            assert len({owner[(v, limb + 1, n)] for v, _, n in b.parts}) == 1


@given(st.integers(0, 10_000), st.booleans())
def test_enumeration_matches_the_python_beam(seed, quantized):
    lg = random_limb_graph(seed, quantized)
    cfg, scfg = GraphConfig(), SolverConfig(beam_width=3)
    seen = {}
    alive = np.ones(len(lg), dtype=bool)
    for s in range(len(lg)):
        for slots, score in oracle_grow(lg, s, alive, scfg.beam_width, cfg.w_size):
            b = as_bundle(lg, slots, score)
            seen.setdefault(b.key, b)
    want = sorted(seen.values(), key=lambda b: (-b.score, b.key))
    got = enumerate_cliques(lg, cfg, scfg)
    assert [b.key for b in got] == [b.key for b in want]
    np.testing.assert_allclose([b.score for b in got], [b.score for b in want], rtol=0, atol=1e-12)


@given(st.integers(0, 10_000), st.booleans(), st.integers(1, 4))
def test_greedy_parse_matches_the_python_beam(seed, quantized, beam):
    lg = random_limb_graph(seed, quantized)
    cfg, scfg = GraphConfig(), SolverConfig(beam_width=beam)
    want = [as_bundle(lg, s, sc) for s, sc in oracle_parse(lg, cfg, scfg)]
    got = parse_limb_bundles(lg, cfg, scfg)
    assert [b.key for b in got] == [b.key for b in want]
    np.testing.assert_allclose([b.score for b in got], [b.score for b in want], rtol=0, atol=1e-12)


def test_greedy_parse_matches_the_python_beam_on_synth_frames(noisy_three_person, body):
    cams, frames, gt = noisy_three_person
    prior = PriorSkeletons(gt.person_ids, gt.joints[0], np.ones(gt.joints.shape[1:3], dtype=bool))
    g = build_graph(frames[1], prior, cams, GraphConfig(), body)
    scfg = SolverConfig()
    for limb in (0, 3, 9, 17):
        lg = build_limb_graph(g, limb)
        want = [as_bundle(lg, s, sc) for s, sc in oracle_parse(lg, g.config, scfg)]
        got = parse_limb_bundles(lg, g.config, scfg)
        assert [b.key for b in got] == [b.key for b in want]
        np.testing.assert_allclose([b.score for b in got], [b.score for b in want], rtol=0, atol=1e-12)


# -- greedy extraction -------------------------------------------------------

def _graphs_with_prior(seq, topo, n=6):
    cams, frames, gt = seq
    rec = SequenceReconstructor(cams, topo)
    out = []
    for f in frames[:n]:
        prior = prior_from_skeletons(rec.prev, topo.n_joints)
        out.append(build_graph(f, prior, cams, GraphConfig(), topo))
        rec.step(f)
    return out


def test_bundles_are_node_disjoint_valid_and_correctly_scored(noisy_three_person, body):
    for g in _graphs_with_prior(noisy_three_person, body):
        stop = stop_score(g.n_views, g.config, SolverConfig())
        for limb in range(body.n_limbs):
            bundles = parse_limb_bundles(build_limb_graph(g, limb), g.config)
            used_i, used_j, used_k = set(), set(), set()
            for b in bundles:
                assert is_clique(b, g)
                assert b.score > stop
                assert abs(clique_score(b, g) - b.score) <= 1e-12
                for v, m, n in b.parts:
                    assert (v, m) not in used_i and (v, n) not in used_j
                    used_i.add((v, m))
                    used_j.add((v, n))
                if b.prior >= 0:
                    assert b.prior not in used_k
                    used_k.add(b.prior)


def test_two_person_limb_graph_gives_one_bundle_per_person():
    g, sub = _person_arm(9, 2, 2, NoiseConfig.clean(), with_prior=False)
    for limb in range(2):
        bundles = parse_limb_bundles(build_limb_graph(g, limb), g.config)
        assert len(bundles) == 2
        for b in bundles:
            people = set()
            for v, m, n in b.parts:
                people |= {p for p in range(2) if sub.index[0][v, limb, p] == m}
                people |= {p for p in range(2) if sub.index[0][v, limb + 1, p] == n}
            assert len(people) == 1


def test_new_person_gets_temporal_free_bundles():
    g, sub = _person_arm(9, 2, 3, NoiseConfig.clean(), with_prior=False)
    # only person 0 existed in the last frame
    prior = PriorSkeletons(np.array([0]), sub.joints[0, :1], np.ones((1, 3), dtype=bool))
    cams, gt = generate_scene(SceneConfig(n_persons=2, n_views=3, n_frames=1), 9)
    frames, _ = render_detections(gt.subset(ARM_CHAIN, chain_topology(3)), cams, NoiseConfig.clean(), 10)
    g = build_graph(frames[0], prior, cams, GraphConfig(), chain_topology(3))
    bundles = parse_limb_bundles(build_limb_graph(g, 0), g.config)
    assert len(bundles) == 2
    by_prior = {b.prior: b for b in bundles}
    assert set(by_prior) == {0, -1}
    assert by_prior[-1].parts[0][1] == sub.index[0][0, 0, 1]
    asm = assemble_skeletons(bundles + parse_limb_bundles(build_limb_graph(g, 1), g.config), g, next_id=5)
    assert sorted(p.person_id for p in asm.persons) == [0, 5]


# -- assembly -----------------------------------------------------------------

def test_consistent_bundles_make_one_complete_person(body):
    cams, frames, gt = make_sequence(SceneConfig(n_persons=1, n_views=3, n_frames=1), NoiseConfig.clean(), 4)
    g = build_graph(frames[0], None, cams, GraphConfig(), body)
    bundles = parse_all_limbs(g, SolverConfig())
    assert len(bundles) == body.n_limbs
    asm = assemble_skeletons(bundles, g)
    assert len(asm.persons) == 1
    np.testing.assert_array_equal(asm.persons[0].assign, gt.index[0][:, :, 0])


def _packed(bundles, n_views):
    B = len(bundles)
    m = np.full((B, n_views), -1, dtype=np.int64)
    n = np.full((B, n_views), -1, dtype=np.int64)
    for k, b in enumerate(bundles):
        for v, mm, nn in b.parts:
            m[k, v], n[k, v] = mm, nn
    return PackedBundles(np.array([b.limb for b in bundles], dtype=np.int64), m, n,
                         np.array([b.prior for b in bundles], dtype=np.int64), np.array([b.score for b in bundles]))


def test_conflicting_bundle_is_split_between_its_two_owners():
    g, sub = _person_arm(8, 2, 3, NoiseConfig.clean(), with_prior=False)
    idx = sub.index[0]  # (view, joint, person)
    A, B = 0, 1
    # no joint of one person matches the other person's in another view
    for j in range(3):
        for va, vb in itertools.permutations(range(3), 2):
            assert not g.matching_mask[j][g.gidx(j, va, idx[va, j, A]), g.gidx(j, vb, idx[vb, j, B])]
    upper_a = LimbBundle(0, tuple((v, int(idx[v, 0, A]), int(idx[v, 1, A])) for v in (0, 1)), score=10.0)
    upper_b = LimbBundle(0, ((2, int(idx[2, 0, B]), int(idx[2, 1, B])),), score=9.0)
    # a forearm bundle across all three views whose elbows belong to A (views 0, 1) and B (view 2)
    mixed = LimbBundle(1, ((0, int(idx[0, 1, A]), int(idx[0, 2, A])), (1, int(idx[1, 1, A]), int(idx[1, 2, A])),
                           (2, int(idx[2, 1, B]), int(idx[2, 2, B]))), score=8.0)
    bundles = [upper_a, upper_b, mixed]
    ref, n_splits = assemble_reference(bundles, g)
    packed, n_splits_packed = assemble_packed(_packed(bundles, 3), g)
    assert n_splits == n_splits_packed == 1
    for asm in (ref, packed):
        assert len(asm.persons) == 2
        pa, pb = asm.persons
        want_a = np.full((3, 3), -1)
        want_a[:2] = idx[:2, :, A]
        want_b = np.full((3, 3), -1)
        want_b[2] = idx[2, :, B]
        np.testing.assert_array_equal(pa.assign, want_a)
        np.testing.assert_array_equal(pb.assign, want_b)


def test_two_person_sequence_matches_ground_truth_partition(clean_two_person, body):
    cams, frames, gt = clean_two_person
    rec = SequenceReconstructor(cams, body)
    right = total = 0
    for t, f in enumerate(frames):
        asm = rec.step(f).assembly
        idx = gt.index[t]
        for p in range(gt.n_persons):
            labels = [asm.labels[v][j][idx[v, j, p]] for v in range(idx.shape[0]) for j in range(body.n_joints)
                      if idx[v, j, p] >= 0]
            vals, counts = np.unique(labels, return_counts=True)
            owner = vals[np.argmax(counts)]
            right += int(np.sum(np.array(labels) == owner)) if owner >= 0 else 0
            total += len(labels)
    assert right / total >= 0.99


def _kruskal_single_view(bundles, topo):
    """Classic single-view greedy assembly: accept limbs by decreasing score unless a joint type clashes."""
    person_of: dict[tuple, int] = {}
    members: dict[int, dict] = {}
    next_person = 0
    for b in sorted(bundles, key=lambda b: (-b.score, b.key)):
        (_, m, n), = b.parts
        i, j = topo.limbs[b.limb]
        pi, pj = person_of.get((i, m)), person_of.get((j, n))
        if pi is not None and pi == pj:
            continue
        if pi is None and pj is None:
            members[next_person] = {i: m, j: n}
            person_of[(i, m)] = person_of[(j, n)] = next_person
            next_person += 1
            continue
        if pi is not None and pj is not None:
            if set(members[pi]) & set(members[pj]):
                continue
            for joint, cand in members.pop(pj).items():
                members[pi][joint] = cand
                person_of[(joint, cand)] = pi
            continue
        p, joint, cand = (pi, j, n) if pi is not None else (pj, i, m)
        if joint in members[p]:
            continue
        members[p][joint] = cand
        person_of[(joint, cand)] = p
    return {frozenset(d.items()) for d in members.values()}


@given(st.integers(0, 10_000))
def test_single_view_assembly_is_kruskal(seed):
    rng = np.random.default_rng(seed)
    topo = default_topology() if seed % 2 else chain_topology(5)
    counts = rng.integers(0, 4, size=topo.n_joints)
    cands = [np.column_stack([rng.uniform(0, 2000, (c, 2)), rng.uniform(0, 1, c)]) for c in counts]
    pafs = [np.round(rng.random((counts[a], counts[b])), 2) for a, b in topo.limbs]
    frame = DetectionFrame(0, (ViewDetections(0, cands, pafs),))
    cam = look_at(0, (5.0, 0.0, 2.0), (0.0, 0.0, 1.0), 1000.0)
    g = build_graph(frame, None, [cam], GraphConfig(), topo)
    bundles = parse_all_limbs(g, SolverConfig())
    asm = assemble_skeletons(bundles, g)
    got = {frozenset((int(j), int(p.assign[0, j])) for j in range(topo.n_joints) if p.assign[0, j] >= 0)
           for p in asm.persons}
    assert got == _kruskal_single_view(bundles, topo)


# -- routes, determinism, clutter filter ------------------------------------

def _same_assembly(a, b):
    assert [p.person_id for p in a.persons] == [p.person_id for p in b.persons]
    assert [p.prior_index for p in a.persons] == [p.prior_index for p in b.persons]
    for pa, pb in zip(a.persons, b.persons):
        np.testing.assert_array_equal(pa.assign, pb.assign)
    for va, vb in zip(a.labels, b.labels):
        for la, lb in zip(va, vb):
            np.testing.assert_array_equal(la, lb)


def test_compiled_and_reference_routes_agree(noisy_three_person, body):
    for g in _graphs_with_prior(noisy_three_person, body, n=8):
        for threads in (1, 3):
            scfg = SolverConfig(threads=threads)
            from fourdassoc.solver import Diagnostics
            d_ref, d_fast = Diagnostics(), Diagnostics()
            ref = solve_graph(g, scfg, diag=d_ref, reference=True)
            fast = solve_graph(g, scfg, diag=d_fast)
            assert [b.key for b in d_ref.all_bundles()] == [b.key for b in d_fast.all_bundles()]
            assert [b.score for b in d_ref.all_bundles()] == [b.score for b in d_fast.all_bundles()]
            assert d_ref.n_splits == d_fast.n_splits
            _same_assembly(ref, fast)


def test_packed_parse_matches_per_limb_parse(noisy_three_person, body):
    for g in _graphs_with_prior(noisy_three_person, body, n=3):
        packed = parse_packed_limbs(g, SolverConfig()).to_bundles()
        ref = parse_all_limbs(g, SolverConfig())
        assert [(b.key, b.score) for b in packed] == [(b.key, b.score) for b in ref]


def test_solve_frame_is_deterministic(noisy_three_person, body):
    cams, frames, _ = noisy_three_person
    a, da = solve_frame(frames[4], None, cams, GraphConfig(), body)
    b, db = solve_frame(frames[4], None, cams, GraphConfig(), body, SolverConfig(threads=4))
    _same_assembly(a, b)
    assert da.objective == db.objective and da.feasible and db.feasible


def test_empty_frame_gives_empty_assembly(body):
    cams = [look_at(k, (5.0 * np.cos(k), 5.0 * np.sin(k), 2.0), (0, 0, 1.0), 1000.0) for k in range(3)]
    from fourdassoc.detections import empty_view
    frame = DetectionFrame(0, tuple(empty_view(c.id, body) for c in cams))
    asm, diag = solve_frame(frame, None, cams, GraphConfig(), body)
    assert asm.persons == [] and diag.feasible and diag.objective == 0.0


@given(st.integers(0, 10_000))
def test_keep_mask_matches_keep_person(seed):
    rng = np.random.default_rng(seed)
    scfg = SolverConfig(min_views=int(rng.integers(1, 4)), min_joint_fraction=float(rng.uniform(0, 1)))
    persons = [Person(k, int(rng.integers(-1, 2)), np.where(rng.random((4, 6)) < rng.uniform(0, 0.6), 0, -1))
               for k in range(int(rng.integers(0, 6)))]
    assert keep_mask(persons, scfg).tolist() == [keep_person(p, scfg) for p in persons]


def test_keep_person_rules():
    scfg = SolverConfig()
    assign = np.full((3, 5), -1)
    assign[0, :] = 0
    assert not keep_person(Person(0, 0, assign.copy()), scfg)  # a prior alone is not enough
    assign[1, 0] = 0
    assert keep_person(Person(0, 0, assign.copy()), scfg)
    assert not keep_person(Person(0, -1, assign.copy()), scfg)  # 1 of 5 joints in two views
    assign[1, :2] = 0
    assert keep_person(Person(0, -1, assign.copy()), scfg)  # 2 of 5 = 40%


def test_bundle_file_round_trip(tmp_path, noisy_three_person, body):
    g = _graphs_with_prior(noisy_three_person, body, n=2)[1]
    bundles = parse_all_limbs(g, SolverConfig())
    write_bundles(tmp_path / "b.txt", bundles)
    back = read_bundles(tmp_path / "b.txt")
    assert [(b.key, b.score) for b in back] == [(b.key, b.score) for b in bundles]
