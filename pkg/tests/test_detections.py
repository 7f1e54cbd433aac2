import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fourdassoc.detections import (
    DetectionFormatError,
    DetectionFrame,
    SkeletonTopology,
    TopologyError,
    ViewDetections,
    chain_topology,
    default_topology,
    empty_view,
    load_frames,
    read_header,
    save_frames,
    validate_tree,
)


def frames_equal(a: DetectionFrame, b: DetectionFrame) -> bool:
    if a.frame != b.frame or a.camera_ids != b.camera_ids:
        return False
    for va, vb in zip(a.views, b.views):
        for ca, cb in zip(va.candidates, vb.candidates):
            if ca.shape != cb.shape or not np.array_equal(ca, cb):
                return False
        for pa, pb in zip(va.pafs, vb.pafs):
            if pa.shape != pb.shape or not np.array_equal(pa, pb):
                return False
    return True


def test_default_topology_is_a_rooted_tree():
    topo = default_topology()
    assert topo.n_joints == 19
    assert topo.n_limbs == topo.n_joints - 1
    validate_tree(topo.n_joints, topo.limbs, topo.root)
    parents = topo.parents()
    assert parents[topo.root] == -1
    # every joint reaches the root through its parents
    for j in range(topo.n_joints):
        seen = 0
        while j != topo.root:
            j = parents[j]
            seen += 1
            assert seen <= topo.n_joints
    for la, lb in topo.symmetric_limbs:
        assert topo.joint_names[topo.limbs[la][1]].replace("r_", "l_") == topo.joint_names[topo.limbs[lb][1]]


def _is_spanning_tree(n: int, edges) -> bool:
    """Breadth-first reference: n-1 edges, no self loops, everything reachable from 0."""
    if len(edges) != n - 1 or any(a == b or not (0 <= a < n and 0 <= b < n) for a, b in edges):
        return False
    adj = {k: set() for k in range(n)}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    seen, todo = {0}, [0]
    while todo:
        for k in adj[todo.pop()]:
            if k not in seen:
                seen.add(k)
                todo.append(k)
    return len(seen) == n


@given(st.integers(1, 8).flatmap(
    lambda n: st.tuples(st.just(n), st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)),
                                             min_size=max(n - 2, 0), max_size=n))))
def test_topology_validation_matches_reference(case):
    n, edges = case
    ok = _is_spanning_tree(n, edges)
    if ok:
        validate_tree(n, edges)
    else:
        with pytest.raises(TopologyError):
            validate_tree(n, edges)


def test_topology_rejects_cycle_and_disconnected_joint():
    with pytest.raises(TopologyError):
        SkeletonTopology(("a", "b", "c"), ((0, 1), (1, 2), (2, 0)))
    with pytest.raises(TopologyError):
        SkeletonTopology(("a", "b", "c", "d"), ((0, 1), (1, 0), (2, 3)))
    with pytest.raises(TopologyError):
        SkeletonTopology(("a", "b"), ((0, 1),), symmetric_limbs=((0, 0),))


def one_frame(topo):
    cands = [np.array([[10.0 + j, 20.0 + j, 0.5]]) for j in range(topo.n_joints)]
    pafs = [np.array([[0.25]]) for _ in topo.limbs]
    return DetectionFrame(0, (ViewDetections(7, cands, pafs),))


def test_single_candidate_frame_ingests_verbatim(tmp_path, chain3):
    path = tmp_path / "det.jsonl"
    f = one_frame(chain3)
    save_frames(path, [f], chain3, [7])
    back = load_frames(path, chain3)
    assert len(back) == 1 and frames_equal(f, back[0])
    assert back[0].view(7).joint(1)[0].u == 11.0


def test_empty_frame_list_file(tmp_path, chain3):
    path = tmp_path / "det.jsonl"
    save_frames(path, [], chain3, [0, 1])
    assert load_frames(path, chain3) == []
    assert read_header(path)["camera_ids"] == [0, 1]


def test_empty_file_is_an_error(tmp_path):
    path = tmp_path / "det.jsonl"
    path.write_text("")
    with pytest.raises(DetectionFormatError):
        load_frames(path)


@pytest.mark.parametrize("suffix", [".jsonl", ".npz"])
def test_synth_file_round_trip(tmp_path, noisy_three_person, suffix):
    cams, frames, gt = noisy_three_person
    path = tmp_path / f"det{suffix}"
    save_frames(path, frames, gt.topology, [c.id for c in cams])
    back = load_frames(path, gt.topology, [c.id for c in cams])
    assert len(back) == len(frames)
    assert all(frames_equal(a, b) for a, b in zip(frames, back))
    assert sum(f.total_candidates() for f in back) == sum(f.total_candidates() for f in frames)


def test_frames_come_back_sorted(tmp_path, chain3):
    path = tmp_path / "det.jsonl"
    f0 = one_frame(chain3)
    f3 = DetectionFrame(3, f0.views)
    save_frames(path, [f3, f0], chain3, [7])
    assert [f.frame for f in load_frames(path, chain3)] == [0, 3]


def _rewrite_first_frame(path, fn):
    lines = path.read_text().splitlines()
    rec = json.loads(lines[1])
    fn(rec)
    lines[1] = json.dumps(rec)
    path.write_text("\n".join(lines) + "\n")


def test_confidence_out_of_range_is_rejected_with_location(tmp_path, chain3):
    path = tmp_path / "det.jsonl"
    save_frames(path, [one_frame(chain3)], chain3, [7])
    text = path.read_text().replace("0.5]", "1.5]")
    path.write_text(text)
    with pytest.raises(DetectionFormatError, match="joint"):
        load_frames(path, chain3)


def test_paf_shape_mismatch_and_unknown_camera(tmp_path, chain3):
    bad = ViewDetections(7, [np.zeros((1, 3)), np.zeros((2, 3)), np.zeros((0, 3))],
                         [np.zeros((1, 1)), np.zeros((2, 0))])
    with pytest.raises(DetectionFormatError, match="limb 0"):
        DetectionFrame(0, (bad,)).validate(chain3)
    path = tmp_path / "det.jsonl"
    save_frames(path, [one_frame(chain3)], chain3, [7])
    with pytest.raises(DetectionFormatError, match="unknown camera"):
        load_frames(path, chain3, camera_ids=[1, 2])


def test_topology_hash_mismatch(tmp_path, chain3):
    path = tmp_path / "det.jsonl"
    save_frames(path, [one_frame(chain3)], chain3, [7])
    with pytest.raises(DetectionFormatError, match="topology"):
        load_frames(path, chain_topology(4))


def test_empty_view_shapes(body):
    v = empty_view(3, body)
    DetectionFrame(0, (v,)).validate(body)
    assert all(v.n_candidates(j) == 0 for j in range(body.n_joints))


def test_sparse_pafs_become_dense_with_zero_fill(tmp_path, chain3):
    path = tmp_path / "det.jsonl"
    cands = [np.array([[1.0, 1.0, 0.9], [2.0, 2.0, 0.8]]) for _ in range(3)]
    f = DetectionFrame(0, (ViewDetections(7, cands, [np.zeros((2, 2)), np.zeros((2, 2))]),))
    save_frames(path, [f], chain3, [7])

    def to_sparse(rec):
        view = rec["views"][0]
        del view["pafs"]
        view["pafs_sparse"] = [[0, 1, 0, 0.7], [1, 0, 1, 0.4]]

    _rewrite_first_frame(path, to_sparse)
    (back,) = load_frames(path, chain3)
    np.testing.assert_array_equal(back.views[0].pafs[0], [[0.0, 0.0], [0.7, 0.0]])
    np.testing.assert_array_equal(back.views[0].pafs[1], [[0.0, 0.4], [0.0, 0.0]])
