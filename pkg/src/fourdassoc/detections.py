"""Per-frame 2D joint candidates, PAF limb scores and the skeleton tree.

Candidates for one (view, joint) are stored as an ``(M, 3)`` array of
``(u, v, confidence)``; row order is the candidate index and is never
re-sorted. PAF scores for one (view, limb) are a dense ``(M_i, M_j)``
matrix.

Text format (JSON lines, one object per line)::

    {"format": "fourdassoc-detections", "version": 1, "topology": <hash>,
     "joint_names": [...], "limbs": [[i, j], ...], "camera_ids": [...]}
    {"frame": t, "views": [{"camera": id,
                            "joints": [[[u, v, conf], ...], ...],   # per joint
                            "pafs": [[[s, ...], ...], ...]}]}       # per limb

A view may give ``"pafs_sparse": [[limb, m, n, score], ...]`` instead of
``"pafs"``; missing entries are filled with 0. Files ending in ``.npz``
use the binary layout written by :func:`save_frames`.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

DETECTIONS_FORMAT = "fourdassoc-detections"
DETECTIONS_VERSION = 1


class DetectionFormatError(ValueError):
    """Raised for malformed detection files; the message carries the location."""


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class SkeletonTopology:
    joint_names: tuple[str, ...]
    limbs: tuple[tuple[int, int], ...]
    root: int = 0
    # pairs of limb indices expected to have equal length (left/right)
    symmetric_limbs: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "joint_names", tuple(self.joint_names))
        object.__setattr__(self, "limbs", tuple((int(a), int(b)) for a, b in self.limbs))
        object.__setattr__(self, "symmetric_limbs", tuple((int(a), int(b)) for a, b in self.symmetric_limbs))
        validate_tree(self.n_joints, self.limbs, self.root)
        for a, b in self.symmetric_limbs:
            if not (0 <= a < len(self.limbs) and 0 <= b < len(self.limbs)) or a == b:
                raise TopologyError(f"bad symmetric limb pair ({a}, {b})")

    @property
    def n_joints(self) -> int:
        return len(self.joint_names)

    @property
    def n_limbs(self) -> int:
        return len(self.limbs)

    def parents(self) -> list[int]:
        """Parent joint of each joint when the tree is hung from the root (-1 for the root)."""
        parent = [-1] * self.n_joints
        adj = self.adjacency()
        order = [self.root]
        seen = {self.root}
        for j in order:
            for k in adj[j]:
                if k not in seen:
                    seen.add(k)
                    parent[k] = j
                    order.append(k)
        return parent

    def adjacency(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.n_joints)]
        for a, b in self.limbs:
            adj[a].append(b)
            adj[b].append(a)
        return adj

    def digest(self) -> str:
        doc = json.dumps({"joints": list(self.joint_names), "limbs": [list(l) for l in self.limbs]},
                         separators=(",", ":"))
        return hashlib.sha1(doc.encode()).hexdigest()[:16]


def validate_tree(n_joints: int, limbs: Sequence[tuple[int, int]], root: int = 0) -> None:
    """Raise TopologyError unless ``limbs`` is a spanning tree over ``n_joints`` joints."""
    if n_joints < 1:
        raise TopologyError("topology needs at least one joint")
    if not 0 <= root < n_joints:
        raise TopologyError(f"root {root} out of range")
    if len(limbs) != n_joints - 1:
        raise TopologyError(f"a tree over {n_joints} joints has {n_joints - 1} limbs, got {len(limbs)}")
    parent = list(range(n_joints))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in limbs:
        if not (0 <= a < n_joints and 0 <= b < n_joints) or a == b:
            raise TopologyError(f"bad limb ({a}, {b})")
        ra, rb = find(a), find(b)
        if ra == rb:
            raise TopologyError(f"limb ({a}, {b}) closes a cycle")
        parent[ra] = rb
    # J-1 acyclic edges over J nodes is necessarily connected


BODY19_JOINTS = (
    "pelvis", "neck", "head",
    "r_shoulder", "r_elbow", "r_wrist",
    "l_shoulder", "l_elbow", "l_wrist",
    "r_hip", "r_knee", "r_ankle",
    "l_hip", "l_knee", "l_ankle",
    "r_toe", "l_toe", "r_eye", "l_eye",
)
BODY19_LIMBS = (
    (0, 1), (1, 2),
    (1, 3), (3, 4), (4, 5),
    (1, 6), (6, 7), (7, 8),
    (0, 9), (9, 10), (10, 11),
    (0, 12), (12, 13), (13, 14),
    (11, 15), (14, 16),
    (2, 17), (2, 18),
)
BODY19_SYMMETRIC = ((2, 5), (3, 6), (4, 7), (8, 11), (9, 12), (10, 13), (14, 15), (16, 17))


def default_topology() -> SkeletonTopology:
    """19-joint body tree rooted at the pelvis (mid-hip)."""
    return SkeletonTopology(BODY19_JOINTS, BODY19_LIMBS, root=0, symmetric_limbs=BODY19_SYMMETRIC)


def chain_topology(n_joints: int = 3) -> SkeletonTopology:
    """A simple path ``0 - 1 - ... - n-1``, handy for toy instances."""
    return SkeletonTopology(tuple(f"j{i}" for i in range(n_joints)),
                            tuple((i, i + 1) for i in range(n_joints - 1)), root=0)


@dataclass(frozen=True)
class JointCandidate:
    u: float
    v: float
    confidence: float


@dataclass(frozen=True, eq=False)
class ViewDetections:
    camera_id: int
    candidates: tuple[np.ndarray, ...]  # per joint, (M_j, 3)
    pafs: tuple[np.ndarray, ...]  # per limb, (M_i, M_j)

    def __post_init__(self):
        cands = []
        for c in self.candidates:
            a = np.array(c, dtype=float).reshape(-1, 3)
            a.setflags(write=False)
            cands.append(a)
        pafs = []
        for p in self.pafs:
            a = np.array(p, dtype=float)
            a.setflags(write=False)
            pafs.append(a)
        object.__setattr__(self, "candidates", tuple(cands))
        object.__setattr__(self, "pafs", tuple(pafs))

    def joint(self, j: int) -> list[JointCandidate]:
        return [JointCandidate(*map(float, row)) for row in self.candidates[j]]

    def n_candidates(self, j: int) -> int:
        return self.candidates[j].shape[0]


@dataclass(frozen=True, eq=False)
class DetectionFrame:
    frame: int
    views: tuple[ViewDetections, ...]

    def __post_init__(self):
        object.__setattr__(self, "views", tuple(self.views))

    @property
    def camera_ids(self) -> tuple[int, ...]:
        return tuple(v.camera_id for v in self.views)

    def view(self, camera_id: int) -> ViewDetections:
        for v in self.views:
            if v.camera_id == camera_id:
                return v
        raise KeyError(camera_id)

    def total_candidates(self) -> int:
        return sum(c.shape[0] for v in self.views for c in v.candidates)

    def validate(self, topology: SkeletonTopology) -> None:
        ids = self.camera_ids
        if len(set(ids)) != len(ids):
            raise DetectionFormatError(f"frame {self.frame}: duplicate camera ids")
        for view in self.views:
            where = f"frame {self.frame}, camera {view.camera_id}"
            if len(view.candidates) != topology.n_joints:
                raise DetectionFormatError(
                    f"{where}: expected {topology.n_joints} joints, got {len(view.candidates)}")
            if len(view.pafs) != topology.n_limbs:
                raise DetectionFormatError(
                    f"{where}: expected {topology.n_limbs} PAF matrices, got {len(view.pafs)}")
            for j, c in enumerate(view.candidates):
                if not np.all(np.isfinite(c)):
                    raise DetectionFormatError(f"{where}, joint {j}: non-finite candidate")
                conf = c[:, 2]
                if np.any((conf < 0) | (conf > 1)):
                    raise DetectionFormatError(f"{where}, joint {j}: confidence outside [0, 1]")
            for l, (a, b) in enumerate(topology.limbs):
                p = view.pafs[l]
                shape = (view.candidates[a].shape[0], view.candidates[b].shape[0])
                if p.shape != shape:
                    raise DetectionFormatError(
                        f"{where}, limb {l}: PAF shape {p.shape} does not match candidates {shape}")
                if p.size and (not np.all(np.isfinite(p)) or p.min() < 0 or p.max() > 1):
                    raise DetectionFormatError(f"{where}, limb {l}: PAF score outside [0, 1]")


def empty_view(camera_id: int, topology: SkeletonTopology) -> ViewDetections:
    return ViewDetections(camera_id,
                          tuple(np.zeros((0, 3)) for _ in range(topology.n_joints)),
                          tuple(np.zeros((0, 0)) for _ in range(topology.n_limbs)))


def _header(topology: SkeletonTopology, camera_ids: Sequence[int]) -> dict:
    return {
        "format": DETECTIONS_FORMAT,
        "version": DETECTIONS_VERSION,
        "topology": topology.digest(),
        "joint_names": list(topology.joint_names),
        "limbs": [list(l) for l in topology.limbs],
        "camera_ids": [int(c) for c in camera_ids],
    }


def _frame_to_json(frame: DetectionFrame) -> dict:
    return {
        "frame": int(frame.frame),
        "views": [
            {
                "camera": int(v.camera_id),
                "joints": [c.tolist() for c in v.candidates],
                "pafs": [p.tolist() for p in v.pafs],
            }
            for v in frame.views
        ],
    }


def _view_from_json(d: dict, topology: SkeletonTopology, where: str) -> ViewDetections:
    try:
        cam = int(d["camera"])
        joints = d["joints"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DetectionFormatError(f"{where}: missing camera/joints ({exc})") from exc
    where = f"{where}, camera {cam}"
    if len(joints) != topology.n_joints:
        raise DetectionFormatError(f"{where}: expected {topology.n_joints} joints, got {len(joints)}")
    cands = []
    for j, rows in enumerate(joints):
        try:
            a = np.array(rows, dtype=float).reshape(-1, 3) if len(rows) else np.zeros((0, 3))
        except (TypeError, ValueError) as exc:
            raise DetectionFormatError(f"{where}, joint {j}: candidates must be [u, v, conf] triples") from exc
        cands.append(a)
    if "pafs" in d:
        pafs = []
        if len(d["pafs"]) != topology.n_limbs:
            raise DetectionFormatError(f"{where}: expected {topology.n_limbs} PAF matrices")
        for l, ((a, b), rows) in enumerate(zip(topology.limbs, d["pafs"])):
            shape = (cands[a].shape[0], cands[b].shape[0])
            try:
                p = np.array(rows, dtype=float).reshape(shape) if shape[0] and shape[1] else np.zeros(shape)
            except (TypeError, ValueError) as exc:
                raise DetectionFormatError(f"{where}, limb {l}: PAF matrix must be {shape}") from exc
            pafs.append(p)
    elif "pafs_sparse" in d:
        pafs = [np.zeros((cands[a].shape[0], cands[b].shape[0])) for a, b in topology.limbs]
        for entry in d["pafs_sparse"]:
            try:
                l, m, n, s = int(entry[0]), int(entry[1]), int(entry[2]), float(entry[3])
                pafs[l][m, n] = s
            except (IndexError, TypeError, ValueError) as exc:
                raise DetectionFormatError(f"{where}: bad sparse PAF entry {entry!r}") from exc
    else:
        raise DetectionFormatError(f"{where}: no PAF scores")
    return ViewDetections(cam, tuple(cands), tuple(pafs))


def save_frames(path, frames: Sequence[DetectionFrame], topology: SkeletonTopology,
                camera_ids: Sequence[int]) -> None:
    path = Path(path)
    if path.suffix == ".npz":
        _save_npz(path, frames, topology, camera_ids)
        return
    with path.open("w") as fh:
        fh.write(json.dumps(_header(topology, camera_ids)) + "\n")
        for f in frames:
            fh.write(json.dumps(_frame_to_json(f)) + "\n")


def _check_header(header: dict, topology: SkeletonTopology | None, path) -> SkeletonTopology:
    if header.get("format") != DETECTIONS_FORMAT:
        raise DetectionFormatError(f"{path}: not a detections file")
    if header.get("version") != DETECTIONS_VERSION:
        raise DetectionFormatError(f"{path}: unsupported version {header.get('version')}")
    file_topo = SkeletonTopology(header["joint_names"], [tuple(l) for l in header["limbs"]])
    if topology is None:
        return file_topo
    if header.get("topology") != topology.digest():
        raise DetectionFormatError(f"{path}: topology hash {header.get('topology')} does not match")
    return topology


def read_header(path) -> dict:
    path = Path(path)
    if path.suffix == ".npz":
        with np.load(path) as z:
            return json.loads(str(z["header"]))
    with path.open() as fh:
        line = fh.readline()
    if not line.strip():
        raise DetectionFormatError(f"{path}: empty file")
    return json.loads(line)


def load_frames(path, topology: SkeletonTopology | None = None,
                camera_ids: Sequence[int] | None = None) -> list[DetectionFrame]:
    """Read a detections file; frames come back sorted by frame index.

    ``camera_ids`` (the calibration's ids) is used to reject views from
    unknown cameras.
    """
    path = Path(path)
    if path.suffix == ".npz":
        header, frames = _load_npz(path, topology)
        topo = _check_header(header, topology, path)
    else:
        with path.open() as fh:
            lines = [ln for ln in fh if ln.strip()]
        if not lines:
            raise DetectionFormatError(f"{path}: empty file")
        try:
            header = json.loads(lines[0])
        except json.JSONDecodeError as exc:
            raise DetectionFormatError(f"{path}, line 1: {exc}") from exc
        topo = _check_header(header, topology, path)
        frames = []
        for lineno, line in enumerate(lines[1:], start=2):
            try:
                d = json.loads(line)
                t = int(d["frame"])
                views = d["views"]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DetectionFormatError(f"{path}, line {lineno}: {exc}") from exc
            where = f"{path}, frame {t}"
            frames.append(DetectionFrame(t, tuple(_view_from_json(v, topo, where) for v in views)))
    known = set(camera_ids) if camera_ids is not None else None
    for f in frames:
        f.validate(topo)
        if known is not None:
            extra = set(f.camera_ids) - known
            if extra:
                raise DetectionFormatError(f"{path}, frame {f.frame}: unknown camera ids {sorted(extra)}")
    frames.sort(key=lambda f: f.frame)
    return frames


def _save_npz(path: Path, frames, topology, camera_ids) -> None:
    # Flat layout: one row per (frame, view, joint) block with offsets into
    # the candidate table, one row per (frame, view, limb) for PAFs.
    cand_rows, cand_index = [], []
    paf_vals, paf_index = [], []
    view_index = []
    n_cand = n_paf = 0
    for f in frames:
        for v in f.views:
            view_index.append((f.frame, v.camera_id))
            for j, c in enumerate(v.candidates):
                cand_index.append((len(view_index) - 1, j, n_cand, c.shape[0]))
                cand_rows.append(c)
                n_cand += c.shape[0]
            for l, p in enumerate(v.pafs):
                paf_index.append((len(view_index) - 1, l, n_paf, p.shape[0], p.shape[1]))
                paf_vals.append(p.ravel())
                n_paf += p.size
    np.savez_compressed(
        path,
        header=np.array(json.dumps(_header(topology, camera_ids))),
        frame_ids=np.array([f.frame for f in frames], dtype=np.int64),
        view_index=np.array(view_index, dtype=np.int64).reshape(-1, 2),
        cand_index=np.array(cand_index, dtype=np.int64).reshape(-1, 4),
        candidates=np.concatenate(cand_rows) if cand_rows else np.zeros((0, 3)),
        paf_index=np.array(paf_index, dtype=np.int64).reshape(-1, 5),
        pafs=np.concatenate(paf_vals) if paf_vals else np.zeros(0),
    )


def _load_npz(path: Path, topology):
    with np.load(path) as z:
        header = json.loads(str(z["header"]))
        topo = _check_header(header, topology, path)
        frame_ids = z["frame_ids"]
        view_index = z["view_index"]
        cand_index = z["cand_index"]
        cands = z["candidates"]
        paf_index = z["paf_index"]
        pafs = z["pafs"]
    per_view_c: dict[int, list] = {i: [None] * topo.n_joints for i in range(len(view_index))}
    per_view_p: dict[int, list] = {i: [None] * topo.n_limbs for i in range(len(view_index))}
    for vi, j, off, n in cand_index:
        per_view_c[vi][j] = cands[off:off + n]
    for vi, l, off, a, b in paf_index:
        per_view_p[vi][l] = pafs[off:off + a * b].reshape(a, b)
    views_by_frame: dict[int, list] = {int(t): [] for t in frame_ids}
    for vi, (t, cam) in enumerate(view_index):
        if any(x is None for x in per_view_c[vi]) or any(x is None for x in per_view_p[vi]):
            raise DetectionFormatError(f"{path}, frame {t}, camera {cam}: incomplete record")
        views_by_frame[int(t)].append(ViewDetections(int(cam), tuple(per_view_c[vi]), tuple(per_view_p[vi])))
    frames = [DetectionFrame(int(t), tuple(views_by_frame[int(t)])) for t in frame_ids]
    return header, frames
