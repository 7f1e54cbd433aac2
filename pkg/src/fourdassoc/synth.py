"""Synthetic multi-person, multi-camera scenes with known ground truth.

People are 19-joint forward-kinematic skeletons whose root wanders smoothly
(or walks a straight line in the ``crossing`` scenario) while hips, knees,
shoulders and elbows swing with a gait phase. Cameras sit on a ring and
look at the middle of the capture volume. Rendering projects the joints,
hides occluded ones, adds pixel noise, misses and clutter, and samples PAF
scores from separate distributions for true and false pairs.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .detections import (
    DetectionFrame,
    SkeletonTopology,
    ViewDetections,
    chain_topology,
    default_topology,
)
from .geometry import Camera, look_at

GROUND_TRUTH_FORMAT = "fourdassoc-ground-truth"
GROUND_TRUTH_VERSION = 1


class SceneConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SceneConfig:
    n_persons: int = 2
    n_views: int = 5
    n_frames: int = 100
    fps: float = 30.0
    ring_radius: float = 5.0
    camera_height: float = 2.2
    focal: float = 1000.0
    image_size: tuple[int, int] = (2048, 2048)
    volume_radius: float = 2.0
    person_spacing: float = 1.0
    wander_amplitude: float = 0.4
    wander_frequency: float = 0.6  # rad/s, base angular rate of the root path
    gait_period: float = 1.1  # seconds
    swing_amplitude: float = 0.45  # rad, hip/shoulder swing
    body_scale: float = 1.0
    scale_jitter: float = 0.05  # per-person uniform scale spread
    motion: str = "wander"  # "wander" or "crossing"
    crossing_offset: float = 0.3  # lateral half-distance between crossing paths

    def __post_init__(self):
        if self.n_persons < 0:
            raise SceneConfigError("n_persons must be non-negative")
        if self.n_views < 1:
            raise SceneConfigError("need at least one view")
        if self.n_frames < 1:
            raise SceneConfigError("need at least one frame")
        for name in ("fps", "ring_radius", "focal", "volume_radius", "gait_period", "body_scale"):
            if not getattr(self, name) > 0:
                raise SceneConfigError(f"{name} must be positive")
        for name in ("person_spacing", "wander_amplitude", "scale_jitter", "swing_amplitude"):
            if getattr(self, name) < 0:
                raise SceneConfigError(f"{name} must be non-negative")
        if self.image_size[0] <= 0 or self.image_size[1] <= 0:
            raise SceneConfigError("image size must be positive")
        if self.motion not in ("wander", "crossing"):
            raise SceneConfigError(f"unknown motion model {self.motion!r}")
        if self.motion == "crossing" and self.n_persons != 2:
            raise SceneConfigError("the crossing scenario has exactly two persons")


@dataclass(frozen=True)
class NoiseConfig:
    pixel_sigma: float = 2.0
    miss_prob: float = 0.05
    clutter_rate: float = 1.0
    paf_true_mean: float = 0.85
    paf_true_sigma: float = 0.1
    paf_false_mean: float = 0.15
    paf_false_sigma: float = 0.1
    occlusion: bool = True
    blocking_radius: float = 0.15
    confidence_true: tuple[float, float] = (0.8, 0.1)  # mean, sigma
    confidence_clutter: tuple[float, float] = (0.1, 0.5)  # uniform range

    def __post_init__(self):
        for name in ("miss_prob", "paf_true_mean", "paf_false_mean"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise SceneConfigError(f"{name} must lie in [0, 1]")
        for name in ("pixel_sigma", "paf_true_sigma", "paf_false_sigma", "clutter_rate", "blocking_radius"):
            if getattr(self, name) < 0:
                raise SceneConfigError(f"{name} must be non-negative")

    @classmethod
    def clean(cls) -> "NoiseConfig":
        """No pixel noise, misses, clutter, PAF spread or occlusion."""
        return cls(pixel_sigma=0.0, miss_prob=0.0, clutter_rate=0.0, paf_true_sigma=0.0,
                   paf_false_sigma=0.0, occlusion=False)


# Rest pose as offsets from the parent joint in the body frame
# (x = left, y = forward, z = up), meters at body scale 1.
_PARENT = (-1, 0, 1, 1, 3, 4, 1, 6, 7, 0, 9, 10, 0, 12, 13, 11, 14, 2, 2)
_REST = np.array([
    [0.0, 0.0, 0.95],  # pelvis: height above ground
    [0.0, 0.0, 0.50],  # neck
    [0.0, 0.03, 0.22],  # head
    [-0.18, 0.0, -0.02],  # r_shoulder
    [0.0, 0.0, -0.28],  # r_elbow
    [0.0, 0.0, -0.25],  # r_wrist
    [0.18, 0.0, -0.02],  # l_shoulder
    [0.0, 0.0, -0.28],
    [0.0, 0.0, -0.25],
    [-0.10, 0.0, 0.0],  # r_hip
    [0.0, 0.0, -0.44],
    [0.0, 0.0, -0.42],
    [0.10, 0.0, 0.0],  # l_hip
    [0.0, 0.0, -0.44],
    [0.0, 0.0, -0.42],
    [0.0, 0.14, -0.07],  # r_toe
    [0.0, 0.14, -0.07],  # l_toe
    [-0.035, 0.08, 0.04],  # r_eye
    [0.035, 0.08, 0.04],  # l_eye
])
_R_HIP, _R_KNEE, _L_HIP, _L_KNEE = 9, 10, 12, 13
_R_SHO, _R_ELB, _L_SHO, _L_ELB = 3, 4, 6, 7
PELVIS, NECK = 0, 1
BODY_JOINTS = _REST.shape[0]


def rest_offsets(scale: float = 1.0) -> np.ndarray:
    return scale * _REST


def rest_bone_lengths(topology: SkeletonTopology | None = None, scale: float = 1.0) -> np.ndarray:
    """Bone lengths of the rest pose for each limb of the 19-joint body."""
    topology = topology or default_topology()
    pos = forward_kinematics(np.zeros(3), 0.0, np.zeros(BODY_JOINTS), scale)
    return np.array([np.linalg.norm(pos[a] - pos[b]) for a, b in topology.limbs])


def _rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def forward_kinematics(root_xy, heading: float, angles: np.ndarray, scale: float) -> np.ndarray:
    """Joint positions for a root on the ground plane and per-joint swing angles.

    ``angles[j]`` rotates the subtree below joint ``j`` about the body's
    lateral axis, so every bone keeps its rest length.
    """
    c, s = np.cos(heading), np.sin(heading)
    # columns: body left, forward and up in world coordinates for heading 0 (walking along +x)
    body = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    yaw = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    frames = [None] * BODY_JOINTS
    pos = np.zeros((BODY_JOINTS, 3))
    off = rest_offsets(scale)
    frames[0] = yaw @ body
    pos[0] = np.array([root_xy[0], root_xy[1], 0.0]) + frames[0] @ off[0]
    frames[0] = frames[0] @ _rot_x(angles[0])
    for j in range(1, BODY_JOINTS):
        p = _PARENT[j]
        pos[j] = pos[p] + frames[p] @ off[j]
        frames[j] = frames[p] @ _rot_x(angles[j])
    return pos


@dataclass(eq=False)
class GroundTruth:
    """3D joints per frame and person plus, once rendered, candidate index maps.

    ``index[t]`` is an ``(N, J, P)`` array: the candidate index emitted for
    person ``p``'s joint ``j`` in view ``n``, or -1.
    """

    topology: SkeletonTopology
    person_ids: np.ndarray  # (P,)
    joints: np.ndarray  # (T, P, J, 3)
    torso: np.ndarray  # (T, P, 2, 3) pelvis and neck, used for occlusion
    bone_lengths: np.ndarray  # (P, n_limbs)
    camera_ids: tuple[int, ...] = ()
    index: list[np.ndarray] = field(default_factory=list)

    @property
    def n_frames(self) -> int:
        return int(self.joints.shape[0])

    @property
    def n_persons(self) -> int:
        return int(self.joints.shape[1])

    def subset(self, joint_indices: Sequence[int], topology: SkeletonTopology) -> "GroundTruth":
        """Restrict to some joints (in topology order), e.g. an arm as a 3-joint chain."""
        idx = np.asarray(joint_indices, dtype=np.int64)
        if idx.shape[0] != topology.n_joints:
            raise SceneConfigError("joint subset does not match the topology size")
        joints = self.joints[:, :, idx]
        if self.n_frames:
            first = joints[0]
            bones = np.array([[np.linalg.norm(first[p, a] - first[p, b]) for a, b in topology.limbs]
                              for p in range(self.n_persons)]).reshape(self.n_persons, topology.n_limbs)
        else:
            bones = np.zeros((self.n_persons, topology.n_limbs))
        index = [m[:, idx] for m in self.index]
        return GroundTruth(topology, self.person_ids.copy(), joints.copy(), self.torso.copy(), bones,
                           self.camera_ids, index)


def camera_ring(cfg: SceneConfig) -> list[Camera]:
    cams = []
    for v in range(cfg.n_views):
        a = 2.0 * np.pi * v / cfg.n_views + 0.1
        pos = (cfg.ring_radius * np.cos(a), cfg.ring_radius * np.sin(a), cfg.camera_height)
        cams.append(look_at(v + 1, pos, (0.0, 0.0, 1.0), cfg.focal, cfg.image_size))
    return cams


def _wander_centers(cfg: SceneConfig, rng: np.random.Generator) -> np.ndarray:
    P = cfg.n_persons
    if P == 0:
        return np.zeros((0, 2))
    if P == 1:
        return np.zeros((1, 2))
    # persons wander around anchors on a circle; anchors far enough apart
    # that two paths never come closer than the spacing
    d = cfg.person_spacing + 2.0 * cfg.wander_amplitude
    r = d / (2.0 * np.sin(np.pi / P))
    if r + cfg.wander_amplitude > cfg.volume_radius + 1e-12:
        raise SceneConfigError(
            f"{P} persons with spacing {cfg.person_spacing} m do not fit in a {cfg.volume_radius} m volume")
    phase = rng.uniform(0.0, 2.0 * np.pi)
    a = phase + 2.0 * np.pi * np.arange(P) / P
    return np.stack([r * np.cos(a), r * np.sin(a)], axis=1)


def _smooth_path(t: np.ndarray, amplitude: float, base_rate: float, rng: np.random.Generator) -> np.ndarray:
    """Sum of three incommensurate circles; stays within ``amplitude`` of the origin."""
    weights = rng.dirichlet(np.ones(3))
    rates = base_rate * rng.uniform(0.6, 1.6, size=3) * rng.choice([-1.0, 1.0], size=3)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(3, 2))
    xy = np.zeros((t.shape[0], 2))
    for k in range(3):
        xy[:, 0] += amplitude * weights[k] * np.cos(rates[k] * t + phases[k, 0])
        xy[:, 1] += amplitude * weights[k] * np.sin(rates[k] * t + phases[k, 1])
    return xy


def generate_scene(cfg: SceneConfig, seed: int, topology: SkeletonTopology | None = None
                   ) -> tuple[list[Camera], GroundTruth]:
    """Cameras on a ring and a deterministic multi-person motion sequence."""
    topology = topology or default_topology()
    if topology.n_joints != BODY_JOINTS:
        raise SceneConfigError("scenes are generated for the 19-joint body; use GroundTruth.subset for others")
    rng = np.random.default_rng(seed)
    cams = camera_ring(cfg)
    P, T = cfg.n_persons, cfg.n_frames
    t = np.arange(T) / cfg.fps
    scales = cfg.body_scale * (1.0 + cfg.scale_jitter * rng.uniform(-1.0, 1.0, size=P))
    joints = np.zeros((T, P, BODY_JOINTS, 3))
    if cfg.motion == "crossing":
        half = 2.0 * min(1.0, cfg.volume_radius / 2.0)
        lanes = np.array([cfg.crossing_offset, -cfg.crossing_offset])
        starts = np.array([-half, half])
        span = max(t[-1], 1.0 / cfg.fps)
        roots = np.zeros((P, T, 2))
        headings = np.zeros((P, T))
        for p in range(P):
            roots[p, :, 0] = starts[p] - np.sign(starts[p]) * 2.0 * half * t / span
            roots[p, :, 1] = lanes[p]
            headings[p] = 0.0 if starts[p] < 0 else np.pi
    else:
        centers = _wander_centers(cfg, rng)
        roots = np.zeros((P, T, 2))
        headings = np.zeros((P, T))
        for p in range(P):
            roots[p] = centers[p] + _smooth_path(t, cfg.wander_amplitude, cfg.wander_frequency, rng)
            h0 = rng.uniform(0.0, 2.0 * np.pi)
            headings[p] = h0 + 0.5 * np.sin(cfg.wander_frequency * t + rng.uniform(0.0, 2.0 * np.pi))
    gait_rate = 2.0 * np.pi / cfg.gait_period
    A = cfg.swing_amplitude
    for p in range(P):
        rate = gait_rate * rng.uniform(0.9, 1.1)
        phi = rate * t + rng.uniform(0.0, 2.0 * np.pi)
        for k in range(T):
            s = np.sin(phi[k])
            ang = np.zeros(BODY_JOINTS)
            ang[_R_HIP] = A * s
            ang[_L_HIP] = -A * s
            ang[_R_KNEE] = -0.6 * A * max(0.0, np.sin(phi[k] + 1.2))
            ang[_L_KNEE] = -0.6 * A * max(0.0, -np.sin(phi[k] + 1.2))
            ang[_R_SHO] = -0.8 * A * s
            ang[_L_SHO] = 0.8 * A * s
            ang[_R_ELB] = 0.3 + 0.2 * A * (1.0 + s)
            ang[_L_ELB] = 0.3 + 0.2 * A * (1.0 - s)
            joints[k, p] = forward_kinematics(roots[p, k], headings[p, k], ang, scales[p])
    torso = joints[:, :, [PELVIS, NECK]].copy()
    bones = np.array([rest_bone_lengths(topology, s) for s in scales]).reshape(P, topology.n_limbs)
    gt = GroundTruth(topology, np.arange(P, dtype=np.int64), joints, torso, bones,
                     tuple(c.id for c in cams))
    return cams, gt


def segment_distance(p0, p1, q0, q1) -> np.ndarray:
    """Broadcasting minimum distance between segments ``p0-p1`` and ``q0-q1``."""
    p0, p1, q0, q1 = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (p0, p1, q0, q1)))
    d1 = p1 - p0
    d2 = q1 - q0
    r = p0 - q0
    a = np.sum(d1 * d1, axis=-1)
    e = np.sum(d2 * d2, axis=-1)
    f = np.sum(d2 * r, axis=-1)
    c = np.sum(d1 * r, axis=-1)
    b = np.sum(d1 * d2, axis=-1)
    denom = a * e - b * b
    tiny = 1e-18
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(denom > tiny, np.clip((b * f - c * e) / denom, 0.0, 1.0), 0.0)
        t = np.where(e > tiny, (b * s + f) / e, 0.0)
        # clamp t and recompute s for the clamped value
        s = np.where(t < 0.0, np.where(a > tiny, np.clip(-c / a, 0.0, 1.0), 0.0), s)
        s = np.where(t > 1.0, np.where(a > tiny, np.clip((b - c) / a, 0.0, 1.0), 0.0), s)
        t = np.clip(t, 0.0, 1.0)
    diff = (p0 + s[..., None] * d1) - (q0 + t[..., None] * d2)
    return np.linalg.norm(diff, axis=-1)


def occluded(cam: Camera, joints: np.ndarray, torso: np.ndarray, radius: float) -> np.ndarray:
    """``(P, J)`` mask of joints whose sight line passes near another person's torso."""
    P, J = joints.shape[:2]
    out = np.zeros((P, J), dtype=bool)
    if P < 2:
        return out
    c = cam.center
    for q in range(P):
        d = segment_distance(c, joints, torso[q, 0], torso[q, 1])
        hit = d < radius
        hit[q] = False
        out |= hit
    return out


def _clip01(x: np.ndarray) -> np.ndarray:
    return np.clip(x, 0.0, 1.0)


def render_frame(joints: np.ndarray, torso: np.ndarray, cams: Sequence[Camera], topology: SkeletonTopology,
                 noise: NoiseConfig, rng: np.random.Generator, frame_index: int = 0
                 ) -> tuple[DetectionFrame, np.ndarray]:
    """Detections of one frame and its ``(N, J, P)`` candidate index map."""
    P, J = joints.shape[:2]
    N = len(cams)
    index = np.full((N, J, P), -1, dtype=np.int64)
    views = []
    for v, cam in enumerate(cams):
        w, h = cam.image_size
        flat = joints.reshape(-1, 3)
        pix, depth = cam.project_many(flat)
        pix = pix.reshape(P, J, 2)
        depth = depth.reshape(P, J)
        with np.errstate(invalid="ignore"):
            inside = (depth > 0.1) & (pix[..., 0] >= 0) & (pix[..., 0] < w) & (pix[..., 1] >= 0) & (pix[..., 1] < h)
        visible = inside.copy()
        if noise.occlusion and P > 1:
            visible &= ~occluded(cam, joints, torso, noise.blocking_radius)
        visible &= rng.random((P, J)) >= noise.miss_prob
        noisy = pix + noise.pixel_sigma * rng.standard_normal((P, J, 2))
        conf_t = _clip01(noise.confidence_true[0] + noise.confidence_true[1] * rng.standard_normal((P, J)))
        # 2D boxes of persons that are on screen, used to place clutter
        boxes = []
        for p in range(P):
            if inside[p].any():
                lo = pix[p][inside[p]].min(axis=0)
                hi = pix[p][inside[p]].max(axis=0)
                pad = 0.2 * (hi - lo) + 10.0
                boxes.append((np.maximum(lo - pad, 0.0), np.minimum(hi + pad, [w - 1.0, h - 1.0])))
        cands = []
        for j in range(J):
            rows = []
            owners = []
            for p in range(P):
                if visible[p, j]:
                    rows.append([noisy[p, j, 0], noisy[p, j, 1], conf_t[p, j]])
                    owners.append(p)
            n_clutter = int(np.floor(noise.clutter_rate))
            if rng.random() < noise.clutter_rate - n_clutter:
                n_clutter += 1
            for _ in range(n_clutter):
                if boxes:
                    lo, hi = boxes[rng.integers(len(boxes))]
                    uv = lo + rng.random(2) * (hi - lo)
                else:
                    uv = rng.random(2) * [w - 1.0, h - 1.0]
                lo_c, hi_c = noise.confidence_clutter
                rows.append([uv[0], uv[1], lo_c + (hi_c - lo_c) * rng.random()])
                owners.append(-1)
            order = rng.permutation(len(rows))
            arr = np.array(rows, dtype=float).reshape(-1, 3)[order]
            for new, old in enumerate(order):
                if owners[old] >= 0:
                    index[v, j, owners[old]] = new
            cands.append(arr)
        pafs = []
        for a, b in topology.limbs:
            Ma, Mb = cands[a].shape[0], cands[b].shape[0]
            paf = _clip01(noise.paf_false_mean + noise.paf_false_sigma * rng.standard_normal((Ma, Mb)))
            for p in range(P):
                m, n = index[v, a, p], index[v, b, p]
                if m >= 0 and n >= 0:
                    paf[m, n] = _clip01(noise.paf_true_mean + noise.paf_true_sigma * rng.standard_normal())
            pafs.append(paf)
        views.append(ViewDetections(cam.id, cands, pafs))
    return DetectionFrame(frame_index, views), index


def render_detections(gt: GroundTruth, cams: Sequence[Camera], noise: NoiseConfig, seed: int
                      ) -> tuple[list[DetectionFrame], GroundTruth]:
    """Degrade the ground truth into detection frames; returns frames and GT with index maps."""
    rng = np.random.default_rng(seed)
    frames, index = [], []
    for t in range(gt.n_frames):
        f, m = render_frame(gt.joints[t], gt.torso[t], cams, gt.topology, noise, rng, t)
        frames.append(f)
        index.append(m)
    out = GroundTruth(gt.topology, gt.person_ids.copy(), gt.joints, gt.torso, gt.bone_lengths,
                      tuple(c.id for c in cams), index)
    return frames, out


def make_sequence(scene: SceneConfig, noise: NoiseConfig, seed: int, topology: SkeletonTopology | None = None
                  ) -> tuple[list[Camera], list[DetectionFrame], GroundTruth]:
    """Scene generation and rendering with seeds derived from one integer."""
    cams, gt = generate_scene(scene, seed, topology)
    frames, gt = render_detections(gt, cams, noise, seed + 7919)
    return cams, frames, gt


def save_ground_truth(path, gt: GroundTruth) -> None:
    header = {
        "format": GROUND_TRUTH_FORMAT,
        "version": GROUND_TRUTH_VERSION,
        "joint_names": list(gt.topology.joint_names),
        "limbs": [list(l) for l in gt.topology.limbs],
        "symmetric_limbs": [list(s) for s in gt.topology.symmetric_limbs],
        "person_ids": [int(i) for i in gt.person_ids],
        "camera_ids": [int(c) for c in gt.camera_ids],
        "bone_lengths": gt.bone_lengths.tolist(),
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for t in range(gt.n_frames):
            rec = {"frame": t, "joints": gt.joints[t].tolist(), "torso": gt.torso[t].tolist()}
            if gt.index:
                rec["index"] = gt.index[t].tolist()
            fh.write(json.dumps(rec) + "\n")


def load_ground_truth(path) -> GroundTruth:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise SceneConfigError(f"{path}: empty ground-truth file")
    header = json.loads(lines[0])
    if header.get("format") != GROUND_TRUTH_FORMAT:
        raise SceneConfigError(f"{path}: not a ground-truth file")
    if header.get("version") != GROUND_TRUTH_VERSION:
        raise SceneConfigError(f"{path}: unsupported version {header.get('version')}")
    topo = SkeletonTopology(tuple(header["joint_names"]), tuple(tuple(l) for l in header["limbs"]),
                            symmetric_limbs=tuple(tuple(s) for s in header.get("symmetric_limbs", [])))
    P, J = len(header["person_ids"]), topo.n_joints
    joints, torso, index = [], [], []
    for k, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        rec = json.loads(line)
        joints.append(np.array(rec["joints"], dtype=float).reshape(P, J, 3))
        torso.append(np.array(rec["torso"], dtype=float).reshape(P, 2, 3))
        if "index" in rec:
            index.append(np.array(rec["index"], dtype=np.int64).reshape(-1, J, P))
    T = len(joints)
    return GroundTruth(
        topo,
        np.array(header["person_ids"], dtype=np.int64),
        np.stack(joints) if T else np.zeros((0, P, J, 3)),
        np.stack(torso) if T else np.zeros((0, P, 2, 3)),
        np.array(header["bone_lengths"], dtype=float).reshape(P, topo.n_limbs),
        tuple(header["camera_ids"]),
        index,
    )


def config_dict(scene: SceneConfig, noise: NoiseConfig) -> dict:
    return {"scene": asdict(scene), "noise": asdict(noise)}


ARM_CHAIN = (3, 4, 5)  # r_shoulder, r_elbow, r_wrist


def oracle_noise(noisy: bool = True) -> NoiseConfig:
    """Noise for exhaustive-search instances.

    Pixel and PAF noise plus clutter (half a false detection per joint and
    view on average) but no missed detections: a missed elbow cuts an arm
    into pieces that limb bundles cannot rejoin, which measures recall
    rather than how close the greedy search gets to the optimum.
    """
    if not noisy:
        return NoiseConfig.clean()
    return NoiseConfig(pixel_sigma=3.0, miss_prob=0.0, clutter_rate=0.5, occlusion=False)


def oracle_instance(seed: int, noisy: bool = True, n_persons: int = 2, n_views: int = 2,
                    chain: Sequence[int] = ARM_CHAIN, noise: NoiseConfig | None = None
                    ) -> tuple[list[Camera], DetectionFrame, GroundTruth]:
    """One small frame (a joint chain of a few persons) for comparison against exhaustive search.

    ``noise`` overrides the level chosen by ``noisy``.
    """
    cams, gt = generate_scene(SceneConfig(n_persons=n_persons, n_views=n_views, n_frames=1), seed)
    sub = gt.subset(chain, chain_topology(len(chain)))
    frames, sub = render_detections(sub, cams, noise or oracle_noise(noisy), seed + 7919)
    return cams, frames[0], sub
