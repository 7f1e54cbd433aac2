"""3D skeletons from assembled persons: triangulation, refinement, bone lengths.

Refinement works directly on joint positions. Its energy is::

    E = w_2d   * sum_{joint, view} |(I - d d^T)(X_j - o_v)|^2
      + w_shape * (sum_limbs (|X_i - X_j| - L_limb)^2
                   + sum_symmetric_pairs (|limb_a| - |limb_b|)^2)
      + w_temp  * sum_joints |X_j - X_j_prev|^2

where ``o_v`` and ``d`` are the camera center and unit ray of the assigned
candidate, so the data term is the squared point-to-ray distance in meters.
It is minimised with Levenberg-Marquardt on the stacked residuals.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .detections import DetectionFrame, SkeletonTopology
from .geometry import Camera, GeometryError, triangulate_rays

SKELETON_FORMAT = "fourdassoc-skeletons"
SKELETON_VERSION = 1
BONE_SAMPLES = 5


class FitWarning(UserWarning):
    pass


@dataclass(frozen=True)
class FitConfig:
    w_2d: float = 1.0
    w_shape: float = 0.01
    w_temp: float = 0.005
    max_iterations: int = 20
    tolerance: float = 1e-5  # meters, largest joint step at convergence
    min_visibility: int = 3  # cameras per joint for a bone-length sample
    min_inferred_confidence: float = 0.1

    def __post_init__(self):
        for name in ("w_2d", "w_shape", "w_temp"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")


@dataclass(eq=False)
class Skeleton3D:
    person_id: int
    frame: int
    joints: np.ndarray  # (J, 3), NaN where absent
    present: np.ndarray  # (J,) bool
    confidence: np.ndarray  # (J,) in [0, 1], 0 where absent
    inferred: np.ndarray | None = None  # (J,) joints filled by the fit, not triangulated
    views: np.ndarray | None = None  # (J,) number of views that observed the joint

    def __post_init__(self):
        J = self.joints.shape[0]
        if self.inferred is None:
            self.inferred = np.zeros(J, dtype=bool)
        if self.views is None:
            self.views = np.zeros(J, dtype=np.int64)

    @property
    def n_joints(self) -> int:
        return int(self.joints.shape[0])

    @classmethod
    def empty(cls, person_id: int, frame: int, n_joints: int) -> "Skeleton3D":
        return cls(person_id, frame, np.full((n_joints, 3), np.nan), np.zeros(n_joints, dtype=bool),
                   np.zeros(n_joints))

    def copy(self) -> "Skeleton3D":
        return Skeleton3D(self.person_id, self.frame, self.joints.copy(), self.present.copy(),
                          self.confidence.copy(), self.inferred.copy(), self.views.copy())


@dataclass(eq=False)
class BoneLengthState:
    """Per-limb bone-length samples of one person; a limb locks after five samples."""

    person_id: int
    samples: np.ndarray  # (n_limbs, BONE_SAMPLES)
    count: np.ndarray  # (n_limbs,)

    @classmethod
    def new(cls, person_id: int, n_limbs: int) -> "BoneLengthState":
        return cls(person_id, np.zeros((n_limbs, BONE_SAMPLES)), np.zeros(n_limbs, dtype=np.int64))

    @property
    def locked(self) -> np.ndarray:
        return self.count >= BONE_SAMPLES

    @property
    def mean(self) -> np.ndarray:
        """Mean length per limb, NaN for limbs never sampled.

        ``math.fsum`` makes the mean exactly independent of sample order.
        """
        out = np.full(self.count.shape[0], np.nan)
        for l, n in enumerate(self.count):
            if n:
                out[l] = math.fsum(self.samples[l, :n]) / n
        return out


def update_bone_lengths(state: BoneLengthState, skel: Skeleton3D, visibility: np.ndarray,
                        topology: SkeletonTopology, min_visibility: int = 3) -> BoneLengthState:
    """Add one frame's limb lengths for limbs whose endpoints were seen by enough cameras."""
    visibility = np.asarray(visibility)
    samples = state.samples.copy()
    count = state.count.copy()
    good = skel.present & ~skel.inferred & (visibility >= min_visibility)
    for l, (a, b) in enumerate(topology.limbs):
        if count[l] >= BONE_SAMPLES or not (good[a] and good[b]):
            continue
        length = float(np.linalg.norm(skel.joints[a] - skel.joints[b]))
        if length > 0 and np.isfinite(length):
            samples[l, count[l]] = length
            count[l] += 1
    return BoneLengthState(state.person_id, samples, count)


def _rays_for_person(assign: np.ndarray, frame: DetectionFrame, cams: Sequence[Camera]):
    """Per joint: camera centers, unit rays and confidences of the assigned candidates."""
    N, J = assign.shape
    out = []
    for j in range(J):
        origins, dirs, conf = [], [], []
        for v in range(N):
            c = assign[v, j]
            if c < 0:
                continue
            cand = frame.views[v].candidates[j][c]
            origins.append(cams[v].center)
            dirs.append(cams[v].ray_directions(cand[:2])[0])
            conf.append(float(cand[2]))
        out.append((np.array(origins).reshape(-1, 3), np.array(dirs).reshape(-1, 3), np.array(conf)))
    return out


def _frame_cameras(frame: DetectionFrame, cams: Sequence[Camera]) -> list[Camera]:
    by_id = {c.id: c for c in cams}
    try:
        return [by_id[cid] for cid in frame.camera_ids]
    except KeyError as exc:
        raise GeometryError(f"no calibration for camera {exc.args[0]}") from None


def triangulate_person(person, frame: DetectionFrame, cams: Sequence[Camera]) -> Skeleton3D:
    """Least-squares triangulation of every joint seen in at least two views.

    ``person`` is an assembled person with an ``(N, J)`` candidate table.
    Degenerate joints are left absent with a :class:`FitWarning`.
    """
    assign = np.asarray(person.assign)
    N, J = assign.shape
    views = _frame_cameras(frame, cams)
    skel = Skeleton3D.empty(person.person_id, frame.frame, J)
    skel.views = (assign >= 0).sum(axis=0).astype(np.int64)
    for j, (o, d, conf) in enumerate(_rays_for_person(assign, frame, views)):
        if o.shape[0] < 2:
            continue
        try:
            x, _ = triangulate_rays(o, d)
        except GeometryError as exc:
            warnings.warn(f"person {person.person_id} joint {j}: {exc}", FitWarning, stacklevel=2)
            continue
        skel.joints[j] = x
        skel.present[j] = True
        skel.confidence[j] = float(np.clip(conf.mean(), 0.0, 1.0))
    return skel


@dataclass
class FitInfo:
    iterations: int = 0
    converged: bool = True
    energy_start: float = 0.0
    energy_end: float = 0.0
    energies: list[float] = field(default_factory=list)


class FitProblem:
    """Stacked residuals of the refinement energy over the free joints.

    ``free`` lists joint indices whose positions are optimised; the state
    vector is their concatenated coordinates.
    """

    def __init__(self, topology: SkeletonTopology, free: np.ndarray, rays, prev: np.ndarray | None,
                 prev_valid: np.ndarray | None, bone_mean: np.ndarray | None, cfg: FitConfig):
        self.topology = topology
        self.free = np.asarray(free, dtype=np.int64)
        self.slot = {int(j): k for k, j in enumerate(self.free)}
        self.cfg = cfg
        sw2, sws, swt = math.sqrt(cfg.w_2d), math.sqrt(cfg.w_shape), math.sqrt(cfg.w_temp)
        self.sw2, self.sws, self.swt = sw2, sws, swt
        # data term: one 3-vector residual per (joint, ray)
        self.data = []
        for j in self.free:
            o, d, _ = rays[j]
            for k in range(o.shape[0]):
                P = np.eye(3) - np.outer(d[k], d[k])
                self.data.append((self.slot[int(j)], P, P @ o[k]))
        self.bones = []
        if cfg.w_shape > 0 and bone_mean is not None:
            for l, (a, b) in enumerate(topology.limbs):
                if a in self.slot and b in self.slot and np.isfinite(bone_mean[l]):
                    self.bones.append((self.slot[a], self.slot[b], float(bone_mean[l])))
        self.sym = []
        if cfg.w_shape > 0:
            for la, lb in topology.symmetric_limbs:
                ends = topology.limbs[la] + topology.limbs[lb]
                if all(e in self.slot for e in ends):
                    self.sym.append(tuple(self.slot[e] for e in ends))
        self.temp = []
        if cfg.w_temp > 0 and prev is not None:
            for j in self.free:
                if prev_valid[j]:
                    self.temp.append((self.slot[int(j)], np.asarray(prev[j], dtype=float)))
        self.n_res = 3 * len(self.data) + len(self.bones) + len(self.sym) + 3 * len(self.temp)
        self.n_var = 3 * self.free.shape[0]

    def residuals(self, x: np.ndarray) -> np.ndarray:
        X = x.reshape(-1, 3)
        r = np.empty(self.n_res)
        k = 0
        for s, P, Po in self.data:
            r[k:k + 3] = self.sw2 * (P @ X[s] - Po)
            k += 3
        for a, b, L in self.bones:
            r[k] = self.sws * (np.linalg.norm(X[a] - X[b]) - L)
            k += 1
        for a0, a1, b0, b1 in self.sym:
            r[k] = self.sws * (np.linalg.norm(X[a0] - X[a1]) - np.linalg.norm(X[b0] - X[b1]))
            k += 1
        for s, Xp in self.temp:
            r[k:k + 3] = self.swt * (X[s] - Xp)
            k += 3
        return r

    def energy(self, x: np.ndarray) -> float:
        r = self.residuals(x)
        return float(r @ r)

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        X = x.reshape(-1, 3)
        Jm = np.zeros((self.n_res, self.n_var))
        k = 0
        for s, P, _ in self.data:
            Jm[k:k + 3, 3 * s:3 * s + 3] = self.sw2 * P
            k += 3
        for a, b, _ in self.bones:
            u = _unit(X[a] - X[b])
            Jm[k, 3 * a:3 * a + 3] += self.sws * u
            Jm[k, 3 * b:3 * b + 3] -= self.sws * u
            k += 1
        for a0, a1, b0, b1 in self.sym:
            ua = _unit(X[a0] - X[a1])
            ub = _unit(X[b0] - X[b1])
            Jm[k, 3 * a0:3 * a0 + 3] += self.sws * ua
            Jm[k, 3 * a1:3 * a1 + 3] -= self.sws * ua
            Jm[k, 3 * b0:3 * b0 + 3] -= self.sws * ub
            Jm[k, 3 * b1:3 * b1 + 3] += self.sws * ub
            k += 1
        for s, _ in self.temp:
            Jm[k:k + 3, 3 * s:3 * s + 3] = self.swt * np.eye(3)
            k += 3
        return Jm

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return 2.0 * self.jacobian(x).T @ self.residuals(x)


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    return v / n if n > 1e-12 else np.zeros(3)


def levenberg_marquardt(problem: FitProblem, x0: np.ndarray, max_iterations: int, tolerance: float
                        ) -> tuple[np.ndarray, FitInfo]:
    """Damped Gauss-Newton; only energy-decreasing steps are accepted."""
    x = x0.copy()
    E = problem.energy(x)
    info = FitInfo(energy_start=E, energies=[E])
    lam = 1e-3
    converged = False
    for it in range(max_iterations):
        r = problem.residuals(x)
        Jm = problem.jacobian(x)
        H = Jm.T @ Jm
        g = Jm.T @ r
        diag = np.diag(H).copy()
        diag[diag < 1e-12] = 1e-12
        step_taken = False
        for _ in range(10):
            A = H + lam * np.diag(diag)
            try:
                dx = -np.linalg.solve(A, g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            E_new = problem.energy(x + dx)
            if E_new < E:
                x = x + dx
                E = E_new
                lam = max(lam / 3.0, 1e-9)
                step_taken = True
                break
            lam *= 4.0
        info.iterations = it + 1
        info.energies.append(E)
        if not step_taken or np.max(np.abs(dx)) < tolerance:
            converged = True
            break
    info.converged = converged or max_iterations == 0
    info.energy_end = E
    return x, info


def fit_parametric(tri: Skeleton3D, prev: Skeleton3D | None, bones: BoneLengthState | None, person,
                   frame: DetectionFrame, cams: Sequence[Camera], topology: SkeletonTopology,
                   cfg: FitConfig | None = None) -> tuple[Skeleton3D, FitInfo]:
    """Refine a triangulated skeleton with shape and temporal terms.

    Joints missing from ``tri`` are added (flagged ``inferred``) when the
    previous frame had them and either the joint itself or a neighbouring
    joint is observed now; they start at the previous position.
    """
    cfg = cfg or FitConfig()
    if not tri.present.any():
        raise ValueError("cannot refine an empty skeleton")
    J = tri.n_joints
    views = _frame_cameras(frame, cams)
    assign = np.asarray(person.assign)
    rays = _rays_for_person(assign, frame, views)
    x_init = tri.joints.copy()
    free = tri.present.copy()
    inferred = np.zeros(J, dtype=bool)
    conf = tri.confidence.copy()
    prev_ok = prev is not None and cfg.w_temp > 0
    if prev_ok:
        adj = topology.adjacency()
        for j in range(J):
            if free[j] or not prev.present[j] or prev.confidence[j] < cfg.min_inferred_confidence:
                continue
            seen = rays[j][0].shape[0] > 0
            if seen or any(tri.present[k] for k in adj[j]):
                free[j] = True
                inferred[j] = True
                x_init[j] = prev.joints[j]
                c = 0.5 * prev.confidence[j]
                if seen:
                    c = max(c, 0.5 * float(rays[j][2].mean()))
                conf[j] = min(c, 1.0)
    idx = np.nonzero(free)[0]
    problem = FitProblem(topology, idx, rays, prev.joints if prev_ok else None,
                         prev.present if prev_ok else None,
                         bones.mean if bones is not None else None, cfg)
    x, info = levenberg_marquardt(problem, x_init[idx].reshape(-1), cfg.max_iterations, cfg.tolerance)
    if not info.converged:
        warnings.warn(f"person {tri.person_id}: fit stopped after {info.iterations} iterations",
                      FitWarning, stacklevel=2)
    out = Skeleton3D(tri.person_id, tri.frame, np.full((J, 3), np.nan), free.copy(),
                     np.where(free, conf, 0.0), inferred, tri.views.copy())
    out.joints[idx] = x.reshape(-1, 3)
    return out, info


def _fmt(x: float) -> float:
    return round(float(x), 6)


def skeleton_record(skel: Skeleton3D) -> dict:
    return {
        "id": int(skel.person_id),
        "joints": [[_fmt(c) for c in skel.joints[j]] if skel.present[j] else None for j in range(skel.n_joints)],
        "confidence": [_fmt(c) if skel.present[j] else 0.0 for j, c in enumerate(skel.confidence)],
        "inferred": [int(j) for j in np.nonzero(skel.inferred)[0]],
    }


def skeleton_header(topology: SkeletonTopology, mode: str = "") -> dict:
    return {"format": SKELETON_FORMAT, "version": SKELETON_VERSION,
            "joint_names": list(topology.joint_names), "topology": topology.digest(), "mode": mode}


def write_skeletons(path, sequence: Iterable[tuple[int, list[Skeleton3D]]], topology: SkeletonTopology,
                    mode: str = "") -> None:
    """JSON lines: a header, then ``{"frame": t, "persons": [...]}`` per frame, persons sorted by id."""
    with open(path, "w") as fh:
        fh.write(json.dumps(skeleton_header(topology, mode)) + "\n")
        for t, skels in sequence:
            fh.write(frame_line(t, skels) + "\n")


def frame_line(t: int, skels: list[Skeleton3D]) -> str:
    persons = [skeleton_record(s) for s in sorted(skels, key=lambda s: s.person_id)]
    return json.dumps({"frame": int(t), "persons": persons})


def read_skeletons(path) -> tuple[dict, list[tuple[int, list[Skeleton3D]]]]:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty skeleton file")
    header = json.loads(lines[0])
    if header.get("format") != SKELETON_FORMAT:
        raise ValueError(f"{path}: not a skeleton file")
    J = len(header["joint_names"])
    out = []
    for k, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            skels = []
            for p in rec["persons"]:
                joints = np.full((J, 3), np.nan)
                present = np.zeros(J, dtype=bool)
                for j, xyz in enumerate(p["joints"]):
                    if xyz is not None:
                        joints[j] = xyz
                        present[j] = True
                inferred = np.zeros(J, dtype=bool)
                inferred[p.get("inferred", [])] = True
                skels.append(Skeleton3D(int(p["id"]), int(rec["frame"]), joints, present,
                                        np.array(p["confidence"], dtype=float), inferred))
            out.append((int(rec["frame"]), skels))
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise ValueError(f"{path}:{k}: bad skeleton record ({exc})") from exc
    return header, out
