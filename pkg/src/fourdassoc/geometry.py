"""Pinhole cameras, viewing rays and the two ray distances used for edge weights.

Cameras are assumed to be undistorted. Rotation and translation map world
points into the camera frame: ``x_cam = R @ x_world + t``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numba import njit

# Above this 3x3 normal-matrix condition number a ray bundle is rejected.
DEGENERATE_CONDITION = 1e8
_MIN_DEPTH = 1e-9
_PARALLEL_EPS = 1e-12

CALIBRATION_FORMAT = "fourdassoc-calibration"
CALIBRATION_VERSION = 1


class GeometryError(ValueError):
    pass


class InsufficientViewsError(GeometryError):
    pass


class DegenerateGeometryError(GeometryError):
    pass


class BehindCameraError(GeometryError):
    pass


@dataclass(frozen=True, eq=False)
class Camera:
    id: int
    intrinsic: np.ndarray
    rotation: np.ndarray
    translation: np.ndarray
    image_size: tuple[int, int]
    # derived quantities, filled in __post_init__
    center: np.ndarray = field(init=False, repr=False)
    _ray_matrix: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        K = np.array(self.intrinsic, dtype=float).reshape(3, 3)
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        if not (np.all(np.isfinite(K)) and np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise GeometryError(f"camera {self.id}: non-finite calibration")
        if abs(np.linalg.det(K)) < 1e-12 or np.linalg.cond(K) > 1e12:
            raise GeometryError(f"camera {self.id}: intrinsic matrix is singular")
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-6) or np.linalg.det(R) < 0:
            raise GeometryError(f"camera {self.id}: rotation is not a proper rotation")
        w, h = self.image_size
        if w <= 0 or h <= 0:
            raise GeometryError(f"camera {self.id}: image size must be positive")
        for name, value in (("intrinsic", K), ("rotation", R), ("translation", t)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "image_size", (int(w), int(h)))
        center = -R.T @ t
        center.setflags(write=False)
        object.__setattr__(self, "center", center)
        ray_matrix = R.T @ np.linalg.inv(K)
        ray_matrix.setflags(write=False)
        object.__setattr__(self, "_ray_matrix", ray_matrix)

    @property
    def focal(self) -> float:
        return 0.5 * float(self.intrinsic[0, 0] + self.intrinsic[1, 1])

    def ray_directions(self, pixels: np.ndarray) -> np.ndarray:
        """Unit world-space directions for an ``(n, 2)`` array of pixels."""
        pixels = np.asarray(pixels, dtype=float).reshape(-1, 2)
        homog = np.empty((pixels.shape[0], 3))
        homog[:, :2] = pixels
        homog[:, 2] = 1.0
        dirs = homog @ self._ray_matrix.T
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        return dirs

    def project_many(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Project ``(n, 3)`` points; returns pixels and camera-frame depths.

        No depth check is done here, callers decide what to do with points
        behind the camera.
        """
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        cam = points @ self.rotation.T + self.translation
        depth = cam[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            uvw = cam @ self.intrinsic.T
            pix = uvw[:, :2] / uvw[:, 2:3]
        return pix, depth

    def to_dict(self) -> dict:
        return {
            "id": int(self.id),
            "K": [float(x) for x in self.intrinsic.ravel()],
            "R": [float(x) for x in self.rotation.ravel()],
            "t": [float(x) for x in self.translation],
            "width": int(self.image_size[0]),
            "height": int(self.image_size[1]),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        try:
            return cls(
                id=int(d["id"]),
                intrinsic=np.array(d["K"], dtype=float).reshape(3, 3),
                rotation=np.array(d["R"], dtype=float).reshape(3, 3),
                translation=np.array(d["t"], dtype=float).reshape(3),
                image_size=(int(d["width"]), int(d["height"])),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, GeometryError):
                raise
            raise GeometryError(f"bad camera entry {d!r}: {exc}") from exc


@dataclass(frozen=True, eq=False)
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        o = np.array(self.origin, dtype=float).reshape(3)
        d = np.array(self.direction, dtype=float).reshape(3)
        n = np.linalg.norm(d)
        if not np.isfinite(n) or n == 0.0:
            raise GeometryError("ray direction must be a finite non-zero vector")
        d = d / n
        o.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)


def look_at(camera_id: int, position, target, focal: float, image_size=(2048, 2048),
            up=(0.0, 0.0, 1.0)) -> Camera:
    """Build a camera at ``position`` looking at ``target`` (z-up world)."""
    position = np.asarray(position, dtype=float)
    forward = np.asarray(target, dtype=float) - position
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(up, dtype=float))
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    R = np.stack([right, down, forward])
    t = -R @ position
    w, h = image_size
    K = np.array([[focal, 0.0, w / 2.0], [0.0, focal, h / 2.0], [0.0, 0.0, 1.0]])
    return Camera(camera_id, K, R, t, (w, h))


def back_project(cam: Camera, p) -> Ray:
    p = np.asarray(p, dtype=float).reshape(2)
    if not np.all(np.isfinite(p)):
        raise GeometryError("pixel coordinates must be finite")
    return Ray(cam.center, cam.ray_directions(p)[0])


def project(cam: Camera, x) -> np.ndarray:
    pix, depth = cam.project_many(np.asarray(x, dtype=float).reshape(1, 3))
    if not depth[0] > _MIN_DEPTH:
        raise BehindCameraError(f"point {list(np.ravel(x))} is behind camera {cam.id}")
    return pix[0]


def point_line_distance_many(x, origins, dirs) -> np.ndarray:
    """Broadcasting point-to-line distance; ``dirs`` must be unit length."""
    w = np.asarray(x, dtype=float) - origins
    along = np.sum(w * dirs, axis=-1, keepdims=True)
    return np.linalg.norm(w - along * dirs, axis=-1)


def line_line_distance_many(o1, d1, o2, d2) -> np.ndarray:
    """Broadcasting distance between infinite lines with unit directions."""
    o1, d1, o2, d2 = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (o1, d1, o2, d2)))
    n = np.cross(d1, d2)
    nn = np.linalg.norm(n, axis=-1)
    w = o2 - o1
    parallel = nn < _PARALLEL_EPS
    with np.errstate(divide="ignore", invalid="ignore"):
        skew = np.abs(np.sum(w * n, axis=-1)) / nn
    if np.any(parallel):
        # min() of the two point-to-line distances keeps the result symmetric
        a = point_line_distance_many(o2, o1, d1)
        b = point_line_distance_many(o1, o2, d2)
        skew = np.where(parallel, np.minimum(a, b), skew)
    return skew


@njit(cache=True)
def _point_line(px, py, pz, ox, oy, oz, dx, dy, dz):
    wx, wy, wz = px - ox, py - oy, pz - oz
    t = wx * dx + wy * dy + wz * dz
    rx, ry, rz = wx - t * dx, wy - t * dy, wz - t * dz
    return np.sqrt(rx * rx + ry * ry + rz * rz)


@njit(cache=True)
def pairwise_line_distances(origins, dirs, group):
    """Line-line distances between all rows of ``(B, M, 3)`` padded ray arrays.

    Compiled equivalent of :func:`line_line_distance_many` over every pair
    ``(a, b)`` of one batch whose ``group`` labels differ and are both
    non-negative; other entries are ``inf``.
    """
    B, M = group.shape
    out = np.full((B, M, M), np.inf)
    for q in range(B):
        for a in range(M):
            if group[q, a] < 0:
                continue
            oax, oay, oaz = origins[q, a, 0], origins[q, a, 1], origins[q, a, 2]
            dax, day, daz = dirs[q, a, 0], dirs[q, a, 1], dirs[q, a, 2]
            for b in range(a + 1, M):
                if group[q, b] < 0 or group[q, b] == group[q, a]:
                    continue
                obx, oby, obz = origins[q, b, 0], origins[q, b, 1], origins[q, b, 2]
                dbx, dby, dbz = dirs[q, b, 0], dirs[q, b, 1], dirs[q, b, 2]
                nx = day * dbz - daz * dby
                ny = daz * dbx - dax * dbz
                nz = dax * dby - day * dbx
                nn = np.sqrt(nx * nx + ny * ny + nz * nz)
                if nn < _PARALLEL_EPS:
                    d = min(_point_line(obx, oby, obz, oax, oay, oaz, dax, day, daz),
                            _point_line(oax, oay, oaz, obx, oby, obz, dbx, dby, dbz))
                else:
                    d = abs((obx - oax) * nx + (oby - oay) * ny + (obz - oaz) * nz) / nn
                out[q, a, b] = d
                out[q, b, a] = d
    return out


def line_line_distance(a: Ray, b: Ray) -> float:
    return float(line_line_distance_many(a.origin, a.direction, b.origin, b.direction))


def point_line_distance(x, r: Ray) -> float:
    x = np.asarray(x, dtype=float).reshape(3)
    return float(point_line_distance_many(x, r.origin, r.direction))


def triangulate_rays(origins: np.ndarray, dirs: np.ndarray) -> tuple[np.ndarray, float]:
    """Least-squares point closest to a bundle of rays.

    Minimises the summed squared point-to-ray distance, which is linear in
    the point: ``sum_k (I - d_k d_k^T)(x - o_k) = 0``.
    """
    origins = np.asarray(origins, dtype=float).reshape(-1, 3)
    dirs = np.asarray(dirs, dtype=float).reshape(-1, 3)
    if origins.shape[0] < 2:
        raise InsufficientViewsError(f"need at least 2 rays, got {origins.shape[0]}")
    if np.ptp(origins, axis=0).max() < 1e-12:
        raise DegenerateGeometryError("all rays share one camera center")
    proj = np.eye(3)[None] - dirs[:, :, None] * dirs[:, None, :]
    A = proj.sum(axis=0)
    b = np.einsum("kij,kj->i", proj, origins)
    if np.linalg.cond(A) > DEGENERATE_CONDITION:
        raise DegenerateGeometryError("ray bundle is nearly parallel")
    x = np.linalg.solve(A, b)
    resid = point_line_distance_many(x, origins, dirs)
    return x, float(np.sqrt(np.mean(resid**2)))


def triangulate(observations: Sequence[tuple[Camera, Sequence[float]]]) -> tuple[np.ndarray, float]:
    """Triangulate one point from ``(camera, pixel)`` pairs.

    Returns the point and the RMS point-to-ray distance in meters.
    """
    if len(observations) < 2:
        raise InsufficientViewsError(f"need at least 2 views, got {len(observations)}")
    origins = np.stack([cam.center for cam, _ in observations])
    dirs = np.concatenate([cam.ray_directions(np.asarray(p, dtype=float)) for cam, p in observations])
    return triangulate_rays(origins, dirs)


def save_calibration(path, cameras: Iterable[Camera]) -> None:
    doc = {
        "format": CALIBRATION_FORMAT,
        "version": CALIBRATION_VERSION,
        "cameras": [cam.to_dict() for cam in cameras],
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_calibration(path) -> list[Camera]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise GeometryError(f"{path}: not valid JSON ({exc})") from exc
    if doc.get("format") != CALIBRATION_FORMAT:
        raise GeometryError(f"{path}: not a calibration file")
    if doc.get("version") != CALIBRATION_VERSION:
        raise GeometryError(f"{path}: unsupported calibration version {doc.get('version')}")
    cams = [Camera.from_dict(d) for d in doc["cameras"]]
    ids = [c.id for c in cams]
    if len(set(ids)) != len(ids):
        raise GeometryError(f"{path}: duplicate camera ids")
    return sorted(cams, key=lambda c: c.id)
