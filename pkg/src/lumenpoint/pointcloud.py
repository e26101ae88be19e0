"""Point clouds and the observation-to-rendering view transform.

The transform moves a cloud captured at the camera (observation position)
to the frame of a virtual object placed at a chosen pixel: translate by the
scaled vector to the target surface point, then rotate into the panorama
frame.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .camera import CameraIntrinsics, unproject_pixels
from .errors import EmptyCloud, InvalidImage, NotARotation, ZeroDepthTarget
from .panorama import MISSING, EnvironmentMap, dirs_to_pixels

log = logging.getLogger(__name__)

ROTATION_TOL = 1e-6
DEFAULT_SCALE = 0.95


@dataclass
class PointCloud:
    """N points with positions in meters and linear RGB colors, both (N, 3)."""

    positions: np.ndarray
    colors: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.colors = np.asarray(self.colors, dtype=np.float64).reshape(-1, 3)
        if len(self.positions) != len(self.colors):
            raise InvalidImage("positions and colors differ in length")
        if not np.all(np.isfinite(self.positions)):
            raise InvalidImage("point positions must be finite")
        if np.any(self.colors < 0):
            raise InvalidImage("point colors must be non-negative")

    def __len__(self) -> int:
        return len(self.positions)

    def as_float32(self) -> "PointCloud":
        """Round through 32-bit storage, as a save/load cycle would."""
        return PointCloud(
            self.positions.astype(np.float32).astype(np.float64),
            self.colors.astype(np.float32).astype(np.float64),
        )


def check_rotation(rot, tol: float = ROTATION_TOL) -> np.ndarray:
    r = np.asarray(rot, dtype=np.float64)
    if r.shape != (3, 3) or not np.all(np.isfinite(r)):
        raise NotARotation(f"rotation must be a finite 3x3 matrix, got shape {r.shape}")
    if np.abs(r.T @ r - np.eye(3)).max() > tol:
        raise NotARotation("rotation is not orthonormal")
    if abs(np.linalg.det(r) - 1.0) > tol:
        raise NotARotation("rotation has determinant != +1")
    return r


@dataclass
class RenderingRelation:
    """Where to render (a pixel in the observation image) and how to align."""

    pixel_uv: tuple[float, float]
    scale_factor: float = DEFAULT_SCALE
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        self.pixel_uv = (float(self.pixel_uv[0]), float(self.pixel_uv[1]))
        self.rotation = check_rotation(self.rotation)
        if not 0 < self.scale_factor <= 1:
            raise InvalidImage(f"scale_factor must lie in (0, 1], got {self.scale_factor}")


def target_point(rel: RenderingRelation, k: CameraIntrinsics, depth_at_uv: float) -> np.ndarray:
    if not depth_at_uv > 0:
        raise ZeroDepthTarget(f"depth at rendering pixel {rel.pixel_uv} is {depth_at_uv}")
    u, v = rel.pixel_uv
    return unproject_pixels(u, v, depth_at_uv, k)


def recenter(pc: PointCloud, rel: RenderingRelation, k: CameraIntrinsics,
             depth_at_uv: float) -> PointCloud:
    """Translate the cloud by ``-scale_factor * t``, t being the target surface point."""
    t = target_point(rel, k, depth_at_uv)
    return PointCloud(pc.positions - rel.scale_factor * t, pc.colors.copy())


def rotate(pc: PointCloud, rot) -> PointCloud:
    r = check_rotation(rot)
    return PointCloud(pc.positions @ r.T, pc.colors.copy())


def transform(pc: PointCloud, rel: RenderingRelation, k: CameraIntrinsics,
              depth_at_uv: float) -> PointCloud:
    """Full view transform: recenter, then rotate into the panorama frame."""
    return rotate(recenter(pc, rel, k, depth_at_uv), rel.rotation)


def downsample_uniform(pc: PointCloud, n: int, seed: int) -> PointCloud:
    """Pick ``min(n, len(pc))`` points uniformly without replacement."""
    if len(pc) == 0:
        raise EmptyCloud("cannot downsample an empty cloud")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    idx = rng.permutation(len(pc))[: min(n, len(pc))]
    return PointCloud(pc.positions[idx], pc.colors[idx])


def project_equirect(pc: PointCloud, width: int, height: int) -> EnvironmentMap:
    """Splat point colors onto a panorama around the origin.

    Each pixel receives the mean color of the points whose direction falls in
    it; uncovered pixels hold the missing sentinel. Points closer than 1e-9 to
    the origin have no direction; they are skipped and counted in
    ``meta["skipped_at_origin"]``.
    """
    if len(pc) == 0:
        raise EmptyCloud("cannot project an empty cloud")
    norms = np.linalg.norm(pc.positions, axis=1)
    keep = norms >= 1e-9
    skipped = int((~keep).sum())
    if skipped:
        log.warning("skipped %d point(s) at the origin", skipped)
    col, row = dirs_to_pixels(pc.positions[keep], width, height)
    flat = row * width + col
    size = width * height
    count = np.bincount(flat, minlength=size)
    pixels = np.full((size, 3), MISSING)
    hit = count > 0
    for c in range(3):
        s = np.bincount(flat, weights=pc.colors[keep, c], minlength=size)
        pixels[hit, c] = s[hit] / count[hit]
    return EnvironmentMap(pixels.reshape(height, width, 3),
                          meta={"skipped_at_origin": skipped,
                                "coverage": float(hit.mean())})
