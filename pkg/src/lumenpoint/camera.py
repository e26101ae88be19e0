"""Pinhole camera intrinsics.

Convention: +z forward along the optical axis, +x right, +y down, so that
pixel column ``u`` and row ``v`` map to camera coordinates via
``x = (u - cx) * z / fx`` and ``y = (v - cy) * z / fy``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidImage


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidImage(f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")

    def validate_for(self, width: int, height: int) -> None:
        """Check the principal point lies inside a ``width`` x ``height`` image."""
        if not (0 <= self.cx < width and 0 <= self.cy < height):
            raise InvalidImage(
                f"principal point ({self.cx}, {self.cy}) outside {width}x{height} image"
            )

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy}

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]))

    @classmethod
    def from_fov(cls, width: int, height: int, hfov_deg: float) -> "CameraIntrinsics":
        f = 0.5 * width / np.tan(np.radians(hfov_deg) / 2)
        return cls(float(f), float(f), width / 2.0, height / 2.0)


def unproject_pixels(u, v, z, k: CameraIntrinsics) -> np.ndarray:
    """Lift pixel coordinates with depth to camera-frame points, shape (..., 3)."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    x = (u - k.cx) * z / k.fx
    y = (v - k.cy) * z / k.fy
    return np.stack(np.broadcast_arrays(x, y, z), axis=-1)


def project_points(points, k: CameraIntrinsics) -> np.ndarray:
    """Inverse of :func:`unproject_pixels`: camera points to (u, v) pixels."""
    p = np.asarray(points, dtype=np.float64)
    z = p[..., 2]
    u = p[..., 0] * k.fx / z + k.cx
    v = p[..., 1] * k.fy / z + k.cy
    return np.stack([u, v], axis=-1)
