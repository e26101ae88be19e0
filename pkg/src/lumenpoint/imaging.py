"""RGB-D images: depth hole filling and unprojection to point clouds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import CameraIntrinsics, unproject_pixels
from .errors import AllDepthMissing, InvalidImage
from .pointcloud import PointCloud


@dataclass
class RgbdImage:
    """Linear RGB ``color`` (H, W, 3) and metric ``depth`` (H, W); depth 0 = missing."""

    color: np.ndarray
    depth: np.ndarray

    def __post_init__(self):
        self.color = np.asarray(self.color, dtype=np.float32)
        self.depth = np.asarray(self.depth, dtype=np.float32)
        if self.color.ndim != 3 or self.color.shape[2] != 3:
            raise InvalidImage(f"color must be (H, W, 3), got {self.color.shape}")
        if self.depth.shape != self.color.shape[:2]:
            raise InvalidImage(
                f"depth {self.depth.shape} does not match color {self.color.shape[:2]}"
            )
        if not np.all(np.isfinite(self.depth)) or np.any(self.depth < 0):
            raise InvalidImage("depth must be finite and non-negative")
        if np.any(self.color < 0):
            raise InvalidImage("color must be non-negative")

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]


@dataclass(frozen=True)
class DepthFillConfig:
    spatial_sigma: float = 2.0
    range_sigma: float = 0.1
    window_radius: int = 5

    def validate_for(self, width: int, height: int) -> None:
        if not (self.spatial_sigma > 0 and self.range_sigma > 0 and self.window_radius > 0):
            raise InvalidImage("depth fill parameters must be strictly positive")
        if self.window_radius > min(width, height) / 2:
            raise InvalidImage(
                f"window_radius {self.window_radius} exceeds half the image size"
            )


def fill_depth(img: RgbdImage, cfg: DepthFillConfig = DepthFillConfig()) -> RgbdImage:
    """Fill missing depth with a cross bilateral filter guided by the color image.

    Each hole pixel p with at least one valid depth inside its square window
    becomes ``sum_q w(p, q) D(q) / sum_q w(p, q)`` over valid q, where
    ``w = exp(-|p - q|^2 / 2 s^2) * exp(-|C(p) - C(q)|^2 / 2 r^2)``. Valid pixels
    are left untouched and holes with no valid neighbor stay at 0. The loop
    runs over window offsets, so the accumulation order is fixed.
    """
    cfg.validate_for(img.width, img.height)
    depth = img.depth.astype(np.float64)
    valid = depth > 0
    if not valid.any():
        raise AllDepthMissing("no valid depth pixel to fill from")
    holes = ~valid
    if not holes.any():
        return RgbdImage(img.color.copy(), img.depth.copy())

    h, w = depth.shape
    r = cfg.window_radius
    color = img.color.astype(np.float64)
    pad = ((r, r), (r, r))
    dpad = np.pad(depth, pad)
    vpad = np.pad(valid, pad)
    cpad = np.pad(color, pad + ((0, 0),))

    num = np.zeros((h, w))
    den = np.zeros((h, w))
    # spatial-only sums, used where every range weight underflows to zero
    num_s = np.zeros((h, w))
    den_s = np.zeros((h, w))
    inv_s = 1.0 / (2 * cfg.spatial_sigma ** 2)
    inv_r = 1.0 / (2 * cfg.range_sigma ** 2)
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            sl = (slice(r + dy, r + dy + h), slice(r + dx, r + dx + w))
            vq = vpad[sl]
            dq = dpad[sl]
            ws = np.exp(-(dx * dx + dy * dy) * inv_s) * vq
            dc = ((cpad[sl] - color) ** 2).sum(axis=-1)
            wt = ws * np.exp(-dc * inv_r)
            num += wt * dq
            den += wt
            num_s += ws * dq
            den_s += ws

    out = depth.copy()
    use_full = holes & (den > 0)
    out[use_full] = num[use_full] / den[use_full]
    use_spatial = holes & (den == 0) & (den_s > 0)
    out[use_spatial] = num_s[use_spatial] / den_s[use_spatial]
    return RgbdImage(img.color.copy(), out.astype(np.float32))


def unproject(img: RgbdImage, k: CameraIntrinsics) -> PointCloud:
    """One point per pixel with positive depth, in row-major pixel order."""
    k.validate_for(img.width, img.height)
    v, u = np.nonzero(img.depth > 0)
    z = img.depth[v, u].astype(np.float64)
    pts = unproject_pixels(u, v, z, k)
    return PointCloud(pts, img.color[v, u].astype(np.float64))


def srgb_to_linear(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.where(x <= 0.04045, x / 12.92, ((x + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(x: np.ndarray) -> np.ndarray:
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * x ** (1 / 2.4) - 0.055)
