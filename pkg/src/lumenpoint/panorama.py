"""Equirectangular panorama container and its spherical convention.

Longitude runs from -pi at the left edge to +pi at the right edge and is
measured from +z around the vertical axis; latitude is +pi/2 at the top row.
"Up" is -y, matching the image-aligned camera frame (+y down). A unit
direction therefore reads::

    d = (cos(lat) * sin(lon), -sin(lat), cos(lat) * cos(lon))

Pixel (0, 0) has its top-left corner at (lon, lat) = (-pi, +pi/2).
Missing pixels hold -1 in every channel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidImage

MISSING = -1.0


@dataclass
class EnvironmentMap:
    """Radiance panorama, ``pixels`` has shape (height, width, 3)."""

    pixels: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise InvalidImage(f"panorama must be (H, W, 3), got {self.pixels.shape}")
        h, w = self.pixels.shape[:2]
        if w != 2 * h:
            raise InvalidImage(f"panorama width must be 2*height, got {w}x{h}")
        if not np.all(np.isfinite(self.pixels)):
            raise InvalidImage("panorama contains non-finite values")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def missing_mask(self) -> np.ndarray:
        return np.all(self.pixels == MISSING, axis=-1)

    @property
    def complete(self) -> bool:
        return not self.missing_mask.any()


def _check_dims(width: int, height: int) -> None:
    if width != 2 * height or height < 1:
        raise InvalidImage(f"panorama width must be 2*height, got {width}x{height}")


def pixel_angles(width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    """Longitude per column and latitude per row, at pixel centers."""
    _check_dims(width, height)
    lon = (np.arange(width) + 0.5) * (2 * np.pi / width) - np.pi
    lat = np.pi / 2 - (np.arange(height) + 0.5) * (np.pi / height)
    return lon, lat


def angles_to_dirs(lon, lat) -> np.ndarray:
    lon = np.asarray(lon, dtype=np.float64)
    lat = np.asarray(lat, dtype=np.float64)
    lon, lat = np.broadcast_arrays(lon, lat)
    c = np.cos(lat)
    return np.stack([c * np.sin(lon), -np.sin(lat), c * np.cos(lon)], axis=-1)


def pixel_directions(width: int, height: int) -> np.ndarray:
    """Unit direction through every pixel center, shape (height, width, 3)."""
    lon, lat = pixel_angles(width, height)
    return angles_to_dirs(lon[None, :], lat[:, None])


def solid_angle_weights(width: int, height: int) -> np.ndarray:
    """Per-pixel solid angle (2pi/W)(pi/H)cos(lat_center), shape (height, width)."""
    _, lat = pixel_angles(width, height)
    row = (2 * np.pi / width) * (np.pi / height) * np.cos(lat)
    return np.broadcast_to(row[:, None], (height, width))


def dirs_to_pixels(dirs, width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    """Column and row index of the pixel each direction falls in.

    ``dirs`` need not be normalized but must be non-zero.
    """
    _check_dims(width, height)
    d = np.asarray(dirs, dtype=np.float64)
    lon = np.arctan2(d[..., 0], d[..., 2])
    horiz = np.hypot(d[..., 0], d[..., 2])
    lat = np.arctan2(-d[..., 1], horiz)
    col = np.floor((lon + np.pi) / (2 * np.pi) * width).astype(np.int64) % width
    row = np.floor((np.pi / 2 - lat) / np.pi * height).astype(np.int64)
    row = np.clip(row, 0, height - 1)
    return col, row
