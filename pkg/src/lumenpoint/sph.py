"""Order-2 real spherical harmonics for diffuse lighting.

Basis order is (l, m) = (0,0), (1,-1), (1,0), (1,1), (2,-2), (2,-1), (2,0),
(2,1), (2,2), orthonormal over the sphere, with +z as the polar axis.
Coefficients are stored as a (3, 9) array: one row per RGB channel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptySamples, InvalidImage, MissingPixels, NotUnit
from .panorama import (EnvironmentMap, pixel_directions, solid_angle_weights,
                       dirs_to_pixels)

N_BASIS = 9
LM = [(0, 0), (1, -1), (1, 0), (1, 1), (2, -2), (2, -1), (2, 0), (2, 1), (2, 2)]
BAND = np.array([l for l, _ in LM])

_C0 = 0.5 * np.sqrt(1 / np.pi)
_C1 = np.sqrt(3 / (4 * np.pi))
_C2 = 0.5 * np.sqrt(15 / np.pi)
_C20 = 0.25 * np.sqrt(5 / np.pi)
_C22 = 0.25 * np.sqrt(15 / np.pi)

# clamped-cosine convolution factors per band
A_HAT = np.array([np.pi, 2 * np.pi / 3, np.pi / 4])


@dataclass
class ShCoefficients:
    coeffs: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.float64)
        if self.coeffs.shape != (3, N_BASIS):
            raise InvalidImage(f"SH coefficients must be (3, 9), got {self.coeffs.shape}")
        if not np.all(np.isfinite(self.coeffs)):
            raise InvalidImage("SH coefficients must be finite")

    def flat(self) -> np.ndarray:
        return self.coeffs.reshape(27)

    @classmethod
    def zeros(cls) -> "ShCoefficients":
        return cls(np.zeros((3, N_BASIS)))


def eval_basis(dirs) -> np.ndarray:
    """Basis values for an array of unit directions, shape (..., 9). No checks."""
    d = np.asarray(dirs, dtype=np.float64)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    return np.stack([
        np.full_like(x, _C0),
        _C1 * y,
        _C1 * z,
        _C1 * x,
        _C2 * x * y,
        _C2 * y * z,
        _C20 * (3 * z * z - 1),
        _C2 * x * z,
        _C22 * (x * x - y * y),
    ], axis=-1)


def sh_basis(direction) -> np.ndarray:
    """The 9 basis values at one unit direction."""
    d = np.asarray(direction, dtype=np.float64)
    if d.shape != (3,):
        raise NotUnit(f"direction must be a 3-vector, got shape {d.shape}")
    if abs(np.linalg.norm(d) - 1.0) > 1e-6:
        raise NotUnit(f"direction {d} is not unit length")
    return eval_basis(d)


def _pairwise_sum(x: np.ndarray) -> np.ndarray:
    """Sum over the leading axis by tree reduction (fixed order)."""
    while len(x) > 1:
        if len(x) % 2:
            x = np.concatenate([x[:-2], x[-2:-1] + x[-1:]])
        x = x[0::2] + x[1::2]
    return x[0]


def _pixels(env) -> np.ndarray:
    if isinstance(env, EnvironmentMap):
        return env.pixels.astype(np.float64)
    px = np.asarray(env, dtype=np.float64)
    return EnvironmentMap(px).pixels


def project_quadrature(env) -> ShCoefficients:
    """Project a complete panorama onto the basis with solid-angle weights."""
    px = _pixels(env)
    h, w = px.shape[:2]
    if np.any(np.all(px == -1.0, axis=-1)):
        raise MissingPixels("panorama has missing pixels; use project_masked")
    y = eval_basis(pixel_directions(w, h))
    wgt = solid_angle_weights(w, h)
    # (H*W, 3, 9) products reduced pairwise over pixels
    prod = (px * wgt[..., None]).reshape(-1, 3)[:, :, None] * y.reshape(-1, 1, N_BASIS)
    return ShCoefficients(_pairwise_sum(prod))


def project_masked(env) -> ShCoefficients:
    """Projection of a panorama with holes, renormalized by covered solid angle.

    Coefficients are scaled by 4pi / covered solid angle, so a uniformly
    missing region leaves the DC term unbiased. ``meta["estimate"]`` is set.
    """
    px = _pixels(env)
    h, w = px.shape[:2]
    covered = ~np.all(px == -1.0, axis=-1)
    if not covered.any():
        raise MissingPixels("panorama has no covered pixels")
    y = eval_basis(pixel_directions(w, h))
    wgt = solid_angle_weights(w, h) * covered
    vals = np.where(covered[..., None], px, 0.0)
    prod = (vals * wgt[..., None]).reshape(-1, 3)[:, :, None] * y.reshape(-1, 1, N_BASIS)
    omega = float(_pairwise_sum(wgt.reshape(-1)))
    total = float(_pairwise_sum(solid_angle_weights(w, h).reshape(-1)))
    out = _pairwise_sum(prod) * (total / omega)
    return ShCoefficients(out, meta={"estimate": True, "coverage": omega / total})


def project_mc(dirs, radiance) -> ShCoefficients:
    """Monte-Carlo projection from uniformly distributed sphere samples.

    ``coeffs[c, j] = 4pi/N * sum_i radiance[i, c] * Y_j(dirs[i])``.
    """
    d = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    rad = np.asarray(radiance, dtype=np.float64).reshape(-1, 3)
    if len(d) == 0:
        raise EmptySamples("need at least one sample")
    if len(d) != len(rad):
        raise ValueError("dirs and radiance differ in length")
    if np.abs(np.linalg.norm(d, axis=1) - 1.0).max() > 1e-6:
        raise NotUnit("sample directions must be unit length")
    prod = rad[:, :, None] * eval_basis(d)[:, None, :]
    return ShCoefficients(_pairwise_sum(prod) * (4 * np.pi / len(d)))


def uniform_sphere(n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` directions uniformly distributed on the unit sphere."""
    z = rng.uniform(-1.0, 1.0, n)
    phi = rng.uniform(0.0, 2 * np.pi, n)
    s = np.sqrt(np.maximum(0.0, 1 - z * z))
    return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=-1)


def sample_env(env, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Uniform sphere directions and the radiance of the pixel each one hits."""
    px = _pixels(env)
    h, w = px.shape[:2]
    d = uniform_sphere(n, rng)
    col, row = dirs_to_pixels(d, w, h)
    return d, px[row, col]


def irradiance_sh(light: ShCoefficients) -> ShCoefficients:
    """Diffuse (clamped cosine) convolution as per-band scaling."""
    return ShCoefficients(light.coeffs * A_HAT[BAND][None, :])


def eval_sh(sh: ShCoefficients, dirs) -> np.ndarray:
    """Evaluate the expansion at directions, shape (..., 3)."""
    return eval_basis(dirs) @ sh.coeffs.T


def reconstruct_irradiance_map(irr: ShCoefficients, width: int, height: int) -> np.ndarray:
    """Irradiance panorama (height, width, 3) from irradiance coefficients."""
    return eval_sh(irr, pixel_directions(width, height))


def synthesize_env(coeffs, width: int, height: int) -> np.ndarray:
    """Panorama whose radiance is the given SH expansion (band-limited)."""
    return eval_sh(ShCoefficients(coeffs), pixel_directions(width, height))


def diffuse_convolution_oracle(env, width: int, height: int) -> np.ndarray:
    """Brute-force irradiance: sum_pixels L(w) max(0, n.w) dOmega for each output n.

    Quadratic in the pixel count; meant for small maps (<= 128x64 outputs).
    """
    px = _pixels(env)
    h, w = px.shape[:2]
    if np.any(np.all(px == -1.0, axis=-1)):
        raise MissingPixels("oracle needs a complete panorama")
    src = pixel_directions(w, h).reshape(-1, 3)
    rad = (px * solid_angle_weights(w, h)[..., None]).reshape(-1, 3)
    normals = pixel_directions(width, height).reshape(-1, 3)
    out = np.empty((len(normals), 3))
    step = 1024
    for i in range(0, len(normals), step):
        cosines = np.maximum(normals[i:i + step] @ src.T, 0.0)
        out[i:i + step] = cosines @ rad
    return out.reshape(height, width, 3)
