"""Evaluation metrics and analytic model-complexity accounting."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .learner.model import PointConvConfig
from .learner.train import sh_l2_loss
from .sph import (ShCoefficients, irradiance_sh, project_quadrature,
                  reconstruct_irradiance_map)

DEFAULT_RES = (64, 32)


def irradiance_map(sh: ShCoefficients, res=DEFAULT_RES) -> np.ndarray:
    return reconstruct_irradiance_map(irradiance_sh(sh), *res)


def irradiance_map_l2(pred: ShCoefficients, truth_env, res=DEFAULT_RES) -> float:
    """Mean squared difference between predicted and ground-truth irradiance maps.

    Both maps are reconstructed from SH at ``res`` = (width, height); the truth
    coefficients come from projecting ``truth_env``.
    """
    truth = irradiance_map(project_quadrature(truth_env), res)
    return float(np.mean((irradiance_map(pred, res) - truth) ** 2))


def format_mean_err(mean: float, err: float) -> str:
    """Table style used for reporting, e.g. ``0.433 (± 0.02)``."""
    return f"{mean:.3f} (± {err:.2f})"


def _mean_stderr(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=np.float64)
    if len(v) < 2:
        return float(v.mean()), 0.0
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(len(v)))


@dataclass
class EvalReport:
    sh_l2: list[float] = field(default_factory=list)
    irradiance_l2: list[float] = field(default_factory=list)

    @property
    def sh_l2_mean(self) -> float:
        return _mean_stderr(self.sh_l2)[0]

    @property
    def sh_l2_stderr(self) -> float:
        return _mean_stderr(self.sh_l2)[1]

    @property
    def irradiance_l2_mean(self) -> float:
        return _mean_stderr(self.irradiance_l2)[0]

    @property
    def irradiance_l2_stderr(self) -> float:
        return _mean_stderr(self.irradiance_l2)[1]

    def summary(self) -> dict:
        return {
            "n": len(self.sh_l2),
            "sh_l2_mean": self.sh_l2_mean,
            "sh_l2_stderr": self.sh_l2_stderr,
            "irradiance_l2_mean": self.irradiance_l2_mean,
            "irradiance_l2_stderr": self.irradiance_l2_stderr,
            "sh_l2": format_mean_err(self.sh_l2_mean, self.sh_l2_stderr),
            "irradiance_l2": format_mean_err(self.irradiance_l2_mean, self.irradiance_l2_stderr),
        }

    def to_json(self) -> dict:
        return {"summary": self.summary(), "per_tuple": asdict(self)}

    @classmethod
    def from_json(cls, obj: dict) -> "EvalReport":
        return cls(**obj["per_tuple"])


def evaluate(predict, tuples, res=DEFAULT_RES) -> EvalReport:
    """Score ``predict(cloud) -> ShCoefficients`` on every tuple, in order."""
    if not tuples:
        raise ValueError("empty test set")
    report = EvalReport()
    for tup in tuples:
        pred = predict(tup.cloud)
        report.sh_l2.append(sh_l2_loss(pred, tup.sh))
        report.irradiance_l2.append(irradiance_map_l2(pred, tup.env, res))
    return report


@dataclass
class ComplexityReport:
    n_points: int
    params: int
    macs: int
    per_layer: dict = field(default_factory=dict)


def count_complexity(cfg: PointConvConfig, n_points: int) -> ComplexityReport:
    """Closed-form parameter and multiply-accumulate counts of one forward pass.

    Mirrors :class:`~lumenpoint.learner.model.PointConvModel`: per block, the
    weight MLP runs on every (centroid, neighbor) offset, the contraction of
    weights against neighbor features costs ``M * F * k`` per centroid, and
    the bias-free MLP runs once per centroid. Pooling and activations are
    not counted.
    """
    params = 0
    macs = 0
    layers = {}
    feat = cfg.in_features
    counts = cfg.point_counts(n_points)
    m = cfg.weightnet_out
    for i, b in enumerate(cfg.blocks):
        c = counts[i + 1]
        wp = wm = 0
        prev = 3
        for h in cfg.weightnet_hidden + (m,):
            wp += prev * h + h
            wm += prev * h
            prev = h
        mp = 0
        prev = m * feat
        for h in b.mlp:
            mp += prev * h
            prev = h
        block_macs = c * b.k * wm + c * m * feat * b.k + c * mp
        layers[f"block{i}"] = {"centroids": c, "params": wp + mp, "macs": block_macs}
        params += wp + mp
        macs += block_macs
        feat = prev
    hp = hm = 0
    prev = feat
    for h in cfg.head:
        hp += prev * h + h
        hm += prev * h
        prev = h
    layers["head"] = {"params": hp, "macs": hm}
    return ComplexityReport(n_points, params + hp, macs + hm, layers)
