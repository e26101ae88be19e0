"""Loss, optimizers and the deterministic training loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import DivergedLoss
from ..pointcloud import PointCloud
from ..sph import ShCoefficients
from .autodiff import Tensor
from .model import PointConvModel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    steps: int = 2000
    batch_size: int = 8
    seed: int = 0
    optimizer: str = "adam"
    amsgrad: bool = True
    schedule: str = "cosine"
    # large enough that parameters with near-zero gradient history cannot take lr-sized steps
    eps: float = 1e-4

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.schedule not in ("constant", "cosine"):
            raise ValueError(f"unknown schedule {self.schedule!r}")

    def lr_at(self, step: int) -> float:
        if self.schedule == "constant":
            return self.learning_rate
        return 0.5 * self.learning_rate * (1 + np.cos(np.pi * step / self.steps))


def sh_l2_loss(pred, truth):
    """Squared SH distance summed over the 27 slots, divided by 9.

    Accepts ShCoefficients / arrays (returns a float) or a (B, 27) Tensor with a
    (B, 27) array of targets (returns the batch mean as a Tensor).
    """
    if isinstance(pred, Tensor):
        diff = pred - np.asarray(truth, dtype=np.float64).reshape(pred.shape)
        return diff.square().sum(axis=-1).mean() * (1.0 / 9.0)
    p = pred.coeffs if isinstance(pred, ShCoefficients) else np.asarray(pred, dtype=np.float64)
    t = truth.coeffs if isinstance(truth, ShCoefficients) else np.asarray(truth, dtype=np.float64)
    return float(((p.reshape(-1) - t.reshape(-1)) ** 2).sum() / 9.0)


class Adam:
    """Adam; with ``amsgrad`` the second-moment estimate never decreases."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8, amsgrad=False):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.amsgrad = amsgrad
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.vmax = [np.zeros_like(p.data) for p in params] if amsgrad else self.v
        self.t = 0

    def step(self):
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for p, m, v, vmax in zip(self.params, self.m, self.v, self.vmax):
            m *= self.beta1
            m += (1 - self.beta1) * p.grad
            v *= self.beta2
            v += (1 - self.beta2) * p.grad ** 2
            if self.amsgrad:
                np.maximum(vmax, v, out=vmax)
            p.data -= self.lr * (m / c1) / (np.sqrt(vmax / c2) + self.eps)


class SGD:
    def __init__(self, params, lr):
        self.params = params
        self.lr = lr

    def step(self):
        for p in self.params:
            p.data -= self.lr * p.grad


@dataclass
class TrainResult:
    model: PointConvModel
    losses: list[float]


def train(model: PointConvModel, clouds: list[PointCloud], targets: list[ShCoefficients],
          cfg: TrainConfig = TrainConfig(), log_every: int = 0) -> TrainResult:
    """Fit ``model`` in place on (cloud, SH) pairs; returns it with the per-step loss.

    Batches are drawn from a seeded per-epoch shuffle; a full-size batch uses
    the data in the given order. All clouds in a batch must share a size.
    """
    if not clouds:
        raise ValueError("training set is empty")
    if len(clouds) != len(targets):
        raise ValueError("clouds and targets differ in length")
    prepared = [model.prepare(c) for c in clouds]
    y = np.stack([t.coeffs.reshape(27) for t in targets])
    params = model.parameters()
    if cfg.optimizer == "adam":
        opt = Adam(params, cfg.learning_rate, eps=cfg.eps, amsgrad=cfg.amsgrad)
    else:
        opt = SGD(params, cfg.learning_rate)
    rng = np.random.default_rng(cfg.seed)
    n = len(clouds)
    bs = min(cfg.batch_size, n)
    order = np.arange(n)
    cursor = n
    losses = []
    for step in range(cfg.steps):
        if bs == n:
            batch = order
        else:
            if cursor + bs > n:
                order = rng.permutation(n)
                cursor = 0
            batch = order[cursor:cursor + bs]
            cursor += bs
        feats = np.stack([prepared[i][0] for i in batch])
        geoms = [prepared[i][1] for i in batch]
        model.zero_grad()
        loss = sh_l2_loss(model.forward_batch(feats, geoms), y[batch])
        value = float(loss.data)
        if not np.isfinite(value):
            raise DivergedLoss(f"loss became {value} at step {step}")
        loss.backward()
        opt.lr = cfg.lr_at(step)
        opt.step()
        losses.append(value)
        if log_every and step % log_every == 0:
            log.info("step %d loss %.6g", step, value)
    return TrainResult(model, losses)


def predict_many(model: PointConvModel, clouds: list[PointCloud]) -> list[ShCoefficients]:
    return [model.predict(c) for c in clouds]
