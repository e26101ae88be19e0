"""PointConv-style regressor from a point cloud to 27 SH coefficients.

Each block picks centroids by farthest point sampling, gathers the k
nearest input points around every centroid, turns their offsets into
per-neighbor weight vectors with a small MLP, and contracts those weights
against the neighbor features before a bias-free MLP. Two blocks, a global
mean pool and a dense head give the (3, 9) output.

Neighborhoods depend only on coordinates, so they are computed once per
cloud (:func:`build_geometry`) and reused across training steps.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import FormatError, FormatVersionMismatch, TooFewPoints
from ..pointcloud import PointCloud
from ..sph import ShCoefficients
from .autodiff import Tensor, gather_rows, parameter

OUTPUT_DIM = 27
CHECKPOINT_MAGIC = b"LPTM"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class BlockConfig:
    mlp: tuple[int, ...]
    k: int = 16
    ratio: float = 0.2  # centroids kept, as a fraction of the block's input points

    def n_out(self, n_in: int) -> int:
        return max(1, int(n_in * self.ratio + 0.5))


@dataclass(frozen=True)
class PointConvConfig:
    blocks: tuple[BlockConfig, ...] = (
        BlockConfig((64, 128), k=16, ratio=0.2),
        BlockConfig((128, 256), k=16, ratio=0.25),
    )
    weightnet_hidden: tuple[int, ...] = (8,)
    weightnet_out: int = 16
    head: tuple[int, ...] = (128, OUTPUT_DIM)
    use_xyz: bool = False
    n_points: int = 1280

    def __post_init__(self):
        if not self.blocks:
            raise ValueError("need at least one block")
        if not self.head or self.head[-1] != OUTPUT_DIM:
            raise ValueError(f"head must end in {OUTPUT_DIM} outputs")

    @property
    def in_features(self) -> int:
        return 6 if self.use_xyz else 3

    def point_counts(self, n_points: int) -> list[int]:
        """Input point count, then the centroid count after each block."""
        counts = [n_points]
        for b in self.blocks:
            counts.append(b.n_out(counts[-1]))
        return counts

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PointConvConfig":
        d = dict(d)
        d["blocks"] = tuple(BlockConfig(tuple(b["mlp"]), b["k"], b["ratio"]) for b in d["blocks"])
        for key in ("weightnet_hidden", "head"):
            d[key] = tuple(d[key])
        return cls(**d)


def toy_config() -> PointConvConfig:
    """A tiny network for gradient checks: 64 points, k = 8."""
    return PointConvConfig(
        blocks=(BlockConfig((8, 12), k=8, ratio=0.25), BlockConfig((12, 16), k=8, ratio=0.5)),
        weightnet_hidden=(4,), weightnet_out=4, head=(16, OUTPUT_DIM), n_points=64)


def paper_scale_config() -> PointConvConfig:
    """Approximate full-size setup; parameter and MAC totals are rough, not exact."""
    return PointConvConfig(
        blocks=(BlockConfig((64, 128), k=32, ratio=1.0), BlockConfig((128, 256), k=32, ratio=0.8)),
        weightnet_hidden=(8, 8), weightnet_out=32, head=(1024, 512, OUTPUT_DIM))


# -- neighborhoods ---------------------------------------------------------

def farthest_point_sample(points: np.ndarray, n: int) -> np.ndarray:
    """Indices of ``n`` points chosen greedily to be far apart.

    Starts from the point farthest from the mean, so the selection does not
    depend on input order or on a global translation. Ties go to the lowest
    index.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = min(n, len(pts))
    center = pts.mean(axis=0)
    first = int(np.argmax(((pts - center) ** 2).sum(axis=1)))
    chosen = np.empty(n, dtype=np.int64)
    chosen[0] = first
    dist = ((pts - pts[first]) ** 2).sum(axis=1)
    for i in range(1, n):
        nxt = int(np.argmax(dist))
        chosen[i] = nxt
        dist = np.minimum(dist, ((pts - pts[nxt]) ** 2).sum(axis=1))
    return chosen


def knn(points: np.ndarray, queries: np.ndarray, k: int) -> np.ndarray:
    """(Q, k) indices of the nearest ``points`` per query, nearest first, ties by index."""
    d2 = ((queries[:, None, :] - points[None, :, :]) ** 2).sum(axis=-1)
    return np.argsort(d2, axis=1, kind="stable")[:, :k]


@dataclass
class BlockGeometry:
    centroids: np.ndarray  # (C,) indices into the block input
    neighbors: np.ndarray  # (C, k) indices into the block input
    offsets: np.ndarray    # (C, k, 3) neighbor minus centroid position
    positions: np.ndarray  # (C, 3) centroid positions, input to the next block


def build_geometry(positions: np.ndarray, cfg: PointConvConfig) -> list[BlockGeometry]:
    pts = np.asarray(positions, dtype=np.float64)
    out = []
    for b in cfg.blocks:
        if len(pts) < b.k:
            raise TooFewPoints(f"block needs at least k={b.k} points, got {len(pts)}")
        cent = farthest_point_sample(pts, b.n_out(len(pts)))
        cpos = pts[cent]
        nbr = knn(pts, cpos, b.k)
        out.append(BlockGeometry(cent, nbr, pts[nbr] - cpos[:, None, :], cpos))
        pts = cpos
    return out


def input_features(cloud: PointCloud, cfg: PointConvConfig) -> np.ndarray:
    if cfg.use_xyz:
        return np.concatenate([cloud.colors, cloud.positions], axis=1)
    return cloud.colors.copy()


# -- network ---------------------------------------------------------------

class PointConvModel:
    def __init__(self, cfg: PointConvConfig = PointConvConfig(), seed: int = 0):
        self.cfg = cfg
        self.params: dict[str, Tensor] = {}
        rng = np.random.default_rng(seed)

        def dense(name, fan_in, fan_out, bias):
            bound = np.sqrt(6.0 / fan_in)
            self.params[f"{name}.w"] = parameter(rng.uniform(-bound, bound, (fan_in, fan_out)))
            if bias:
                # nonzero so the centroid's own zero offset does not sit on a ReLU kink
                b = 1.0 / np.sqrt(fan_in)
                self.params[f"{name}.b"] = parameter(rng.uniform(-b, b, fan_out))

        feat = cfg.in_features
        for i, b in enumerate(cfg.blocks):
            prev = 3
            for j, h in enumerate(cfg.weightnet_hidden + (cfg.weightnet_out,)):
                dense(f"block{i}.wnet{j}", prev, h, bias=True)
                prev = h
            prev = cfg.weightnet_out * feat
            for j, h in enumerate(b.mlp):
                dense(f"block{i}.mlp{j}", prev, h, bias=False)
                prev = h
            feat = prev
        prev = feat
        for j, h in enumerate(cfg.head):
            dense(f"head{j}", prev, h, bias=True)
            prev = h

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def n_parameters(self) -> int:
        return int(sum(p.data.size for p in self.params.values()))

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def block(self, i: int, feats: Tensor, offsets: np.ndarray, neighbors: np.ndarray) -> Tensor:
        """One PointConv block on a batch.

        ``feats`` is (B, N, F); ``offsets`` (B, C, k, 3) and ``neighbors``
        (B, C, k) describe the neighborhoods. Returns (B, C, F').
        """
        cfg = self.cfg
        p = self.params
        h = Tensor(offsets)
        n_w = len(cfg.weightnet_hidden) + 1
        for j in range(n_w):
            h = h @ p[f"block{i}.wnet{j}.w"] + p[f"block{i}.wnet{j}.b"]
            if j < n_w - 1:
                h = h.relu()
        k = offsets.shape[2]
        nf = gather_rows(feats, neighbors)                      # (B, C, k, F)
        agg = (h.swapaxes(-1, -2) @ nf) * (1.0 / k)              # (B, C, M, F)
        bsz, c, m, f = agg.shape
        x = agg.reshape(bsz, c, m * f)
        for j in range(len(cfg.blocks[i].mlp)):
            x = (x @ p[f"block{i}.mlp{j}.w"]).relu()
        return x

    def forward_batch(self, feats: np.ndarray, geoms: list[list[BlockGeometry]],
                      return_features: bool = False):
        """Run a batch of equally sized clouds; returns a (B, 27) tensor."""
        x = Tensor(feats)
        pooled_in = None
        for i in range(len(self.cfg.blocks)):
            offsets = np.stack([g[i].offsets for g in geoms])
            nbrs = np.stack([g[i].neighbors for g in geoms])
            x = self.block(i, x, offsets, nbrs)
            pooled_in = x
        if return_features:
            return pooled_in
        x = x.mean(axis=1)
        n_head = len(self.cfg.head)
        for j in range(n_head):
            x = x @ self.params[f"head{j}.w"] + self.params[f"head{j}.b"]
            if j < n_head - 1:
                x = x.relu()
        return x

    def prepare(self, cloud: PointCloud) -> tuple[np.ndarray, list[BlockGeometry]]:
        first_k = self.cfg.blocks[0].k
        if len(cloud) < first_k:
            raise TooFewPoints(f"cloud has {len(cloud)} points, need at least {first_k}")
        return input_features(cloud, self.cfg), build_geometry(cloud.positions, self.cfg)

    def predict(self, cloud: PointCloud) -> ShCoefficients:
        feats, geom = self.prepare(cloud)
        out = self.forward_batch(feats[None], [geom])
        return ShCoefficients(out.data.reshape(3, 9))

    # -- checkpoint --------------------------------------------------------

    def save(self, path) -> None:
        blob = json.dumps({"config": self.cfg.to_dict(),
                           "params": [[k, list(v.shape)] for k, v in self.params.items()]},
                          sort_keys=True).encode()
        with open(path, "wb") as f:
            f.write(CHECKPOINT_MAGIC)
            f.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
            f.write(blob)
            for v in self.params.values():
                f.write(v.data.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "PointConvModel":
        data = Path(path).read_bytes()
        if data[:4] != CHECKPOINT_MAGIC:
            raise FormatError(f"{path}: not a model checkpoint")
        version, n = struct.unpack_from("<II", data, 4)
        if version != CHECKPOINT_VERSION:
            raise FormatVersionMismatch(f"{path}: checkpoint version {version}")
        meta = json.loads(data[12:12 + n])
        model = cls(PointConvConfig.from_dict(meta["config"]))
        off = 12 + n
        for name, shape in meta["params"]:
            size = int(np.prod(shape))
            if off + 8 * size > len(data):
                raise FormatError(f"{path}: truncated checkpoint")
            model.params[name].data[...] = np.frombuffer(data, "<f8", size, off).reshape(shape)
            off += 8 * size
        if off != len(data):
            raise FormatError(f"{path}: trailing bytes in checkpoint")
        return model


def pointconv_block(model: PointConvModel, index: int, points: np.ndarray, features):
    """Apply block ``index`` of ``model`` to a single cloud.

    Returns (centroid positions (C, 3), output features (C, F') as a Tensor).
    """
    block_cfg = model.cfg.blocks[index]
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < block_cfg.k:
        raise TooFewPoints(f"block needs at least k={block_cfg.k} points, got {len(pts)}")
    cent = farthest_point_sample(pts, block_cfg.n_out(len(pts)))
    cpos = pts[cent]
    nbr = knn(pts, cpos, block_cfg.k)
    feats = features if isinstance(features, Tensor) else Tensor(features)
    out = model.block(index, feats.reshape(1, *feats.shape),
                      (pts[nbr] - cpos[:, None, :])[None], nbr[None])
    return cpos, out.reshape(*out.shape[1:])
