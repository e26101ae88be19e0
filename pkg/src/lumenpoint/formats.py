"""Readers and writers for the on-disk formats.

* ``.rgbd``  little-endian u32 width, u32 height, W*H RGB f32 triples, W*H depth f32
* ``.lpc``   magic ``LPC1``, u64 count, count * (x, y, z, r, g, b) f32
* ``.pfm``   standard Portable Float Map, little-endian, rows bottom-to-top
* SH JSON    ``{"order": 2, "layout": "lm-row-major", "channels": [...], "coeffs": [[9]]*3}``
* PNG        8-bit RGB color, 16-bit grayscale depth in millimeters
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FormatError
from .imaging import RgbdImage, srgb_to_linear
from .panorama import EnvironmentMap
from .pointcloud import PointCloud, RenderingRelation
from .sph import ShCoefficients

LPC_MAGIC = b"LPC1"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON ({e})") from e


# -- RGB-D -----------------------------------------------------------------

def write_rgbd(path, img: RgbdImage) -> None:
    h, w = img.depth.shape
    with open(path, "wb") as f:
        f.write(struct.pack("<II", w, h))
        f.write(img.color.astype("<f4").tobytes())
        f.write(img.depth.astype("<f4").tobytes())


def read_rgbd(path) -> RgbdImage:
    data = Path(path).read_bytes()
    if len(data) < 8:
        raise FormatError(f"{path}: truncated .rgbd header")
    w, h = struct.unpack_from("<II", data)
    n = w * h
    if len(data) != 8 + 16 * n:
        raise FormatError(f"{path}: expected {8 + 16 * n} bytes, found {len(data)}")
    color = np.frombuffer(data, "<f4", 3 * n, 8).reshape(h, w, 3)
    depth = np.frombuffer(data, "<f4", n, 8 + 12 * n).reshape(h, w)
    return RgbdImage(color.astype(np.float32), depth.astype(np.float32))


def read_color_png(path, linearize: bool = False) -> np.ndarray:
    arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float64) / 255.0
    return srgb_to_linear(arr) if linearize else arr


def read_depth_png(path) -> np.ndarray:
    """16-bit millimeter depth PNG to meters."""
    arr = np.asarray(Image.open(path))
    if arr.ndim != 2:
        raise FormatError(f"{path}: depth PNG must be single-channel")
    return arr.astype(np.float64) / 1000.0


def write_color_png(path, color: np.ndarray) -> None:
    arr = np.clip(np.round(np.asarray(color) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, "RGB").save(path, format="PNG")


def write_depth_png(path, depth_m: np.ndarray) -> None:
    mm = np.clip(np.round(np.asarray(depth_m, dtype=np.float64) * 1000.0), 0, 65535)
    Image.fromarray(mm.astype(np.uint16)).save(path, format="PNG")


def load_rgbd(color=None, depth=None, rgbd=None, linearize: bool = False) -> RgbdImage:
    """Load either a ``.rgbd`` container or a color/depth PNG pair."""
    if rgbd is not None:
        return read_rgbd(rgbd)
    if color is None or depth is None:
        raise FormatError("need --rgbd, or both --color and --depth")
    return RgbdImage(read_color_png(color, linearize), read_depth_png(depth))


# -- point clouds ----------------------------------------------------------

def write_lpc(path, pc: PointCloud) -> None:
    rec = np.concatenate([pc.positions, pc.colors], axis=1).astype("<f4")
    with open(path, "wb") as f:
        f.write(LPC_MAGIC)
        f.write(struct.pack("<Q", len(pc)))
        f.write(rec.tobytes())


def read_lpc(path) -> PointCloud:
    data = Path(path).read_bytes()
    if data[:4] != LPC_MAGIC:
        raise FormatError(f"{path}: not an LPC1 point cloud")
    (n,) = struct.unpack_from("<Q", data, 4)
    if len(data) != 12 + 24 * n:
        raise FormatError(f"{path}: expected {12 + 24 * n} bytes, found {len(data)}")
    rec = np.frombuffer(data, "<f4", 6 * n, 12).reshape(n, 6).astype(np.float64)
    return PointCloud(rec[:, :3], rec[:, 3:])


# -- panoramas -------------------------------------------------------------

def write_pfm(path, img: np.ndarray) -> None:
    arr = np.asarray(img, dtype="<f4")
    if arr.ndim == 2:
        header = b"Pf"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        header = b"PF"
    else:
        raise FormatError(f"cannot write array of shape {arr.shape} as PFM")
    h, w = arr.shape[:2]
    with open(path, "wb") as f:
        f.write(header + b"\n" + f"{w} {h}\n".encode() + b"-1.0\n")
        f.write(np.ascontiguousarray(arr[::-1]).tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.readline().strip()
        if header not in (b"PF", b"Pf"):
            raise FormatError(f"{path}: not a PFM file")
        try:
            w, h = map(int, f.readline().split())
            scale = float(f.readline())
        except ValueError as e:
            raise FormatError(f"{path}: malformed PFM header") from e
        ch = 3 if header == b"PF" else 1
        dtype = "<f4" if scale < 0 else ">f4"
        raw = f.read()
    if len(raw) != 4 * w * h * ch:
        raise FormatError(f"{path}: expected {4 * w * h * ch} data bytes, found {len(raw)}")
    arr = np.frombuffer(raw, dtype).reshape((h, w, ch) if ch == 3 else (h, w))
    return arr[::-1].astype(np.float32)


def read_env(path) -> EnvironmentMap:
    return EnvironmentMap(read_pfm(path).astype(np.float64))


# -- SH and relation JSON --------------------------------------------------

def sh_to_json(sh: ShCoefficients) -> dict:
    obj = {
        "order": 2,
        "layout": "lm-row-major",
        "channels": ["r", "g", "b"],
        "coeffs": [[float(np.float32(v)) for v in row] for row in sh.coeffs],
    }
    if sh.meta.get("estimate"):
        obj["estimate"] = True
    return obj


def write_sh(path, sh: ShCoefficients) -> None:
    write_json(path, sh_to_json(sh))


def read_sh(path) -> ShCoefficients:
    obj = read_json(path)
    if obj.get("order") != 2 or obj.get("layout") != "lm-row-major":
        raise FormatError(f"{path}: unsupported SH layout")
    return ShCoefficients(np.array(obj["coeffs"], dtype=np.float64))


def read_rotation(path) -> np.ndarray:
    """A rotation JSON is a bare 3x3 list or an object with a ``rotation`` key."""
    obj = read_json(path)
    if isinstance(obj, dict):
        obj = obj["rotation"]
    return np.array(obj, dtype=np.float64)


def relation_to_json(rel: RenderingRelation, **extra) -> dict:
    obj = {
        "pixel_uv": list(rel.pixel_uv),
        "scale_factor": rel.scale_factor,
        "rotation": rel.rotation.tolist(),
    }
    obj.update(extra)
    return obj


def relation_from_json(obj: dict) -> RenderingRelation:
    return RenderingRelation(tuple(obj["pixel_uv"]), float(obj["scale_factor"]),
                             np.array(obj["rotation"], dtype=np.float64))
