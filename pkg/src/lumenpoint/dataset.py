"""Training tuples ((C, D), E, R, P, S) and a synthetic scene generator.

The synthetic scenes are axis-aligned Lambertian boxes lit by a distant SH
light. Every face has a constant albedo (optionally modulated by a mild
sinusoidal texture) and receives the irradiance of the light at its inward
normal. The observation is a pinhole RGB-D render from a camera inside the
box; the panorama is rendered from the rendering position the view
transform predicts, so the transformed cloud and the panorama agree.

On disk each tuple is a directory::

    obs.rgbd  e.pfm  r.json  p.lpc  s.json  tuple.json

and a dataset directory holds one such directory per tuple plus
``manifest.json``. ``tuple.json`` and the manifest carry SHA-256 checksums.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .camera import CameraIntrinsics, unproject_pixels
from .errors import (ChecksumMismatch, DegenerateScene, FormatError, FormatVersionMismatch,
                     TooFewScenes)
from .formats import (read_env, read_json, read_lpc, read_rgbd, read_sh, relation_from_json,
                      relation_to_json, sha256_file, write_json, write_lpc, write_pfm,
                      write_rgbd, write_sh)
from .imaging import DepthFillConfig, RgbdImage, fill_depth, unproject
from .panorama import EnvironmentMap, pixel_directions
from .pointcloud import (DEFAULT_SCALE, PointCloud, RenderingRelation, downsample_uniform,
                         transform)
from .sph import ShCoefficients, eval_sh, irradiance_sh, project_quadrature

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
TUPLE_FILES = ("obs.rgbd", "e.pfm", "r.json", "p.lpc", "s.json")

# inward normals of the faces x=lo, x=hi, y=lo, y=hi, z=lo, z=hi
FACE_NORMALS = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0],
                         [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=np.float64)


@dataclass
class SceneSpec:
    sh_truth: ShCoefficients
    room_lo: np.ndarray
    room_hi: np.ndarray
    albedo: np.ndarray            # (6, 3), one RGB albedo per face
    camera_position: np.ndarray
    camera_rotation: np.ndarray   # camera-to-world
    render_uv: tuple[int, int]
    hfov_deg: float = 90.0
    texture: float = 0.0
    scale_factor: float = DEFAULT_SCALE

    def __post_init__(self):
        self.room_lo = np.asarray(self.room_lo, dtype=np.float64)
        self.room_hi = np.asarray(self.room_hi, dtype=np.float64)
        self.albedo = np.asarray(self.albedo, dtype=np.float64).reshape(6, 3)
        self.camera_position = np.asarray(self.camera_position, dtype=np.float64)
        self.camera_rotation = np.asarray(self.camera_rotation, dtype=np.float64)
        if not np.all(self.room_lo < self.camera_position) or \
                not np.all(self.camera_position < self.room_hi):
            raise DegenerateScene("camera must be strictly inside the room")


@dataclass
class DatasetTuple:
    observation: RgbdImage
    env: EnvironmentMap
    relation: RenderingRelation
    cloud: PointCloud
    sh: ShCoefficients
    intrinsics: CameraIntrinsics
    depth_at_uv: float
    scene_id: int = 0
    seed: int = 0
    extra: dict = field(default_factory=dict)


def rotation_yaw_pitch(yaw: float, pitch: float) -> np.ndarray:
    """Camera-to-world rotation: pitch about x, then yaw about the vertical y axis."""
    cy, sy = np.cos(yaw), np.sin(yaw)
    cp, sp = np.cos(pitch), np.sin(pitch)
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rx = np.array([[1, 0, 0], [0, cp, -sp], [0, sp, cp]])
    return ry @ rx


def random_sh_light(rng: np.random.Generator, dc_only: bool = False) -> ShCoefficients:
    c = np.zeros((3, 9))
    c[:, 0] = rng.uniform(0.5, 1.0, 3) * np.sqrt(4 * np.pi)
    if not dc_only:
        c[:, 1:4] = rng.uniform(-0.4, 0.4, (3, 3)) * c[:, :1]
        c[:, 4:] = rng.uniform(-0.2, 0.2, (3, 5)) * c[:, :1]
    return ShCoefficients(c)


def random_scene(rng: np.random.Generator, width: int, height: int,
                 light: ShCoefficients | None = None, room=None, albedo=None) -> SceneSpec:
    """A random room, camera pose and rendering pixel.

    Passing ``light``, ``room`` (lo, hi) and ``albedo`` fixes the scene and
    only draws a new camera and target, which is how tuples of one scene
    differ.
    """
    if light is None:
        light = random_sh_light(rng)
    if room is None:
        size = np.array([rng.uniform(3, 8), rng.uniform(2.4, 3.2), rng.uniform(3, 8)])
        lo = -size / 2
        room = (lo, lo + size)
    lo, hi = (np.asarray(r, dtype=np.float64) for r in room)
    if albedo is None:
        albedo = rng.uniform(0.3, 0.9, (6, 3))
    margin = np.minimum(0.5, (hi - lo) / 4)
    cam = rng.uniform(lo + margin, hi - margin)
    rot = rotation_yaw_pitch(rng.uniform(-np.pi, np.pi), rng.uniform(-0.3, 0.1))
    uv = (int(rng.integers(width // 8, width - width // 8)),
          int(rng.integers(height // 2, height - height // 8)))
    return SceneSpec(light, lo, hi, albedo, cam, rot, uv, texture=0.1)


# -- rendering -------------------------------------------------------------

def ray_box(origin: np.ndarray, dirs: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    """Exit distance and face index for rays starting inside the box."""
    with np.errstate(divide="ignore", invalid="ignore"):
        bound = np.where(dirs > 0, hi, lo)
        t_axis = np.where(dirs != 0, (bound - origin) / dirs, np.inf)
    axis = np.argmin(t_axis, axis=-1)
    t = np.take_along_axis(t_axis, axis[..., None], axis=-1)[..., 0]
    side = np.take_along_axis(dirs, axis[..., None], axis=-1)[..., 0] > 0
    return t, 2 * axis + side


def face_radiance(spec: SceneSpec, points: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Lambertian outgoing radiance albedo * E(n) / pi at surface points."""
    irr = eval_sh(irradiance_sh(spec.sh_truth), FACE_NORMALS)       # (6, 3)
    base = spec.albedo * np.maximum(irr, 0.0) / np.pi
    rad = base[faces]
    if spec.texture:
        tex = 1 + spec.texture * np.sin(3.0 * points[..., 0]) * np.sin(3.0 * points[..., 2]) \
            * np.cos(2.0 * points[..., 1])
        rad = rad * tex[..., None]
    return rad


def render_observation(spec: SceneSpec, width: int, height: int):
    """Pinhole render; returns (color, z-depth, intrinsics)."""
    k = CameraIntrinsics.from_fov(width, height, spec.hfov_deg)
    v, u = np.mgrid[0:height, 0:width]
    d_cam = unproject_pixels(u, v, np.ones((height, width)), k)
    d_world = d_cam @ spec.camera_rotation.T
    t, faces = ray_box(spec.camera_position, d_world, spec.room_lo, spec.room_hi)
    hits = spec.camera_position + t[..., None] * d_world
    return face_radiance(spec, hits, faces), t, k


def render_panorama(spec: SceneSpec, position: np.ndarray, width: int, height: int) -> np.ndarray:
    dirs = pixel_directions(width, height)
    t, faces = ray_box(position, dirs, spec.room_lo, spec.room_hi)
    return face_radiance(spec, position + t[..., None] * dirs, faces)


def generate_synthetic(spec: SceneSpec, image_dims=(80, 60), n_points: int = 1280,
                       seed: int = 0, env_dims=(64, 32), dropout: float = 0.02,
                       fill_cfg: DepthFillConfig = DepthFillConfig(), scene_id: int = 0
                       ) -> DatasetTuple:
    """Render a scene and run it through the full tuple pipeline.

    ``image_dims`` and ``env_dims`` are (width, height). A ``dropout``
    fraction of depth pixels is zeroed to imitate sensor holes.
    """
    width, height = image_dims
    rng = np.random.default_rng(seed)
    color, depth, k = render_observation(spec, width, height)
    depth = depth.copy()
    depth[rng.random(depth.shape) < dropout] = 0.0
    obs = RgbdImage(color.astype(np.float32), depth.astype(np.float32))

    filled = fill_depth(obs, fill_cfg)
    u, v = spec.render_uv
    if not (0 <= u < width and 0 <= v < height):
        raise DegenerateScene(f"render_uv {spec.render_uv} outside the image")
    depth_at_uv = float(filled.depth[v, u])
    if depth_at_uv <= 0:
        raise DegenerateScene(f"render_uv {spec.render_uv} has no depth")
    rel = RenderingRelation((u, v), spec.scale_factor, spec.camera_rotation)

    cloud = transform(unproject(filled, k), rel, k, depth_at_uv)
    cloud = downsample_uniform(cloud, n_points, seed)

    target = unproject_pixels(u, v, depth_at_uv, k)
    position = spec.camera_position + spec.camera_rotation @ (spec.scale_factor * target)
    env = EnvironmentMap(render_panorama(spec, position, *env_dims))
    sh = project_quadrature(env)
    return DatasetTuple(obs, env, rel, cloud, sh, k, depth_at_uv, scene_id, seed,
                        extra={"n_points": n_points, "rendering_position": position.tolist()})


def rebuild_cloud(tup: DatasetTuple, fill_cfg: DepthFillConfig = DepthFillConfig()) -> PointCloud:
    """Recompute the stored cloud from (C, D) and R."""
    filled = fill_depth(tup.observation, fill_cfg)
    cloud = transform(unproject(filled, tup.intrinsics), tup.relation, tup.intrinsics,
                      tup.depth_at_uv)
    return downsample_uniform(cloud, tup.extra.get("n_points", len(tup.cloud)), tup.seed)


# -- dataset generation ----------------------------------------------------

def tuple_seed(seed: int, scene: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, scene, index]).generate_state(1, np.uint32)[0])


def _make_scene(args):
    seed, scene, per_scene, n_points, image_dims, env_dims = args
    rng = np.random.default_rng(np.random.SeedSequence([seed, scene]))
    width, height = image_dims
    base = random_scene(rng, width, height)
    out = []
    for t in range(per_scene):
        spec = base if t == 0 else random_scene(
            rng, width, height, base.sh_truth, (base.room_lo, base.room_hi), base.albedo)
        out.append(generate_synthetic(spec, image_dims, n_points, tuple_seed(seed, scene, t),
                                      env_dims, scene_id=scene))
    return out


def generate_dataset(n_scenes: int, tuples_per_scene: int, n_points: int = 1280, seed: int = 0,
                     image_dims=(80, 60), env_dims=(64, 32), workers: int = 1) -> list[DatasetTuple]:
    """Tuples for ``n_scenes`` random rooms, ordered by (scene, tuple)."""
    jobs = [(seed, s, tuples_per_scene, n_points, tuple(image_dims), tuple(env_dims))
            for s in range(n_scenes)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            scenes = list(pool.map(_make_scene, jobs))
    else:
        scenes = [_make_scene(j) for j in jobs]
    return [t for s in scenes for t in s]


def split(tuples: list[DatasetTuple], train_fraction: float, seed: int):
    """Scene-level train/test split; no scene lands on both sides."""
    scenes = sorted({t.scene_id for t in tuples})
    if len(scenes) < 2:
        raise TooFewScenes(f"need at least 2 scenes to split, got {len(scenes)}")
    rng = np.random.default_rng(seed)
    perm = [scenes[i] for i in rng.permutation(len(scenes))]
    n_train = min(max(int(round(train_fraction * len(scenes))), 1), len(scenes) - 1)
    train_ids = set(perm[:n_train])
    train = [t for t in tuples if t.scene_id in train_ids]
    test = [t for t in tuples if t.scene_id not in train_ids]
    return train, test


# -- storage ---------------------------------------------------------------

def tuple_name(tup: DatasetTuple, index: int) -> str:
    return f"scene{tup.scene_id:04d}_t{index:02d}"


def save_tuple(path, tup: DatasetTuple) -> dict:
    """Write one tuple directory; returns its manifest entry."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    write_rgbd(path / "obs.rgbd", tup.observation)
    write_pfm(path / "e.pfm", tup.env.pixels)
    write_json(path / "r.json", relation_to_json(
        tup.relation, intrinsics=tup.intrinsics.to_dict(), depth_at_uv=tup.depth_at_uv,
        seed=tup.seed, **tup.extra))
    write_lpc(path / "p.lpc", tup.cloud)
    write_sh(path / "s.json", tup.sh)
    entry = {
        "format_version": FORMAT_VERSION,
        "scene": tup.scene_id,
        "seed": tup.seed,
        "dims": {"image": [tup.observation.width, tup.observation.height],
                 "env": [tup.env.width, tup.env.height],
                 "points": len(tup.cloud)},
        "files": {name: sha256_file(path / name) for name in TUPLE_FILES},
    }
    write_json(path / "tuple.json", entry)
    return entry


def load_tuple(path, entry: dict | None = None) -> DatasetTuple:
    """Read a tuple directory, verifying format version and checksums."""
    path = Path(path)
    if entry is None:
        if not (path / "tuple.json").exists():
            raise FormatError(f"{path}: missing tuple.json")
        entry = read_json(path / "tuple.json")
    if entry.get("format_version") != FORMAT_VERSION:
        raise FormatVersionMismatch(
            f"{path}: format version {entry.get('format_version')}, expected {FORMAT_VERSION}")
    for name, digest in entry["files"].items():
        f = path / name
        if not f.exists() or sha256_file(f) != digest:
            raise ChecksumMismatch(f"{f}: checksum mismatch")
    rel_obj = read_json(path / "r.json")
    extra = {k: rel_obj[k] for k in ("n_points", "rendering_position") if k in rel_obj}
    return DatasetTuple(
        observation=read_rgbd(path / "obs.rgbd"),
        env=read_env(path / "e.pfm"),
        relation=relation_from_json(rel_obj),
        cloud=read_lpc(path / "p.lpc"),
        sh=read_sh(path / "s.json"),
        intrinsics=CameraIntrinsics.from_dict(rel_obj["intrinsics"]),
        depth_at_uv=float(rel_obj["depth_at_uv"]),
        scene_id=int(entry["scene"]),
        seed=int(entry["seed"]),
        extra=extra,
    )


def save_dataset(out_dir, tuples: list[DatasetTuple], generator: dict | None = None) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    counters: dict[int, int] = {}
    for tup in tuples:
        i = counters.get(tup.scene_id, 0)
        counters[tup.scene_id] = i + 1
        name = tuple_name(tup, i)
        entry = save_tuple(out_dir / name, tup)
        entries.append({"path": name, **entry})
    manifest = {
        "format_version": FORMAT_VERSION,
        "lumenpoint_version": __version__,
        "generator": generator or {},
        "count": len(entries),
        "tuples": entries,
    }
    write_json(out_dir / "manifest.json", manifest)
    return manifest


def load_dataset(data_dir) -> list[DatasetTuple]:
    data_dir = Path(data_dir)
    manifest_path = data_dir / "manifest.json"
    if not manifest_path.exists():
        raise FormatError(f"{data_dir}: no manifest.json")
    manifest = read_json(manifest_path)
    if manifest.get("format_version") != FORMAT_VERSION:
        raise FormatVersionMismatch(f"{manifest_path}: format version mismatch")
    return [load_tuple(data_dir / e["path"], e) for e in manifest["tuples"]]
