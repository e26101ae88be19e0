"""``lumenpoint`` command line interface.

Every stage of the pipeline is a subcommand. Failures print a single
``Code: message`` line to stderr and exit with 2 (usage), 3 (bad data) or
4 (internal error).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .camera import CameraIntrinsics
from .errors import LumenpointError

log = logging.getLogger("lumenpoint")

EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker processes; LUMENPOINT_THREADS overrides")
    p.add_argument("--log-level", default="WARNING")
    return p


def _intrinsics_args(p):
    for name in ("fx", "fy", "cx", "cy"):
        p.add_argument(f"--{name}", type=float, required=True)


def _image_args(p):
    p.add_argument("--color", help="8-bit RGB PNG")
    p.add_argument("--depth", help="16-bit depth PNG in millimeters")
    p.add_argument("--rgbd", help=".rgbd container instead of --color/--depth")
    p.add_argument("--srgb", action="store_true", help="convert PNG color from sRGB to linear")
    p.add_argument("--no-fill", action="store_true", help="skip cross bilateral depth filling")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="lumenpoint", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"lumenpoint {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("unproject", parents=[common], help="RGB-D image to point cloud")
    _image_args(p)
    _intrinsics_args(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("transform", parents=[common], help="recenter and rotate a cloud")
    p.add_argument("--cloud", required=True)
    p.add_argument("--u", type=float, required=True)
    p.add_argument("--v", type=float, required=True)
    p.add_argument("--depth", type=float, required=True, help="depth at (u, v) in meters")
    p.add_argument("--scale", type=float, default=0.95)
    p.add_argument("--rot", required=True, help="JSON rotation (3x3 list or {rotation: ...})")
    for name in ("fx", "fy", "cx", "cy"):
        p.add_argument(f"--{name}", type=float, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("project", parents=[common], help="point cloud to panorama")
    p.add_argument("--cloud", required=True)
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sh-project", parents=[common], help="panorama to SH coefficients")
    p.add_argument("--pano", required=True)
    p.add_argument("--mc", type=int, default=None, help="Monte-Carlo sample count")
    p.add_argument("--out", required=True)

    p = sub.add_parser("reconstruct", parents=[common], help="SH lighting to irradiance map")
    p.add_argument("--sh", required=True)
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--out", required=True)

    p = sub.add_parser("render-probe", parents=[common], help="Lambertian sphere lit by SH")
    p.add_argument("--sh", required=True)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--exposure", type=float, default=1.0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("gen-dataset", parents=[common], help="synthetic training tuples")
    p.add_argument("--scenes", type=int, default=64)
    p.add_argument("--tuples-per-scene", type=int, default=4)
    p.add_argument("--points", type=int, default=1280)
    p.add_argument("--image-size", type=int, nargs=2, default=[80, 60], metavar=("W", "H"))
    p.add_argument("--env-size", type=int, nargs=2, default=[64, 32], metavar=("W", "H"))
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", parents=[common], help="train the point-cloud regressor")
    p.add_argument("--data", required=True)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--optimizer", choices=["adam", "sgd"], default="adam")
    p.add_argument("--preset", choices=["default", "toy", "paper-scale"], default="default")
    p.add_argument("--use-xyz", action="store_true", help="feed coordinates alongside RGB")
    p.add_argument("--train-fraction", type=float, default=1.0,
                   help="train on this fraction of scenes (scene-level split)")
    p.add_argument("--losses", help="write the per-step loss curve as JSON")
    p.add_argument("--out", required=True)

    p = sub.add_parser("infer", parents=[common], help="predict SH from a point cloud")
    p.add_argument("--model", required=True)
    p.add_argument("--cloud", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", parents=[common], help="score a model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--train-fraction", type=float, default=None,
                   help="evaluate only the held-out scenes of this split")
    p.add_argument("--res", type=int, nargs=2, default=[64, 32], metavar=("W", "H"))
    p.add_argument("--out", required=True)

    p = sub.add_parser("count-macs", parents=[common], help="parameter and MAC counts")
    p.add_argument("--points", type=int, nargs="+", default=[512, 768, 1024, 1280])
    p.add_argument("--preset", choices=["default", "toy", "paper-scale"], default="default")
    p.add_argument("--out", required=True)

    p = sub.add_parser("pipeline", parents=[common], help="RGB-D image straight to SH")
    _image_args(p)
    _intrinsics_args(p)
    p.add_argument("--u", type=float, required=True)
    p.add_argument("--v", type=float, required=True)
    p.add_argument("--scale", type=float, default=0.95)
    p.add_argument("--rot", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    return parser


# -- command bodies --------------------------------------------------------

def _intrinsics(args) -> CameraIntrinsics:
    return CameraIntrinsics(args.fx, args.fy, args.cx, args.cy)


def _load_cloud_from_image(args):
    from .formats import load_rgbd
    from .imaging import fill_depth, unproject

    img = load_rgbd(args.color, args.depth, args.rgbd, linearize=args.srgb)
    if not args.no_fill:
        img = fill_depth(img)
    return img, unproject(img, _intrinsics(args)).as_float32()


def _transform(cloud, k, u, v, depth, scale, rot):
    from .pointcloud import RenderingRelation, transform

    rel = RenderingRelation((u, v), scale, rot)
    return transform(cloud, rel, k, depth).as_float32()


def _infer(model, cloud, seed):
    from .pointcloud import downsample_uniform

    if len(cloud) > model.cfg.n_points:
        cloud = downsample_uniform(cloud, model.cfg.n_points, seed)
    return model.predict(cloud)


def _preset(name, use_xyz=False):
    from dataclasses import replace

    from .learner.model import PointConvConfig, paper_scale_config, toy_config
    cfg = {"default": PointConvConfig, "toy": toy_config, "paper-scale": paper_scale_config}[name]()
    return replace(cfg, use_xyz=use_xyz)


def cmd_unproject(args):
    from .formats import write_lpc
    _, cloud = _load_cloud_from_image(args)
    write_lpc(args.out, cloud)
    print(f"{len(cloud)} points -> {args.out}")


def cmd_transform(args):
    from .formats import read_json, read_lpc, read_rotation, write_lpc

    k = None
    if None in (args.fx, args.fy, args.cx, args.cy):
        obj = read_json(args.rot)
        if not (isinstance(obj, dict) and "intrinsics" in obj):
            raise UsageError("need --fx --fy --cx --cy or intrinsics in the --rot JSON")
        k = CameraIntrinsics.from_dict(obj["intrinsics"])
    else:
        k = _intrinsics(args)
    out = _transform(read_lpc(args.cloud), k, args.u, args.v, args.depth, args.scale,
                     read_rotation(args.rot))
    write_lpc(args.out, out)
    print(f"{len(out)} points -> {args.out}")


def cmd_project(args):
    from .formats import read_lpc, write_pfm
    from .pointcloud import project_equirect

    env = project_equirect(read_lpc(args.cloud), args.width, args.height)
    write_pfm(args.out, env.pixels)
    print(f"coverage {env.meta['coverage']:.3f} -> {args.out}")


def cmd_sh_project(args):
    from .formats import read_env, write_sh
    from .sph import project_masked, project_mc, project_quadrature, sample_env

    env = read_env(args.pano)
    if args.mc:
        if not env.complete:
            raise LumenpointError("Monte-Carlo projection needs a complete panorama")
        dirs, rad = sample_env(env, args.mc, np.random.default_rng(args.seed))
        sh = project_mc(dirs, rad)
    elif env.complete:
        sh = project_quadrature(env)
    else:
        sh = project_masked(env)
    write_sh(args.out, sh)
    print(f"DC {sh.coeffs[:, 0].round(4).tolist()} -> {args.out}")


def cmd_reconstruct(args):
    from .formats import read_sh, write_pfm
    from .sph import irradiance_sh, reconstruct_irradiance_map

    irr = reconstruct_irradiance_map(irradiance_sh(read_sh(args.sh)), args.width, args.height)
    write_pfm(args.out, irr)


def cmd_render_probe(args):
    from .formats import read_sh, write_color_png
    from .imaging import linear_to_srgb
    from .sph import eval_sh, irradiance_sh

    n = args.size
    c = (np.arange(n) + 0.5) / n * 2 - 1
    x, y = np.meshgrid(c, c)
    r2 = x * x + y * y
    inside = r2 < 1
    # sphere seen from the front (looking along +z); normals face the viewer
    normals = np.stack([x, y, -np.sqrt(np.clip(1 - r2, 0, None))], axis=-1)
    radiance = np.maximum(eval_sh(irradiance_sh(read_sh(args.sh)), normals), 0) / np.pi
    img = np.where(inside[..., None], linear_to_srgb(radiance * args.exposure), 0.0)
    write_color_png(args.out, img)


def cmd_gen_dataset(args):
    from .dataset import generate_dataset, save_dataset

    tuples = generate_dataset(args.scenes, args.tuples_per_scene, args.points, args.seed,
                              tuple(args.image_size), tuple(args.env_size), workers=args.threads)
    generator = {"scenes": args.scenes, "tuples_per_scene": args.tuples_per_scene,
                 "points": args.points, "seed": args.seed, "image_size": args.image_size,
                 "env_size": args.env_size}
    manifest = save_dataset(args.out, tuples, generator)
    print(f"{manifest['count']} tuples -> {args.out}")


def _train_tuples(tuples, fraction, seed, held_out=False):
    from .dataset import split
    if fraction is None or fraction >= 1.0:
        return tuples
    train, test = split(tuples, fraction, seed)
    return test if held_out else train


def cmd_train(args):
    from .dataset import load_dataset
    from .formats import write_json
    from .learner import PointConvModel, TrainConfig, train

    tuples = _train_tuples(load_dataset(args.data), args.train_fraction, args.seed)
    model = PointConvModel(_preset(args.preset, args.use_xyz), seed=args.seed)
    cfg = TrainConfig(args.lr, args.steps, args.batch_size, args.seed, args.optimizer)
    res = train(model, [t.cloud for t in tuples], [t.sh for t in tuples], cfg,
                log_every=max(1, args.steps // 20))
    model.save(args.out)
    if args.losses:
        write_json(args.losses, {"losses": res.losses})
    print(f"final loss {res.losses[-1]:.6g} -> {args.out}")


def cmd_infer(args):
    from .formats import read_lpc, write_sh
    from .learner import PointConvModel

    sh = _infer(PointConvModel.load(args.model), read_lpc(args.cloud), args.seed)
    write_sh(args.out, sh)


def cmd_eval(args):
    from .dataset import load_dataset
    from .formats import write_json
    from .learner import PointConvModel
    from .metrics import evaluate

    model = PointConvModel.load(args.model)
    tuples = _train_tuples(load_dataset(args.data), args.train_fraction, args.seed, held_out=True)
    report = evaluate(lambda c: _infer(model, c, args.seed), tuples, tuple(args.res))
    write_json(args.out, report.to_json())
    s = report.summary()
    print(f"SH l2 {s['sh_l2']}  irradiance l2 {s['irradiance_l2']}")


def cmd_count_macs(args):
    from .formats import write_json
    from .metrics import count_complexity

    cfg = _preset(args.preset)
    rows = [count_complexity(cfg, n) for n in args.points]
    ref = rows[-1].macs
    out = {"preset": args.preset,
           "rows": [{"points": r.n_points, "params": r.params, "macs": r.macs,
                     "params_M": round(r.params / 1e6, 3), "macs_M": round(r.macs / 1e6, 3),
                     "macs_ratio": r.macs / ref} for r in rows]}
    write_json(args.out, out)
    for r in out["rows"]:
        print(f"{r['points']:>6} points  {r['params_M']:.2f} M params  {r['macs_M']:.1f} M MACs")


def cmd_pipeline(args):
    from .formats import read_rotation, write_sh
    from .learner import PointConvModel

    img, cloud = _load_cloud_from_image(args)
    depth = float(img.depth[int(round(args.v)), int(round(args.u))])
    cloud = _transform(cloud, _intrinsics(args), args.u, args.v, depth, args.scale,
                       read_rotation(args.rot))
    write_sh(args.out, _infer(PointConvModel.load(args.model), cloud, args.seed))


COMMANDS = {
    "unproject": cmd_unproject, "transform": cmd_transform, "project": cmd_project,
    "sh-project": cmd_sh_project, "reconstruct": cmd_reconstruct,
    "render-probe": cmd_render_probe, "gen-dataset": cmd_gen_dataset, "train": cmd_train,
    "infer": cmd_infer, "eval": cmd_eval, "count-macs": cmd_count_macs,
    "pipeline": cmd_pipeline,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"UsageError: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help / --version
        return int(e.code or 0)

    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    env_threads = os.environ.get("LUMENPOINT_THREADS")
    if env_threads:
        args.threads = int(env_threads)
    args.threads = max(1, args.threads or os.cpu_count() or 1)

    from threadpoolctl import threadpool_limits

    try:
        # BLAS stays single-threaded so results never depend on --threads
        with threadpool_limits(1):
            COMMANDS[args.command](args)
    except UsageError as e:
        print(f"UsageError: {e}", file=sys.stderr)
        return EXIT_USAGE
    except LumenpointError as e:
        print(f"{e.code}: {e}", file=sys.stderr)
        return EXIT_DATA
    except (OSError, KeyError, ValueError) as e:
        print(f"DataError: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # noqa: BLE001
        print(f"InternalError: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
