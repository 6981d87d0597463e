"""Command-line pipeline: gen -> render -> label -> select -> eval, plus viz.

Exit codes: 0 success, 1 usage or configuration error, 2 file format error,
3 no grasp found, 4 benchmark ordering threshold violated.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import formats
from .camera import CameraIntrinsics
from .errors import ConfigError, DomainError, FormatError, NoGraspError
from .evaluation import (STRAIGHT_ONLY, BenchmarkScene, SealOracleConfig, object_difficulty, run_benchmark)
from .labels import AffordanceLabels, AngleGrid, generate_labels
from .policy import centroid_grasp, format_pose, select_grasp
from .scene import SceneConfig, SceneSpec, render_depth, sample_scene
from .scoring import ScoreConfig, load_score_config

EXIT_USAGE, EXIT_FORMAT, EXIT_NO_GRASP, EXIT_THRESHOLD = 1, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _dims(text: str, n: int, cast=float):
    parts = text.lower().split("x")
    if len(parts) != n:
        raise argparse.ArgumentTypeError(f"expected {n} values separated by 'x'")
    return tuple(cast(p) for p in parts)


def _load_config(path) -> ScoreConfig:
    if path is None:
        return ScoreConfig()
    return load_score_config(Path(path).read_text())


def load_camera(path) -> CameraIntrinsics:
    """Intrinsics from a scene JSON, a {"intrinsics": ...} document, or a flat intrinsics dict."""
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not JSON ({exc})") from exc
    if "camera" in d:
        d = d["camera"]
    if "intrinsics" in d:
        d = d["intrinsics"]
    try:
        return CameraIntrinsics.from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: no camera intrinsics ({exc})") from exc


def _load_scene(path) -> SceneSpec:
    try:
        return SceneSpec.from_json(Path(path).read_text())
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: not a scene document ({exc})") from exc


def cmd_gen(args):
    cfg = SceneConfig(bin_size=args.bin, count_range=(1, args.count), image_size=args.image)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for seed in range(args.seed, args.seed + args.num):
        spec = sample_scene(seed, cfg)
        path = out / f"scene_{seed:06d}.json"
        path.write_text(spec.to_json())
        formats.write_meta(path, {"command": "gen", "seed": seed, "objects": len(spec.objects),
                                  "scene_config": json.dumps(cfg.to_dict(), sort_keys=True)})
        print(path)
    return 0


def cmd_render(args):
    spec = _load_scene(args.scene)
    depth, seg = render_depth(spec)
    formats.write_bytes(args.out_depth, formats.encode_depth(depth))
    formats.write_bytes(args.out_seg, formats.encode_seg(seg))
    for p in (args.out_depth, args.out_seg):
        formats.write_meta(p, {"command": "render", "scene": args.scene, "seed": spec.seed})
    return 0


def cmd_label(args):
    config = _load_config(args.config)
    K = load_camera(args.camera)
    depth = formats.decode_depth(formats.read_bytes(args.depth))
    seg = formats.decode_seg(formats.read_bytes(args.seg))
    ids = None if args.ids is None else [int(x) for x in args.ids.split(",")]
    labels = generate_labels(depth, seg, ids, K, args.grid, config, workers=args.parallel)
    formats.write_bytes(args.out, formats.encode_labels(labels))
    formats.write_meta(args.out, {"command": "label", "grid": str(args.grid), "ids": args.ids or "all",
                                  "config": json.dumps(config.to_dict(), sort_keys=True)})
    return 0


def cmd_select(args):
    K = load_camera(args.camera)
    depth = formats.decode_depth(formats.read_bytes(args.depth)).astype(float)
    seg = formats.decode_seg(formats.read_bytes(args.seg))
    mask = seg == args.target
    if args.policy == "centroid":
        pose = centroid_grasp(mask, depth, K)
    else:
        if args.labels is None:
            raise ConfigError("--labels is required for the argmax policy")
        labels = AffordanceLabels.from_planes(formats.decode_labels(formats.read_bytes(args.labels)).astype(float))
        pose = select_grasp(labels, mask, depth, K)
    print(format_pose(pose))
    return 0


def _eval_scene(path: Path, grid, config, workers) -> BenchmarkScene:
    spec = _load_scene(path)
    base = path.with_suffix("")
    dpath, spath, lpath = Path(f"{base}.depth"), Path(f"{base}.seg"), Path(f"{base}.olbl")
    if dpath.exists() and spath.exists():
        depth = formats.decode_depth(formats.read_bytes(dpath)).astype(float)
        seg = formats.decode_seg(formats.read_bytes(spath))
    else:
        depth, seg = render_depth(spec)
    K = spec.intrinsics
    if lpath.exists():
        labels = AffordanceLabels.from_planes(formats.decode_labels(formats.read_bytes(lpath)).astype(float))
    else:
        labels = generate_labels(depth, seg, None, K, grid, config, workers=workers)
    straight = generate_labels(depth, seg, None, K, STRAIGHT_ONLY, config)
    return BenchmarkScene(spec.seed, depth, seg, K, labels, object_difficulty(depth, seg, K, config.cup), straight)


def cmd_eval(args):
    config = _load_config(args.config)
    paths = sorted(Path(args.scenes).glob("*.json"))
    if not paths:
        raise ConfigError(f"no scene documents in {args.scenes}")
    scenes = [_eval_scene(p, args.grid, config, args.parallel) for p in paths]
    policies = [p.strip() for p in args.policies.split(",") if p.strip()]
    oracle = SealOracleConfig(seal_tolerance=config.cup.compliance_depth, grid=config)
    report = run_benchmark(scenes, policies, oracle, config.cup)
    Path(args.report).write_text(report.to_json())
    formats.write_meta(args.report, {"command": "eval", "scenes": len(scenes), "policies": ",".join(policies),
                                     "config": json.dumps(config.to_dict(), sort_keys=True)})
    sys.stdout.write(report.to_table())
    if args.min_gap is not None and not report.ordering_holds(tuple(policies), args.min_gap):
        print(f"ordering {' > '.join(policies)} with gap >= {args.min_gap} violated", file=sys.stderr)
        return EXIT_THRESHOLD
    return 0


def cmd_viz(args):
    planes = formats.decode_labels(formats.read_bytes(args.map)).astype(float)
    idx = {"f": 0, "beta": 1, "gamma": 2}[args.plane]
    if args.range is not None:
        lo, hi = args.range
    elif idx == 0:
        w = _load_config(args.config).weights
        lo, hi = w.f_min, w.f_max
    else:
        lo, hi = -30.0, 30.0
    formats.write_bytes(args.out, formats.viz_png(planes[idx], lo, hi))
    return 0


def _range(text):
    try:
        lo, hi = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("expected MIN:MAX") from None
    return lo, hi


def _grid(text):
    try:
        return AngleGrid.parse(text)
    except DomainError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="suction-affordance", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="sample scene documents")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--count", type=int, default=20, help="maximum objects per scene")
    g.add_argument("--bin", type=lambda s: _dims(s, 3), default=(0.6, 0.4, 0.3), help="WxHxD meters")
    g.add_argument("--image", type=lambda s: _dims(s, 2, int), default=(120, 80), help="WxH pixels")
    g.add_argument("--num", type=int, default=1, help="number of consecutive seeds")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("render", help="ray-cast depth and segmentation")
    r.add_argument("--scene", required=True)
    r.add_argument("--out-depth", required=True)
    r.add_argument("--out-seg", required=True)
    r.set_defaults(func=cmd_render)

    lb = sub.add_parser("label", help="generate affordance labels")
    lb.add_argument("--depth", required=True)
    lb.add_argument("--seg", required=True)
    lb.add_argument("--camera", required=True)
    lb.add_argument("--grid", type=_grid, default=AngleGrid())
    lb.add_argument("--config")
    lb.add_argument("--ids", help="comma-separated object ids (default: all)")
    lb.add_argument("--out", required=True)
    lb.add_argument("--parallel", type=int, default=1)
    lb.set_defaults(func=cmd_label)

    s = sub.add_parser("select", help="pick a grasp pose for one object")
    s.add_argument("--labels")
    s.add_argument("--seg", required=True)
    s.add_argument("--target", type=int, required=True)
    s.add_argument("--depth", required=True)
    s.add_argument("--camera", required=True)
    s.add_argument("--policy", choices=("argmax", "centroid"), default="argmax")
    s.set_defaults(func=cmd_select)

    e = sub.add_parser("eval", help="benchmark policies with the seal oracle")
    e.add_argument("--scenes", required=True, help="directory of scene JSON documents")
    e.add_argument("--policies", default="argmax,no-angle,centroid")
    e.add_argument("--report", required=True)
    e.add_argument("--config")
    e.add_argument("--grid", type=_grid, default=AngleGrid())
    e.add_argument("--parallel", type=int, default=1)
    e.add_argument("--min-gap", type=float, help="require each listed policy to beat the next by this rate")
    e.set_defaults(func=cmd_eval)

    v = sub.add_parser("viz", help="render a label plane as PNG")
    v.add_argument("--map", required=True)
    v.add_argument("--plane", choices=("f", "beta", "gamma"), default="f")
    v.add_argument("--range", type=_range)
    v.add_argument("--config")
    v.add_argument("--out", required=True)
    v.set_defaults(func=cmd_viz)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except NoGraspError as exc:
        print(f"no grasp: {exc}", file=sys.stderr)
        return EXIT_NO_GRASP
    except (ConfigError, DomainError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
