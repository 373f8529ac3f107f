"""Command-line interface.

Subcommands: simulate, replay, merge-baseline, eval, iou, parse,
oracle-stdio. Exit codes: 0 success, 1 data/config/evaluation failure,
2 detector protocol failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .errors import ProtocolError, SceneStreamError
from .geometry import CameraIntrinsics, OrientedBox3, iou3d, monte_carlo_iou3d
from .harness import (MODE_MEMORY, MODE_MERGE, ReplayConfig, emit_report,
                      load_dataset, load_replay_config, make_detector,
                      run_dataset, serve_detector_stdio)
from .metrics import GroundTruthSets, evaluate_report
from .scene_format import (CANONICAL_CATEGORIES, parse_scene_description,
                           serialize, to_boxes)


class _Parser(argparse.ArgumentParser):
    """argparse maps usage errors to exit code 2; we reserve 2 for
    protocol failures, so usage problems exit 1 like other bad input."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parse_box(text: str, flag: str) -> OrientedBox3:
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != 7:
        raise SceneStreamError(
            f"{flag} expects 7 numbers cx,cy,cz,dx,dy,dz,yaw; got {len(parts)}")
    try:
        vals = [float(p) for p in parts]
    except ValueError as exc:
        raise SceneStreamError(f"{flag}: {exc}") from exc
    return OrientedBox3(label="box", center=tuple(vals[:3]),
                        dims=tuple(vals[3:6]), yaw=vals[6])


def _load_config(args) -> ReplayConfig:
    config = (load_replay_config(args.config) if args.config
              else ReplayConfig())
    overrides = {}
    if getattr(args, "mode", None):
        overrides["mode"] = args.mode
    if getattr(args, "iou_threshold", None) is not None:
        overrides["iou_threshold"] = args.iou_threshold
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if overrides:
        config = ReplayConfig.from_dict({**config.to_dict(), **overrides})
    return config


def _cmd_replay(args, mode: str | None = None) -> int:
    args.mode = mode or args.mode
    config = _load_config(args)
    dataset = load_dataset(args.dataset)
    detector = make_detector(args.detector, config)
    try:
        results = run_dataset(dataset, detector, config)
    finally:
        close = getattr(detector, "close", None)
        if close:
            close()
    if args.out:
        path = emit_report(results, args.out, config=config,
                           scene_id=dataset.scene_id)
        print(f"report written to {path}")
    if results:
        final = results[-1]
        print(f"scene {dataset.scene_id}: {len(results)} timesteps, "
              f"final macro fuzzy F1 "
              f"{final.report.macro_fuzzy_f1:.4f}, "
              f"{len(final.detections.records)} detections")
    else:
        print(f"scene {dataset.scene_id}: no timesteps")
    return 0


def _cmd_eval(args) -> int:
    preds_text = Path(args.preds).read_text()
    gt_text = Path(args.gt).read_text()
    preds = parse_scene_description(preds_text)
    gt = parse_scene_description(gt_text)
    for src, res in (("preds", preds), ("gt", gt)):
        for diag in res.diagnostics:
            print(f"{src}: {diag}", file=sys.stderr)
    pred_boxes, _ = to_boxes(preds.description, CANONICAL_CATEGORIES)
    gt_boxes, _ = to_boxes(gt.description, CANONICAL_CATEGORIES)
    ids = tuple(f"gt_{i}" for i in range(len(gt_boxes)))
    gt_sets = GroundTruthSets(ids, tuple(gt_boxes), ids, tuple(gt_boxes))
    report = evaluate_report(pred_boxes, gt_sets, CANONICAL_CATEGORIES,
                             args.iou_threshold)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return 0


def _cmd_iou(args) -> int:
    a = _parse_box(args.a, "--a")
    b = _parse_box(args.b, "--b")
    value = iou3d(a, b)
    out = {"iou": value}
    if args.mc:
        out["monte_carlo"] = monte_carlo_iou3d(a, b, n_samples=args.mc,
                                               seed=args.seed)
    print(json.dumps(out))
    return 0


def _cmd_parse(args) -> int:
    text = Path(args.in_path).read_text()
    result = parse_scene_description(text, strict=args.strict)
    for diag in result.diagnostics:
        print(str(diag), file=sys.stderr)
    sys.stdout.write(serialize(result.description))
    print(f"{len(result.description.records)} records, "
          f"{len(result.diagnostics)} diagnostics", file=sys.stderr)
    return 0


def _cmd_simulate(args) -> int:
    from . import simulator as sim

    room = tuple(args.room)
    clear = None
    if args.clear_sightlines:
        radius = args.radius
        if radius is None:
            raise SceneStreamError("--clear-sightlines needs --radius")
        az = np.linspace(0.0, 2.0 * math.pi, 96, endpoint=False)
        clear = np.stack([0.5 * room[0] + radius * np.cos(az),
                          0.5 * room[1] + radius * np.sin(az),
                          np.full(az.size, args.height)], axis=1)
    categories = args.categories.split(",") if args.categories else None
    scene = sim.generate_scene(
        args.seed, args.objects, room_dims=room, min_gap=args.min_gap,
        categories=categories, placement_radius=args.placement_radius,
        clear_cameras=clear, max_attempts=args.max_attempts,
        max_restarts=args.max_restarts)
    trajectory = sim.orbit_trajectory(room, n_frames=args.frames,
                                      height=args.height, radius=args.radius,
                                      look_at_height=args.look_at)
    intrinsics = CameraIntrinsics(fx=args.fx, fy=args.fy, cx=args.cx,
                                  cy=args.cy, width=args.width,
                                  height=args.height_px)
    manifest = sim.export_dataset(scene, trajectory, intrinsics, args.out,
                                  label_flip_prob=args.label_flip,
                                  seed=args.seed)
    print(f"dataset written to {manifest.parent} "
          f"({len(scene.objects)} objects, {args.frames} frames)")
    return 0


def _cmd_oracle_stdio(args) -> int:
    from .simulator import OracleDetector

    detector = OracleDetector(cluster_eps=args.cluster_eps,
                              min_points=args.min_points,
                              min_extent=args.min_extent)

    def detect(snapshot, categories):
        return detector.detect(snapshot, categories)

    serve_detector_stdio(detect, name=args.name)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="scenestream",
                     description="Streaming 3D scene understanding toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    rep = sub.add_parser("replay", help="replay a dataset through a detector")
    rep.add_argument("--dataset", required=True,
                     help="dataset directory or manifest path")
    rep.add_argument("--detector", default="oracle",
                     help='"oracle[:k=v,...]" or a shell command speaking '
                          "the wire protocol (default: oracle)")
    rep.add_argument("--config", help="ReplayConfig JSON file")
    rep.add_argument("--out", help="report path (.json or .csv)")
    rep.add_argument("--mode", choices=(MODE_MEMORY, MODE_MERGE))
    rep.add_argument("--iou-threshold", type=float)
    rep.add_argument("--seed", type=int)
    rep.set_defaults(func=_cmd_replay)

    mrg = sub.add_parser("merge-baseline",
                         help="replay with per-frame detection merging")
    for flag, kw in (("--dataset", dict(required=True)),
                     ("--detector", dict(default="oracle")),
                     ("--config", dict()), ("--out", dict()),
                     ("--iou-threshold", dict(type=float)),
                     ("--seed", dict(type=int))):
        mrg.add_argument(flag, **kw)
    mrg.set_defaults(func=lambda a: _cmd_replay(a, mode=MODE_MERGE),
                     mode=None)

    ev = sub.add_parser("eval", help="score predictions against ground truth")
    ev.add_argument("--preds", required=True,
                    help="scene-description text file of predictions")
    ev.add_argument("--gt", required=True,
                    help="scene-description text file of ground truth")
    ev.add_argument("--iou-threshold", type=float, default=0.25)
    ev.set_defaults(func=_cmd_eval)

    iou = sub.add_parser("iou", help="IoU of two oriented boxes")
    iou.add_argument("--a", required=True, metavar="BOX",
                     help="cx,cy,cz,dx,dy,dz,yaw")
    iou.add_argument("--b", required=True, metavar="BOX")
    iou.add_argument("--mc", type=int, default=0,
                     help="also report a Monte Carlo estimate over N samples")
    iou.add_argument("--seed", type=int, default=0)
    iou.set_defaults(func=_cmd_iou)

    par = sub.add_parser("parse", help="parse and normalize a description")
    par.add_argument("--in", dest="in_path", required=True, metavar="FILE")
    par.add_argument("--strict", action="store_true",
                     help="fail on the first malformed line")
    par.set_defaults(func=_cmd_parse)

    simp = sub.add_parser("simulate", help="generate a synthetic dataset")
    simp.add_argument("--seed", type=int, required=True)
    simp.add_argument("--out", required=True, help="output directory")
    simp.add_argument("--objects", type=int, default=8)
    simp.add_argument("--room", type=float, nargs=3, default=[6.0, 6.0, 3.0],
                      metavar=("X", "Y", "Z"))
    simp.add_argument("--min-gap", type=float, default=0.5)
    simp.add_argument("--frames", type=int, default=24)
    simp.add_argument("--height", type=float, default=1.8,
                      help="camera height (m)")
    simp.add_argument("--radius", type=float, default=None,
                      help="orbit radius (default: fit to room)")
    simp.add_argument("--look-at", type=float, default=0.5,
                      help="height the camera pitches toward")
    simp.add_argument("--categories",
                      help="comma-separated category subset")
    simp.add_argument("--placement-radius", type=float, default=None,
                      help="confine objects to a disk of this radius")
    simp.add_argument("--clear-sightlines", action="store_true",
                      help="require unobstructed witness points from the "
                           "orbit (needs --radius)")
    simp.add_argument("--max-attempts", type=int, default=10_000)
    simp.add_argument("--max-restarts", type=int, default=0)
    simp.add_argument("--label-flip", type=float, default=0.0,
                      help="per-frame probability of a cyclic label shift")
    simp.add_argument("--fx", type=float, default=95.0)
    simp.add_argument("--fy", type=float, default=95.0)
    simp.add_argument("--cx", type=float, default=96.0)
    simp.add_argument("--cy", type=float, default=72.0)
    simp.add_argument("--width", type=int, default=192)
    simp.add_argument("--height-px", type=int, default=144)
    simp.set_defaults(func=_cmd_simulate)

    ora = sub.add_parser("oracle-stdio",
                         help="serve the oracle detector over stdio")
    ora.add_argument("--cluster-eps", type=float, default=0.3)
    ora.add_argument("--min-points", type=int, default=20)
    ora.add_argument("--min-extent", type=float, default=0.02)
    ora.add_argument("--name", default="oracle")
    ora.set_defaults(func=_cmd_oracle_stdio)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ProtocolError as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        for line in exc.transcript:
            print(f"  {line}", file=sys.stderr)
        return 2
    except SceneStreamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
