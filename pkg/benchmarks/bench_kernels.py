"""Compare the compiled and pure-python kernel backends.

Runs both backends on identical inputs, checks bit-identical outputs, and
reports wall-clock speedups. Usage:

    python benchmarks/bench_kernels.py [--frames N] [--size WxH]
"""

from __future__ import annotations

import argparse
import math
import time

import numpy as np

from scenestream.geometry import camera_pose
from scenestream.kernels import available_backends, get_backend
from scenestream.simulator import generate_scene


def _scene_inputs(width: int, height: int):
    scene = generate_scene(3, 8)
    boxes = np.stack([b.params() for b in scene.objects])
    sem = np.arange(1, len(scene.objects) + 1, dtype=np.uint16)
    floor = (0.0, scene.room_dims[0], 0.0, scene.room_dims[1])
    pose = camera_pose((scene.room_dims[0] / 2, -1.5, 1.8),
                       yaw=math.pi / 2, pitch=-0.25)
    return boxes, sem, floor, pose


def _time(fn, repeats: int) -> float:
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_render(backends, width, height, frames, repeats=3):
    boxes, sem, floor, pose = _scene_inputs(width, height)
    results = {}
    outputs = {}
    for name in backends:
        mod = get_backend(name)

        def run():
            for _ in range(frames):
                outputs[name] = mod.render_boxes(
                    boxes, sem, floor, pose.rotation, pose.translation,
                    width / 2.0, width / 2.0, width / 2.0, height / 2.0,
                    width, height)

        results[name] = _time(run, repeats) / frames
    return results, outputs


def bench_iou(backends, n_pairs, repeats=3):
    rng = np.random.default_rng(0)
    pairs = []
    for _ in range(n_pairs):
        a = np.concatenate([rng.uniform(-1, 1, 3), rng.uniform(0.3, 2.0, 3),
                            rng.uniform(-math.pi, math.pi, 1)])
        b = np.concatenate([rng.uniform(-1, 1, 3), rng.uniform(0.3, 2.0, 3),
                            rng.uniform(-math.pi, math.pi, 1)])
        pairs.append((a, b))
    results = {}
    outputs = {}
    for name in backends:
        mod = get_backend(name)

        def run():
            outputs[name] = [mod.box_pair_intersection_volume(a, b, 4096, 0)
                             for a, b in pairs]

        results[name] = _time(run, repeats) / n_pairs
    return results, outputs


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--frames", type=int, default=20)
    parser.add_argument("--size", default="192x144")
    parser.add_argument("--pairs", type=int, default=2000)
    args = parser.parse_args()
    width, height = (int(v) for v in args.size.lower().split("x"))

    backends = available_backends()
    print(f"backends: {', '.join(backends)}")
    if len(backends) < 2:
        print("compiled backend unavailable; timing the reference only")

    render_times, render_out = bench_render(backends, width, height,
                                            args.frames)
    iou_times, iou_out = bench_iou(backends, args.pairs)

    if len(backends) == 2:
        a, b = (render_out[n] for n in backends)
        assert (a[0] == b[0]).all() and (a[1] == b[1]).all(), \
            "render outputs differ between backends"
        va = np.array(iou_out[backends[0]])
        vb = np.array(iou_out[backends[1]])
        assert (va == vb).all(), "intersection volumes differ between backends"
        print("bit-identity check: OK")

    print(f"\nrender_boxes ({width}x{height}, 8 boxes, per frame):")
    for name in backends:
        print(f"  {name:9s} {render_times[name] * 1e3:8.2f} ms")
    if len(backends) == 2:
        print(f"  speedup   {render_times['python'] / render_times['compiled']:8.1f}x")

    print(f"\nbox_pair_intersection_volume (per pair):")
    for name in backends:
        print(f"  {name:9s} {iou_times[name] * 1e6:8.1f} us")
    if len(backends) == 2:
        print(f"  speedup   {iou_times['python'] / iou_times['compiled']:8.1f}x")


if __name__ == "__main__":
    main()
