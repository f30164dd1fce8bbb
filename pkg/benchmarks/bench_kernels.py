#!/usr/bin/env python3
"""Compiled kernels vs the numpy fallback on realistic detection workloads.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Times binary erosion/dilation on a full 320x240 mask, Hough voting for a
near and a far target, and the whole ``detect_object`` pipeline under each
backend.  Both backends must return identical results; the script checks
that before printing timings.
"""

import argparse
import json
import platform
import timeit

import numpy as np

from follower import _pykernels, vision
from follower.kinematics import Pose
from follower.world import render_frame

try:
    from follower import _ckernels
except ImportError:
    _ckernels = None


def hough_inputs(frame):
    mask = vision.detection_mask(frame, vision.VisionConfig())
    ys, xs = vision.boundary_pixels(mask)
    dy, dx, ptr = vision._rings(5, 60)
    return (ys, xs, dy, dx, ptr, 0, 0, mask.shape[0], mask.shape[1])


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat)) * 1000.0


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20, help="timing repetitions (best is kept)")
    args = ap.parse_args()
    if _ckernels is None:
        raise SystemExit("compiled extension not built: run `python3 setup.py build_ext --inplace`")

    near = render_frame(Pose(), (0.45, 0.05))
    far = render_frame(Pose(), (1.8, -0.3))
    mask = vision.threshold_mask(near, vision.HsvRange()).astype(np.uint8)
    cases = {
        "erode_5x5": lambda k: k.binary_erode(mask, 5),
        "dilate_5x5": lambda k: k.binary_dilate(mask, 5),
        "hough_near_target": (lambda args_: lambda k: k.hough_vote(*args_))(hough_inputs(near)),
        "hough_far_target": (lambda args_: lambda k: k.hough_vote(*args_))(hough_inputs(far)),
    }

    results = {}
    for name, fn in cases.items():
        if not np.array_equal(fn(_ckernels), fn(_pykernels)):
            raise SystemExit(f"{name}: backends disagree")
        c = best_of(lambda: fn(_ckernels), args.repeat)
        p = best_of(lambda: fn(_pykernels), args.repeat)
        results[name] = {"cython_ms": round(c, 3), "python_ms": round(p, 3), "speedup": round(p / c, 2)}

    def pipeline(k):
        saved = vision.kernels
        vision.kernels = k
        try:
            return [vision.detect_object(f) for f in (near, far)]
        finally:
            vision.kernels = saved

    if pipeline(_ckernels) != pipeline(_pykernels):
        raise SystemExit("detect_object: backends disagree")
    c = best_of(lambda: pipeline(_ckernels), args.repeat) / 2
    p = best_of(lambda: pipeline(_pykernels), args.repeat) / 2
    results["detect_object_per_frame"] = {"cython_ms": round(c, 3), "python_ms": round(p, 3),
                                          "speedup": round(p / c, 2)}

    print(json.dumps({"machine": platform.machine(), "python": platform.python_version(),
                      "numpy": np.__version__, "results": results}, indent=1))


if __name__ == "__main__":
    main()
