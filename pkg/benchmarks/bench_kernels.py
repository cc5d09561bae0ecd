"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 3]

Each row reports the best wall time per backend and the speedup of the
compiled kernels over the numpy fallback, after checking both return the
same result.
"""

import argparse
import time

import numpy as np

from ddq._backend import available_backends
from ddq.dense_queries import build_pyramid
from ddq.duplicate_removal import score_order


def best_time(fn, repeat):
    out, best = None, float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def cases(rng):
    # dense queries around pyramid points, duplicated 8x: ~107k boxes.
    # The capped NMS case stops once 300 boxes are kept.
    pyr = build_pyramid(800, 800)
    pts = np.repeat(pyr.points, 8, axis=0)
    half = np.repeat(2.0 * 2.0 ** pyr.point_levels, 8)[:, None] * rng.uniform(0.8, 1.2, (pts.shape[0], 1))
    boxes = np.concatenate([pts - half, pts + half], 1) + rng.normal(0, 2, (pts.shape[0], 4))
    boxes[:, 2:] = np.maximum(boxes[:, 2:], boxes[:, :2] + 1)
    order = score_order(rng.uniform(0, 1, boxes.shape[0]))
    a = boxes[:2000]
    cost = rng.uniform(0, 1, (100, 300))
    fmap = rng.normal(size=(100, 100, 64))
    return {
        f"greedy_nms ({boxes.shape[0]} boxes, keep 300)": lambda k: k.greedy_nms(boxes, order, 0.7, 300),
        "greedy_nms (20000 boxes, no cap)": lambda k: k.greedy_nms(boxes, order[:20000], 0.7, 20000),
        "pairwise_iou (2000 x 2000)": lambda k: k.pairwise_iou(a, a),
        "solve_assignment (100 x 300)": lambda k: k.solve_assignment(cost),
        "roi_align (100 x 100 x 64 map, 200 boxes)": lambda k: [
            k.roi_align(fmap, x, y, x + 9.5, y + 12.25, 7, 7, 2) for x, y in zip(range(0, 80, 2), range(0, 200, 5))
            for _ in range(5)
        ],
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = available_backends()
    if "cython" not in backends:
        print("compiled extension not built; only the numpy backend is available")
    names = sorted(backends)
    print(f"{'kernel':<46}" + "".join(f"{n:>12}" for n in names) + f"{'speedup':>10}")
    for label, fn in cases(np.random.default_rng(0)).items():
        times, outs = {}, {}
        for name in names:
            times[name], outs[name] = best_time(lambda: fn(backends[name]), args.repeat)
        ref = outs["python"]
        for name in names:
            np.testing.assert_array_equal(np.asarray(outs[name]), np.asarray(ref))
        speed = f"{times['python'] / times['cython']:.1f}x" if "cython" in times else "-"
        print(f"{label:<46}" + "".join(f"{times[n] * 1e3:>10.2f}ms" for n in names) + f"{speed:>10}")


if __name__ == "__main__":
    main()
