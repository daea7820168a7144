"""Compare the vote-accumulation kernels on rendered scenes.

    python benchmarks/bench_voting.py [--repeat 5] [--scenes 3]

Rows: compiled and numpy span kernels (the default fast path), the
general cone kernels, the O(N^2) definition on a downscaled scene, and
the whole segment step (voting plus mask processing) at full size.
"""

import argparse
import statistics
import time

import numpy as np

from uois import _kernels
from uois.core import SemanticLabels
from uois.geometry import backproject, gt_direction_field
from uois.pipeline import OraclePredictor, SegmentParams, segment_cloud
from uois.rng import substream
from uois.scenegen import SceneConfig, generate_scene
from uois.voting import _offset_tables, _votes_exact, _voters


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times), statistics.median(times)


def kernel_call(kind, k, sem, dirs, m):
    obj, rows, cols, voting, bins = _voters(sem, dirs, m)
    h, w = sem.grid.shape
    lut, lo, hi, _ = _offset_tables(h, w, m)
    r0, r1, c0, c1 = int(rows.min()), int(rows.max()) + 1, int(cols.min()), int(cols.max()) + 1
    src = tuple(np.ascontiguousarray(a[voting], dtype=np.int32) for a in (rows, cols, bins))
    if kind == "span":
        return lambda: k.span_votes(*src, lo, hi, h - 1, w - 1, r0, c0, r1, c1)
    return lambda: k.cone_votes(*src, lut, lo, hi, r0, c0, r1, c1)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--scenes", type=int, default=3)
    ap.add_argument("--bins", type=int, default=60)
    args = ap.parse_args()

    backends = _kernels.backends()
    print(f"default backend: {_kernels.BACKEND}; available: {', '.join(backends)}")
    print(f"{'scene':>5} {'visible':>7} {'obj px':>7}  {'path':<28}{'best s':>9}{'median s':>10}")
    for i in range(args.scenes):
        s = generate_scene(SceneConfig(object_count_range=(10, 10)), substream(0, i))
        sem = SemanticLabels.from_instances(s.instances)
        dirs = gt_direction_field(s.instances)
        n_obj = int((sem.labels == 2).sum())
        rows = []
        for name, k in backends.items():
            rows.append((f"span ({name})", kernel_call("span", k, sem, dirs, args.bins), args.repeat))
            rows.append((f"cone ({name})", kernel_call("cone", k, sem, dirs, args.bins), max(1, args.repeat // 2)))
        small = generate_scene(SceneConfig(object_count_range=(10, 10), resolution=(160, 120)), substream(0, i))
        ssem = SemanticLabels.from_instances(small.instances)
        sdirs = gt_direction_field(small.instances)
        rows.append(("exact O(N^2), 160x120", lambda: _votes_exact(ssem, sdirs, args.bins), 1))
        rows.append((f"span ({_kernels.BACKEND}), 160x120",
                     kernel_call("span", _kernels, ssem, sdirs, args.bins), args.repeat))
        cloud = backproject(s.depth, s.camera, s.valid)
        pred = OraclePredictor(s.instances)
        rows.append(("segment (fast voting + IMP)", lambda: segment_cloud(cloud, pred, SegmentParams()), args.repeat))
        for label, fn, rep in rows:
            best, med = best_of(fn, rep)
            print(f"{i:>5} {s.instances.num_instances:>7} {n_obj:>7}  {label:<28}{best:>9.4f}{med:>10.4f}")


if __name__ == "__main__":
    main()
