#!/usr/bin/env python3
"""Benchmark the five-layer grid encode on synthetic scans.

Reports wall-clock timings for the full encode (detections plus ray-traced
observation layers) into the default 1001x501 grid, after one warmup call
that absorbs the JIT compile.

Usage:
    python3 scripts/benchmark_encode.py --points 130000 --repeats 10
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from semgrid import GridSpec, encode_multilayer, synth_scene


def parse_args():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--points", type=int, default=130_000)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    return p.parse_args()


def main():
    args = parse_args()
    spec = GridSpec()
    cloud = synth_scene(seed=args.seed, n_points=args.points)

    t0 = time.perf_counter()
    encode_multilayer(synth_scene(seed=args.seed + 1, n_points=1000), spec)
    print(f"warmup (JIT compile or cache load): {time.perf_counter() - t0:.3f} s")

    times = []
    for _ in range(args.repeats):
        start = time.perf_counter()
        stack = encode_multilayer(cloud, spec)
        times.append(time.perf_counter() - start)
    times = np.array(times)

    cells = stack.observations.values.sum()
    print(f"{args.points} points -> {spec.n_x}x{spec.n_y} grid, "
          f"{int(cells)} ray-cell crossings")
    print(f"best   {times.min() * 1000:8.1f} ms")
    print(f"median {np.median(times) * 1000:8.1f} ms")
    print(f"mean   {times.mean() * 1000:8.1f} ms  (n={args.repeats})")
    rate = args.points / times.min()
    print(f"throughput {rate / 1e6:.2f} M points/s at best")


if __name__ == "__main__":
    main()
