#!/usr/bin/env python3
"""Benchmark the hot kernels: numba-jitted path vs. pure numpy.

For the sequential LIF kernels the numpy path is the jitted function's own
``py_func``; the event kernels are benchmarked against their vectorized
numpy twins. Run after any kernel change:

    python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from spikespell import _kernels


def timeit(fn, *args, repeats=5):
    fn(*args)  # warmup (and JIT compile)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    if not _kernels.NUMBA_ENABLED:
        print("numba path disabled (SPIKESPELL_NO_NUMBA=1 or not installed); "
              "nothing to compare")
        return

    rng = np.random.default_rng(0)
    rows = []

    cur = rng.normal(0.3, 0.6, (35, 64, 512))
    rows.append(("lif_forward (35x64x512)",
                 timeit(_kernels.lif_forward, cur, 0.92, 1.0, 25.0, 1,
                        repeats=args.repeats),
                 timeit(_kernels.lif_forward.py_func, cur, 0.92, 1.0, 25.0, 1,
                        repeats=args.repeats)))

    u, _ = _kernels.lif_forward(cur, 0.92, 1.0, 25.0, 1)
    gs = rng.normal(size=cur.shape)
    rows.append(("lif_backward (35x64x512)",
                 timeit(_kernels.lif_backward, u, gs, 0.92, 1.0, 25.0,
                        repeats=args.repeats),
                 timeit(_kernels.lif_backward.py_func, u, gs, 0.92, 1.0, 25.0,
                        repeats=args.repeats)))

    exc = rng.uniform(0, 2, (38, 64, 512))
    inh = rng.uniform(0, 1, (38, 64, 512))
    dep_args = (0.8187, 0.7165, 0.92, -65.0, -65.0, -61.0, 1)
    rows.append(("deploy_lif_layer (38x64x512)",
                 timeit(_kernels.deploy_lif_layer, exc, inh, *dep_args,
                        repeats=args.repeats),
                 timeit(_kernels.deploy_lif_layer.py_func, exc, inh, *dep_args,
                        repeats=args.repeats)))

    drive = rng.uniform(0, 1.2, (180, 240))
    rows.append(("const_drive_spike_counts (180x240, 35 steps)",
                 timeit(_kernels.const_drive_spike_counts, drive, 0.92, 1.0, 35,
                        repeats=args.repeats),
                 timeit(_kernels.const_drive_spike_counts.py_func, drive, 0.92,
                        1.0, 35, repeats=args.repeats)))

    n = 500_000
    t = np.sort(rng.integers(0, 35_000, n))
    x = rng.integers(0, 240, n)
    y = rng.integers(0, 180, n)
    bin_args = (10, 10, 128, 35, 1000, 48)
    rows.append(("bin_events (5e5 events)",
                 timeit(_kernels.bin_events_loop, t, x, y, *bin_args,
                        repeats=args.repeats),
                 timeit(_kernels.bin_events_numpy, t, x, y, *bin_args,
                        repeats=args.repeats)))

    logs = np.log(rng.uniform(1, 255, (36, 112, 112)) + 1.0)
    rows.append(("dvs_emit (36 frames, 112x112)",
                 timeit(_kernels._dvs_emit_numba, logs, 0.15, 0.15, 1000,
                        repeats=args.repeats),
                 timeit(_kernels._dvs_emit_numpy, logs, 0.15, 0.15, 1000,
                        repeats=args.repeats)))

    name_w = max(len(r[0]) for r in rows) + 2
    print(f"{'kernel':<{name_w}}{'numba':>10}{'numpy':>10}{'speedup':>9}")
    for name, jit_s, np_s in rows:
        print(f"{name:<{name_w}}{jit_s*1e3:>8.2f}ms{np_s*1e3:>8.2f}ms"
              f"{np_s/jit_s:>8.1f}x")


if __name__ == "__main__":
    main()
