#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy fallbacks.

Usage:
    python benchmarks/bench_accel.py [--size 96] [--repeats 30]

The voxelwise kernel table is timed in-process (both paths are importable).
The end-to-end solver row runs a short reconstruction in two subprocesses,
one with QSM_DISABLE_NUMBA=1, so each path is measured exactly as users get
it. FFT work dominates the solver, which bounds how much the kernels can
move the total.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from qsmkit import _accel


def best_of(fn, repeats):
    fn()  # warm-up / JIT
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best * 1e3


def bench_kernels(size, repeats):
    rng = np.random.default_rng(0)
    field = rng.standard_normal((size, size, size))
    phase = rng.standard_normal((size, size, size))
    w2 = rng.uniform(0.0, 1.0, (size, size, size))

    xs = (np.arange(size) - size // 2) * 1.0
    kinds = np.array([0, 1, 2] * 4, dtype=np.int64)
    centers = rng.uniform(-size / 4, size / 4, (12, 3))
    sizes = rng.uniform(2, size / 6, (12, 3))
    axes = np.tile(np.array([0, 1, 2], dtype=np.int64), 4)
    chis = rng.standard_normal(12)

    rows = [
        (
            "weighted_sin_residual",
            lambda: _accel.weighted_sin_residual(field, phase, w2),
            lambda: _accel.weighted_sin_residual_numpy(field, phase, w2),
        ),
        (
            "trig_cost",
            lambda: _accel.trig_cost(field, phase, w2),
            lambda: _accel.trig_cost_numpy(field, phase, w2),
        ),
        (
            "residual_and_cost",
            lambda: _accel.residual_and_cost(field, phase, w2),
            lambda: _accel.residual_and_cost_numpy(field, phase, w2),
        ),
        (
            "rasterize_shapes",
            lambda: _accel.rasterize_shapes(xs, xs, xs, kinds, centers, sizes, axes, chis, 0.0),
            lambda: _accel.rasterize_shapes_numpy(xs, xs, xs, kinds, centers, sizes, axes, chis, 0.0),
        ),
    ]

    print(f"\nvoxelwise kernels, {size}^3 volume (best of {repeats}, ms):")
    print(f"{'kernel':<24}{'numba':>10}{'numpy':>10}{'speedup':>10}")
    for name, fast, fallback in rows:
        t_active = best_of(fast, repeats)
        t_numpy = best_of(fallback, repeats)
        label = t_active if _accel.USING_NUMBA else float("nan")
        print(f"{name:<24}{label:>10.2f}{t_numpy:>10.2f}{t_numpy / t_active:>9.2f}x")


_SOLVER_SNIPPET = """
import time
import numpy as np
from qsmkit import *
from qsmkit.core import voxel_coords

g = VolumeGrid(({size}, {size}, {size}))
xs, ys, zs = voxel_coords(g)
r2 = xs[:, None, None]**2 + ys[None, :, None]**2 + zs[None, None, :]**2
chi = ScalarVolume(g, np.where(r2 <= (g.dims[0] / 6.0)**2, 0.1, 0.0))
ones = ScalarVolume(g, np.ones(g.dims))
ds = simulate_acquisition(chi, ones, [Orientation((0.0, 0.0, 1.0))], NoiseSpec(0.001, 1))
ndi_reconstruct(ds, NdiConfig(max_iters=5))  # warm-up
t0 = time.perf_counter()
ndi_reconstruct(ds, NdiConfig(max_iters={iters}))
print((time.perf_counter() - t0) / {iters} * 1e3)
"""


def bench_solver(size, iters=60):
    results = {}
    for label, env_extra in (("numba", {}), ("numpy", {"QSM_DISABLE_NUMBA": "1"})):
        proc = subprocess.run(
            [sys.executable, "-c", _SOLVER_SNIPPET.format(size=size, iters=iters)],
            capture_output=True,
            text=True,
            env=dict(os.environ, **env_extra),
        )
        if proc.returncode != 0:
            print(f"solver benchmark ({label}) failed:\n{proc.stderr}", file=sys.stderr)
            return
        results[label] = float(proc.stdout.strip().splitlines()[-1])
    print(f"\nfull NDI iteration, {size}^3, 1 orientation (ms/iteration):")
    print(f"{'numba path':<24}{results['numba']:>10.2f}")
    print(f"{'numpy path':<24}{results['numpy']:>10.2f}")
    print(f"{'speedup':<24}{results['numpy'] / results['numba']:>9.2f}x")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--size", type=int, default=96, help="cube edge length (default 96)")
    parser.add_argument("--repeats", type=int, default=30)
    parser.add_argument("--solver-size", type=int, default=64)
    args = parser.parse_args()

    print(f"numba active: {_accel.USING_NUMBA} (QSM_DISABLE_NUMBA={os.environ.get('QSM_DISABLE_NUMBA', '')!r})")
    bench_kernels(args.size, args.repeats)
    bench_solver(args.solver_size)


if __name__ == "__main__":
    main()
