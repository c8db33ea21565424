"""Time the numba kernels against their numpy fallbacks and check that they agree.

Usage: python3 benchmarks/bench_kernels.py [--repeat 5] [--N 64] [--json out.json]
"""

from __future__ import annotations

import argparse
import json
import math
import time

import numpy as np

from lorentz_ns import _kernels
from lorentz_ns.grid import Grid, VectorField
from lorentz_ns.initial_data import taylor_green
from lorentz_ns.singular.riesz import _annulus_offsets, riesz_constant
from lorentz_ns.singular.truncation import _sparse_modes, bump_normalisation, time_nodes


def _convolve_case(N: int, rng):
    grid = Grid(2, N, 2 * math.pi)
    values = rng.standard_normal(grid.shape)
    offsets, r = _annulus_offsets(grid, grid.L / 32, grid.L / 2)
    weights = riesz_constant(2) * offsets[:, 0] * grid.dx / r**3 * grid.cell_volume
    return (values, offsets, weights)


def _double_star_case(rng, segments: int = 4000):
    v = np.sort(rng.uniform(0.1, 2.0, segments))[::-1].copy()
    widths = rng.uniform(1e-2, 1.0, segments)
    hi = 1e-3 + np.cumsum(widths)
    lo = hi - widths
    beta = np.concatenate(([0.0], np.cumsum(v * widths)[:-1])) - v * lo
    return (beta, v, lo, hi, 3.0, 2.5)


def _solenoidal_case(N: int):
    grid = Grid(2, N, 2 * math.pi)
    phi: VectorField = taylor_green(grid)
    R = 4 * grid.dx
    inside = grid.radius < 2 * R
    xs = np.stack([x[inside] for x in grid.mesh], axis=1)
    reach = int(math.ceil(4 * R / grid.dx))
    m1 = np.arange(-reach, reach + 1)
    mesh = np.meshgrid(m1, m1, indexing="ij")
    ys = grid.dx * np.stack([m.ravel() for m in mesh], axis=1).astype(float)
    ys = ys[np.sum(ys**2, axis=1) < (4 * R) ** 2]
    tn, tw = time_nodes(32)
    kvec, ccoef = _sparse_modes(phi)
    return (xs, ys, tn, tw * grid.cell_volume, R, bump_normalisation(grid, R), kvec, ccoef, 0.5 * grid.L)


def _time(fn, args, repeat: int) -> float:
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def _max_diff(a, b) -> float:
    if isinstance(a, tuple):
        return max(_max_diff(x, y) for x, y in zip(a, b))
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--N", type=int, default=64)
    parser.add_argument("--json", help="write the timings to this file")
    args = parser.parse_args(argv)
    rng = np.random.Generator(np.random.Philox(key=0))
    cases = {
        "convolve_offsets": _convolve_case(args.N, rng),
        "double_star_segments": _double_star_case(rng),
        "solenoidal_quadrature": _solenoidal_case(args.N),
    }
    results = {}
    print(f"{'kernel':<24}{'numpy [s]':>12}{'numba [s]':>12}{'speed-up':>10}{'max diff':>12}")
    for name, case in cases.items():
        fns = _kernels.KERNELS[name]
        fns["numba"](*case)  # compile outside the timing
        t_np = _time(fns["numpy"], case, args.repeat)
        t_nb = _time(fns["numba"], case, args.repeat)
        diff = _max_diff(fns["numpy"](*case), fns["numba"](*case))
        results[name] = {"numpy": t_np, "numba": t_nb, "speedup": t_np / t_nb, "max_diff": diff}
        print(f"{name:<24}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>10.1f}{diff:>12.2e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
