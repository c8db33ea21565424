"""Calderon-Zygmund decomposition on the dyadic cubes of a periodic grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..grid import Grid, ScalarField


@dataclass(frozen=True)
class Cube:
    """Dyadic cube of side ``L / 2^level`` whose lowest corner has multi-index ``index``."""

    level: int
    index: tuple[int, ...]

    def side(self, grid: Grid) -> float:
        return grid.L / 2**self.level

    def corner(self, grid: Grid) -> np.ndarray:
        return -0.5 * grid.L + self.side(grid) * np.array(self.index, dtype=float)

    def cells(self, grid: Grid) -> tuple[slice, ...]:
        """Index slices of the grid cells inside the cube."""
        s = grid.N >> self.level
        return tuple(slice(i * s, (i + 1) * s) for i in self.index)

    def measure(self, grid: Grid) -> float:
        return self.side(grid) ** grid.n


def _block_sums(a: np.ndarray, level: int) -> np.ndarray:
    n = a.ndim
    k = 2**level
    s = a.shape[0] // k
    return a.reshape(sum(((k, s) for _ in range(n)), ())).sum(axis=tuple(range(1, 2 * n, 2)))


def _upsample(a: np.ndarray, factor: int) -> np.ndarray:
    for axis in range(a.ndim):
        a = np.repeat(a, factor, axis=axis)
    return a


def _exact_complement(f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """``b`` with ``g + b == f`` bit for bit wherever a float64 ``b`` allows it.

    When ``|f|`` is far below ``|g|`` in a cell no double closes the gap; there
    ``g + b`` is within one ulp of ``g``.
    """
    b = f - g
    for _ in range(4):
        miss = (g + b) != f
        if not miss.any():
            break
        # move b one ulp towards the side that closes the gap
        b[miss] = np.nextafter(b[miss], np.where((g + b)[miss] < f[miss], np.inf, -np.inf))
    return b


@dataclass(frozen=True, eq=False)
class CZDecomposition:
    """``f = good + bad`` with ``bad`` supported on disjoint dyadic cubes."""

    f: ScalarField
    alpha: float
    good: ScalarField
    bad: ScalarField
    cubes: tuple[Cube, ...]
    covered: np.ndarray  # boolean mask of grid cells inside some cube

    @property
    def grid(self) -> Grid:
        return self.f.grid

    def cube_average(self, cube: Cube, values: np.ndarray | None = None) -> float:
        vals = np.abs(self.f.values) if values is None else values
        return float(np.mean(vals[cube.cells(self.grid)]))

    def reconstruction_error(self) -> float:
        """``max |good + bad - f|`` (zero except where ``|f| << |good|``)."""
        return float(np.max(np.abs(self.good.values + self.bad.values - self.f.values)))

    def total_measure(self) -> float:
        return float(sum(c.measure(self.grid) for c in self.cubes))

    def check(self) -> dict:
        """Residuals of the three stopping-time properties (all <= 0 when they hold).

        ``outside``: ``max |f| - alpha`` off the cubes; ``lower``/``upper``:
        worst violation of ``alpha < avg_Q |f| <= 2^n alpha``; ``measure``:
        ``sum |Q| - ||f||_1 / alpha``; ``zero_mean``: largest ``|avg_Q bad|``.
        """
        grid, a = self.grid, self.alpha
        absf = np.abs(self.f.values)
        off = absf[~self.covered]
        avgs = np.array([self.cube_average(c) for c in self.cubes])
        bad_means = np.array([self.cube_average(c, self.bad.values) for c in self.cubes])
        l1 = grid.cell_volume * absf.sum()
        return {
            "outside": float(off.max() - a) if off.size else -a,
            "lower": float(np.max(a - avgs)) if avgs.size else -a,
            "upper": float(np.max(avgs - 2**grid.n * a)) if avgs.size else -a,
            "measure": self.total_measure() - l1 / a,
            "zero_mean": float(np.max(np.abs(bad_means))) if avgs.size else 0.0,
        }

    def dilated_cover_measure(self, factor: float | None = None) -> float:
        """Measure of the union of the concentric dilates ``Q*`` (periodic)."""
        grid = self.grid
        factor = 2 * np.sqrt(grid.n) if factor is None else factor
        mask = np.zeros(grid.shape, dtype=bool)
        for cube in self.cubes:
            side = cube.side(grid)
            centre = cube.corner(grid) + 0.5 * side
            inside = np.ones(grid.shape, dtype=bool)
            for x, c in zip(grid.mesh, centre):
                d = (x - c + 0.5 * grid.L) % grid.L - 0.5 * grid.L
                inside &= np.abs(d) < 0.5 * factor * side
            mask |= inside
        return float(mask.sum() * grid.cell_volume)


def cz_decompose(f: ScalarField, alpha: float) -> CZDecomposition:
    """Stopping-time dyadic decomposition of ``f`` at height ``alpha``.

    A cube is selected the first time ``avg_Q |f| > alpha``; otherwise it is
    split, down to single cells.  ``good`` is the cube average of ``f`` on
    selected cubes and ``f`` elsewhere; ``bad = f - good`` exactly.
    """
    grid = f.grid
    absf = np.abs(f.values)
    mean_abs = float(absf.mean())
    if not alpha > mean_abs:
        raise ValueError(f"alpha must exceed the mean of |f| ({mean_abs:.6g}), got {alpha}")
    depth = int(np.log2(grid.N))
    active = np.ones((1,) * grid.n, dtype=bool)
    covered = np.zeros(grid.shape, dtype=bool)
    good = f.values.copy()
    cubes = []
    for level in range(1, depth + 1):
        active = _upsample(active, 2)
        side_cells = grid.N >> level
        sums = _block_sums(absf, level)
        selected = active & (sums / side_cells**grid.n > alpha)
        if selected.any():
            means = _block_sums(f.values, level) / side_cells**grid.n
            full_sel = _upsample(selected, side_cells)
            good = np.where(full_sel, _upsample(means, side_cells), good)
            covered |= full_sel
            cubes.extend(Cube(level, tuple(int(i) for i in idx)) for idx in np.argwhere(selected))
        active = active & ~selected
    bad = _exact_complement(f.values, good)
    return CZDecomposition(
        f=f, alpha=float(alpha), good=ScalarField(grid, good), bad=ScalarField(grid, bad),
        cubes=tuple(cubes), covered=covered,
    )
