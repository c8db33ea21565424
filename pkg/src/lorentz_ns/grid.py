"""Periodic grids, real and spectral fields, and spectral calculus.

The box is ``[-L/2, L/2)^n`` sampled at ``N`` points per axis, so the origin
is a grid point.  Transforms are unnormalised ``fftn`` over the spatial axes;
physical integrals are cell-volume weighted sums.

Nyquist convention: the wavevector component at index ``-N/2`` is set to zero
for every multiplier (derivatives, Laplacian, Riesz, Leray, heat).  A real
field's Nyquist plane cannot carry an odd multiplier without leaving the reals,
and using one wavevector everywhere keeps all discrete identities
(``div grad = laplacian``, integration by parts, projector idempotence) exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


class GridMismatchError(ValueError):
    """Raised when two fields living on different grids are combined."""


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on ``[-L/2, L/2)^n``."""

    n: int
    N: int
    L: float

    def __post_init__(self):
        if self.n not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.n}")
        if self.N < 8 or self.N & (self.N - 1):
            raise ValueError(f"N must be a power of two >= 8, got {self.N}")
        if not (np.isfinite(self.L) and self.L > 0):
            raise ValueError(f"L must be positive, got {self.L}")
        object.__setattr__(self, "L", float(self.L))

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.n

    @property
    def dx(self) -> float:
        return self.L / self.N

    @property
    def cell_volume(self) -> float:
        return self.dx**self.n

    @property
    def volume(self) -> float:
        return self.L**self.n

    @cached_property
    def coords(self) -> np.ndarray:
        """1D coordinates ``-L/2 + j*dx``."""
        return -0.5 * self.L + self.dx * np.arange(self.N)

    @cached_property
    def mesh(self) -> tuple[np.ndarray, ...]:
        """Dense coordinate arrays, one per axis."""
        return tuple(np.meshgrid(*([self.coords] * self.n), indexing="ij"))

    @cached_property
    def radius(self) -> np.ndarray:
        return np.sqrt(sum(x**2 for x in self.mesh))

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Integer wavenumbers ``k`` in FFT order, covering ``[-N/2, N/2)``."""
        return np.fft.fftfreq(self.N, d=1.0 / self.N)

    @cached_property
    def xi1d(self) -> np.ndarray:
        """Angular wavenumbers ``2*pi*k/L`` with the Nyquist entry zeroed."""
        xi = 2.0 * np.pi * self.wavenumbers / self.L
        xi[self.N // 2] = 0.0
        return xi

    @cached_property
    def xi(self) -> tuple[np.ndarray, ...]:
        """Broadcastable wavevector components (each has shape ``N`` on one axis)."""
        out = []
        for axis in range(self.n):
            shape = [1] * self.n
            shape[axis] = self.N
            out.append(self.xi1d.reshape(shape))
        return tuple(out)

    @cached_property
    def xi2(self) -> np.ndarray:
        """``|xi|^2`` on the full spectral grid."""
        return sum(np.broadcast_to(x, self.shape) ** 2 for x in self.xi)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """Two-thirds rule mask: keep modes with every ``|k_i| < N/3``."""
        keep = np.abs(self.wavenumbers) < self.N / 3.0
        mask = np.ones(self.shape, dtype=bool)
        for axis in range(self.n):
            shape = [1] * self.n
            shape[axis] = self.N
            mask = mask & keep.reshape(shape)
        return mask

    @cached_property
    def nyquist_free_mask(self) -> np.ndarray:
        """Modes with no component at the Nyquist index."""
        keep = np.arange(self.N) != self.N // 2
        mask = np.ones(self.shape, dtype=bool)
        for axis in range(self.n):
            shape = [1] * self.n
            shape[axis] = self.N
            mask = mask & keep.reshape(shape)
        return mask

    def refine(self, factor: int = 2) -> "Grid":
        return Grid(self.n, self.N * factor, self.L)


class Field:
    """Real field of rank 0, 1 or 2 sampled on a grid (read-only)."""

    rank: int = -1

    def __init__(self, grid: Grid, values):
        values = np.array(values, dtype=float)
        expected = (grid.n,) * self.rank + grid.shape
        if values.shape != expected:
            raise ValueError(
                f"{type(self).__name__} on this grid needs shape {expected}, got {values.shape}"
            )
        values.flags.writeable = False
        self.grid = grid
        self.values = values

    def __repr__(self):
        g = self.grid
        return f"{type(self).__name__}(n={g.n}, N={g.N}, L={g.L})"

    def _check(self, other):
        if not isinstance(other, Field):
            return other
        if other.grid != self.grid:
            raise GridMismatchError(f"grids differ: {self.grid} vs {other.grid}")
        if other.rank != self.rank:
            raise ValueError("field ranks differ")
        return other.values

    def _new(self, values):
        return type(self)(self.grid, values)

    def __add__(self, other):
        return self._new(self.values + self._check(other))

    def __sub__(self, other):
        return self._new(self.values - self._check(other))

    def __mul__(self, scalar):
        if isinstance(scalar, Field):
            return NotImplemented
        return self._new(self.values * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self._new(self.values / scalar)

    def __neg__(self):
        return self._new(-self.values)

    def magnitude(self) -> np.ndarray:
        """Pointwise Euclidean (Frobenius) magnitude."""
        if self.rank == 0:
            return np.abs(self.values)
        axes = tuple(range(self.rank))
        return np.sqrt(np.sum(self.values**2, axis=axes))


class ScalarField(Field):
    rank = 0


class VectorField(Field):
    rank = 1

    def component(self, i: int) -> ScalarField:
        return ScalarField(self.grid, self.values[i])


class TensorField(Field):
    rank = 2

    def component(self, i: int, j: int) -> ScalarField:
        return ScalarField(self.grid, self.values[i, j])


_FIELD_TYPES = {0: ScalarField, 1: VectorField, 2: TensorField}


def field_of_rank(grid: Grid, values, rank: int) -> Field:
    return _FIELD_TYPES[rank](grid, values)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Fourier coefficients (unnormalised ``fftn``) of a rank-0/1/2 field."""

    grid: Grid
    coefficients: np.ndarray
    rank: int

    def __post_init__(self):
        expected = (self.grid.n,) * self.rank + self.grid.shape
        if self.coefficients.shape != expected:
            raise ValueError(f"spectral coefficients need shape {expected}")


def _spatial_axes(grid: Grid) -> tuple[int, ...]:
    return tuple(range(-grid.n, 0))


def transform(field: Field) -> SpectralField:
    coef = np.fft.fftn(field.values, axes=_spatial_axes(field.grid))
    return SpectralField(field.grid, coef, field.rank)


def inverse_transform(spec: SpectralField) -> Field:
    vals = np.fft.ifftn(spec.coefficients, axes=_spatial_axes(spec.grid)).real
    return field_of_rank(spec.grid, vals, spec.rank)


def fft(grid: Grid, values: np.ndarray) -> np.ndarray:
    return np.fft.fftn(values, axes=_spatial_axes(grid))


def ifft(grid: Grid, coef: np.ndarray) -> np.ndarray:
    return np.fft.ifftn(coef, axes=_spatial_axes(grid)).real


def spectral_gradient(grid: Grid, coef: np.ndarray) -> np.ndarray:
    """Append a derivative index as the last component axis."""
    rank = coef.ndim - grid.n
    parts = [1j * xi * coef for xi in grid.xi]
    return np.stack(parts, axis=rank)


def spectral_divergence(grid: Grid, coef: np.ndarray) -> np.ndarray:
    """Contract the last component index with the derivative."""
    rank = coef.ndim - grid.n
    if rank < 1:
        raise ValueError("divergence needs a vector or tensor field")
    moved = np.moveaxis(coef, rank - 1, 0)
    return sum(1j * xi * moved[k] for k, xi in enumerate(grid.xi))


def gradient(field: Field) -> Field:
    """``(grad f)_i = d_i f``; for a vector field ``(grad u)_{ij} = d_j u_i``."""
    if field.rank > 1:
        raise ValueError("gradient of a rank-2 field is not supported")
    grid = field.grid
    vals = ifft(grid, spectral_gradient(grid, fft(grid, field.values)))
    return field_of_rank(grid, vals, field.rank + 1)


def divergence(field: Field) -> Field:
    """``div u = d_i u_i``; for tensors ``(div F)_j = d_k F_jk``."""
    grid = field.grid
    vals = ifft(grid, spectral_divergence(grid, fft(grid, field.values)))
    return field_of_rank(grid, vals, field.rank - 1)


def laplacian(field: Field) -> Field:
    grid = field.grid
    vals = ifft(grid, -grid.xi2 * fft(grid, field.values))
    return field_of_rank(grid, vals, field.rank)


def inner_product(f: Field, g: Field) -> float:
    """``cell_volume * sum f.g`` over all points and components."""
    if f.grid != g.grid:
        raise GridMismatchError(f"grids differ: {f.grid} vs {g.grid}")
    if f.values.shape != g.values.shape:
        raise ValueError("fields have different ranks")
    return float(f.grid.cell_volume * np.sum(f.values * g.values))


def l2_norm(f: Field) -> float:
    return float(np.sqrt(f.grid.cell_volume * np.sum(f.values**2)))


def spectral_l2_norm(spec: SpectralField) -> float:
    """L2 norm computed from coefficients (Parseval)."""
    g = spec.grid
    total = np.sum(np.abs(spec.coefficients) ** 2)
    return float(np.sqrt(g.cell_volume * total / g.N**g.n))


def mean(field: Field) -> np.ndarray:
    return np.mean(field.values, axis=_spatial_axes(field.grid))


def band_limit(field: Field, mask: np.ndarray | None = None, remove_mean: bool = False) -> Field:
    """Zero the coefficients outside ``mask`` (default: the Nyquist-free modes)."""
    grid = field.grid
    mask = grid.nyquist_free_mask if mask is None else mask
    coef = fft(grid, field.values) * mask
    if remove_mean:
        coef[(...,) + (0,) * grid.n] = 0.0
    return field_of_rank(grid, ifft(grid, coef), field.rank)


def resample(field: Field, grid: Grid) -> Field:
    """Spectral interpolation/truncation of a field onto another grid of the same box."""
    src = field.grid
    if src.n != grid.n or src.L != grid.L:
        raise GridMismatchError("resampling needs the same dimension and box")
    coef = fft(src, field.values) / src.N**src.n
    comps = coef.shape[: field.rank]
    out = np.zeros(comps + grid.shape, dtype=complex)
    m = min(src.N, grid.N) // 2
    keep = np.r_[0:m, -m + 1 : 0]  # drop the Nyquist index on both sides
    idx = np.ix_(*([keep] * src.n))
    out[(...,) + idx] = coef[(...,) + idx]
    return field_of_rank(grid, ifft(grid, out * grid.N**grid.n), field.rank)
