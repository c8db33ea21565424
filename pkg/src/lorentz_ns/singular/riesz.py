"""Riesz transforms (spectral and truncated real-space) and the Leray projector."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gamma

from .. import _kernels
from ..grid import Field, Grid, ScalarField, VectorField, fft, ifft


def riesz_constant(n: int) -> float:
    """Normalisation of the Riesz kernel ``c_n y_j / |y|^{n+1}``."""
    return gamma((n + 1) / 2) / math.pi ** ((n + 1) / 2)


def riesz_multiplier(grid: Grid, j: int) -> np.ndarray:
    """``-i xi_j / |xi|``, zero where ``|xi| = 0``."""
    mag = np.sqrt(grid.xi2)
    safe = np.where(mag > 0, mag, 1.0)
    return np.where(mag > 0, -1j * grid.xi[j] / safe, 0.0)


def riesz(f: ScalarField, j: int) -> ScalarField:
    """Spectral Riesz transform ``R_j f``.

    ``sum_j R_j R_j f = -(f - mean)`` holds on fields without Nyquist content.
    """
    grid = f.grid
    if not 0 <= j < grid.n:
        raise ValueError(f"component index {j} out of range")
    return ScalarField(grid, ifft(grid, riesz_multiplier(grid, j) * fft(grid, f.values)))


def riesz_vector(f: ScalarField) -> VectorField:
    grid = f.grid
    coef = fft(grid, f.values)
    return VectorField(grid, np.stack([ifft(grid, riesz_multiplier(grid, j) * coef) for j in range(grid.n)]))


def _annulus_offsets(grid: Grid, eps: float, outer: float):
    """Integer offsets ``m`` with ``eps < |m dx| < outer`` (minimal image)."""
    m1 = np.arange(-grid.N // 2, grid.N // 2)
    mesh = np.meshgrid(*([m1] * grid.n), indexing="ij")
    offsets = np.stack([m.ravel() for m in mesh], axis=1)
    r = grid.dx * np.sqrt(np.sum(offsets.astype(float) ** 2, axis=1))
    keep = (r > eps) & (r < outer)
    return offsets[keep], r[keep]


def truncated_riesz(f: ScalarField, j: int, eps: float) -> ScalarField:
    """Direct convolution with ``c_n y_j/|y|^{n+1}`` over ``eps < |y| < L/2``.

    Riemann sum on the grid offsets, minimal image.  The kernel is odd, so the
    operator is exactly skew-adjoint in the discrete inner product.
    """
    grid = f.grid
    if not 0.0 < eps < grid.L / 2:
        raise ValueError(f"truncation radius must lie in (0, L/2), got {eps}")
    offsets, r = _annulus_offsets(grid, eps, grid.L / 2)
    y = offsets[:, j] * grid.dx
    weights = riesz_constant(grid.n) * y / r ** (grid.n + 1) * grid.cell_volume
    return ScalarField(grid, _kernels.convolve_offsets(f.values, offsets, weights))


def leray_coefficients(grid: Grid, coef: np.ndarray) -> np.ndarray:
    """Apply ``P_ij = delta_ij - xi_i xi_j/|xi|^2`` to vector coefficients."""
    xi2 = np.where(grid.xi2 > 0, grid.xi2, 1.0)
    div = sum(xi * coef[k] for k, xi in enumerate(grid.xi))
    return np.stack([coef[i] - grid.xi[i] * div / xi2 for i in range(grid.n)])


def leray_project(u: VectorField) -> VectorField:
    """Leray projection ``P_ij = delta_ij + R_i R_j`` onto divergence-free fields."""
    grid = u.grid
    return VectorField(grid, ifft(grid, leray_coefficients(grid, fft(grid, u.values))))


def weak11_constant(f: ScalarField, alphas=None) -> tuple[float, np.ndarray, np.ndarray]:
    """Empirical weak-(1,1) ratio ``alpha |{|Rf| > alpha}| / ||f||_1``.

    ``Rf`` is the vector of Riesz transforms.  Returns the maximum ratio over
    the sweep, the sweep itself and the ratios.
    """
    grid = f.grid
    l1 = grid.cell_volume * np.sum(np.abs(f.values))
    if l1 == 0.0:
        raise ValueError("weak-(1,1) ratio is undefined for f = 0")
    mag = riesz_vector(f).magnitude()
    if alphas is None:
        top = float(mag.max())
        alphas = np.geomspace(1e-3 * top, 0.5 * top, 32)
    alphas = np.asarray(alphas, dtype=float)
    counts = np.array([np.count_nonzero(mag > a) for a in alphas])
    ratios = alphas * counts * grid.cell_volume / l1
    return float(ratios.max()), alphas, ratios


def apply_to_field(field: Field, multiplier: np.ndarray) -> np.ndarray:
    grid = field.grid
    return ifft(grid, multiplier * fft(grid, field.values))
