"""Cut a divergence-free field off to a ball while keeping it divergence-free.

``phi_R = rho_R phi - v_R`` where ``rho_R`` is a smooth cutoff (1 on ``|x| < R``,
0 on ``|x| > 2R``), ``f_R = phi . grad rho_R`` and

    v_R(x) = int int_0^1 y omega_R(x + y - t y) f_R(x - t y) dt dy

with ``omega_R`` a normalised bump on ``B(0, 2R)``.  Then ``div v_R = f_R`` and
``v_R`` is supported in ``B(0, 2R)``.

Quadrature: ``y`` runs over the grid offsets (one node per cell).  For each
``(x, y)`` the ``t``-support of the integrand is an interval; it gets 128
midpoint nodes of a smoothed variable ``t = s(tau)`` with
``s' = (16/5) sin^6(pi tau)``, which keeps the rule high order at interval
ends where the integrand does not vanish.  ``f_R`` is evaluated off the grid
through the trigonometric interpolant of ``phi`` (exact for band-limited
``phi``, cost proportional to its number of Fourier modes).  Both profiles
are C-infinity: ``omega(x) ~ exp(-1/(1 - |x|^2/4))`` and a logistic-type
smooth step for ``rho``.

With exact ``t`` integration the divergence of the quadrature ``v_R`` is
``f_R - omega_R * S`` where ``S = dx^n sum_grid f_R`` is the lattice sum of
``f_R`` (zero in the continuum, small but non-zero on a grid unless symmetry
kills it).  ``TruncationResult.lattice_flux`` reports ``S``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import _kernels
from ..grid import Grid, VectorField, divergence, fft

T_NODES = 128
MAX_MODES = 512
# Relative size of f_R on the grid below which phi is taken to vanish on the annulus.
FLUX_TOL = 1e-14
# Fourier coefficients below this fraction of the largest one are ignored.
MODE_CUTOFF = 1e-14


def time_nodes(count: int = T_NODES) -> tuple[np.ndarray, np.ndarray]:
    """Nodes in ``t`` and weights for the smoothed midpoint rule on (0, 1)."""
    tau = (np.arange(count) + 0.5) / count
    t = tau - (
        15 * np.sin(2 * np.pi * tau) / (2 * np.pi)
        - 6 * np.sin(4 * np.pi * tau) / (4 * np.pi)
        + np.sin(6 * np.pi * tau) / (6 * np.pi)
    ) / 10
    w = 16 / 5 * np.sin(np.pi * tau) ** 6 / count
    return t, w


def cutoff(grid: Grid, R: float) -> tuple[np.ndarray, np.ndarray]:
    """``rho_R`` and ``grad rho_R`` on the grid."""
    r = grid.radius / R
    h0, h1, _ = _kernels._cutoff_profile_numpy(r)
    safe = np.where(r > 0, r, 1.0)
    grad = np.stack([h1 / (R * safe) * x / R for x in grid.mesh])
    return h0, grad


def bump_normalisation(grid: Grid, R: float) -> float:
    """Factor making ``dx^n sum_grid omega_R = 1``."""
    r2 = (grid.radius / R) ** 2
    inside = r2 < 4.0
    total = np.sum(np.exp(-1.0 / (1.0 - 0.25 * r2[inside])))
    return 1.0 / (total * grid.cell_volume)


def _sparse_modes(phi: VectorField):
    grid = phi.grid
    coef = fft(grid, phi.values) / grid.N**grid.n
    coef = coef * grid.nyquist_free_mask
    size = np.max(np.abs(coef), axis=0)
    keep = size > MODE_CUTOFF * max(size.max(), 1e-300)
    idx = np.argwhere(keep)
    kvec = 2 * np.pi * grid.wavenumbers[idx] / grid.L
    ccoef = np.stack([coef[(d,) + tuple(idx.T)] for d in range(grid.n)], axis=1)
    return kvec, ccoef


@dataclass(frozen=True, eq=False)
class TruncationResult:
    field: VectorField  # phi_R
    correction: VectorField  # v_R
    flux: np.ndarray  # f_R = phi . grad rho_R on the grid
    quadrature_divergence: np.ndarray  # f_R - (quadrature of div v_R) on the grid
    R: float
    lattice_flux: float  # dx^n * sum of f_R over the grid

    def divergence_l2(self) -> float:
        """L2 norm of ``div phi_R`` with the derivative taken under the quadrature."""
        g = self.field.grid
        return float(np.sqrt(g.cell_volume * np.sum(self.quadrature_divergence**2)))

    def spectral_divergence_l2(self) -> float:
        """L2 norm of the spectral divergence of the sampled ``phi_R`` (resolution limited)."""
        g = self.field.grid
        return float(np.sqrt(g.cell_volume * np.sum(divergence(self.field).values ** 2)))


def solenoidal_truncate(
    phi: VectorField, R: float, t_nodes: int = T_NODES, max_modes: int = MAX_MODES
) -> TruncationResult:
    """Divergence-preserving cutoff of ``phi`` to ``B(0, 2R)``; needs ``0 < 2R < L/2``.

    ``phi`` must be divergence-free.  If ``phi`` vanishes on the cutoff
    annulus (``f_R = 0`` on the grid) no correction is needed and
    ``phi_R = rho_R phi``.
    """
    grid = phi.grid
    if not 0.0 < 2 * R < grid.L / 2:
        raise ValueError(f"need 0 < 2R < L/2, got R={R} with L={grid.L}")
    if R < 2 * grid.dx:
        raise ValueError(f"R={R} is not resolved by the grid (dx={grid.dx})")
    rho, grad_rho = cutoff(grid, R)
    flux = np.sum(phi.values * grad_rho, axis=0)
    S = float(grid.cell_volume * np.sum(flux))
    if np.max(np.abs(flux)) <= FLUX_TOL * max(np.max(np.abs(phi.values)), 1e-300):
        zero = np.zeros_like(phi.values)
        return TruncationResult(
            field=VectorField(grid, rho * phi.values), correction=VectorField(grid, zero),
            flux=flux, quadrature_divergence=flux.copy(), R=float(R), lattice_flux=S,
        )

    inside = grid.radius < 2 * R
    xs = np.stack([x[inside] for x in grid.mesh], axis=1)
    reach = int(math.ceil(4 * R / grid.dx))
    m1 = np.arange(-reach, reach + 1)
    mesh = np.meshgrid(*([m1] * grid.n), indexing="ij")
    ys = grid.dx * np.stack([m.ravel() for m in mesh], axis=1).astype(float)
    ys = ys[np.sum(ys**2, axis=1) < (4 * R) ** 2]
    tn, tw = time_nodes(t_nodes)
    kvec, ccoef = _sparse_modes(phi)
    if kvec.shape[0] > max_modes:
        raise ValueError(
            f"phi has {kvec.shape[0]} Fourier modes (limit {max_modes}); band-limit it first"
        )
    wnorm = bump_normalisation(grid, R)
    v_pts, div_pts = _kernels.solenoidal_quadrature(
        xs, ys, tn, tw * grid.cell_volume, R, wnorm, kvec, ccoef, 0.5 * grid.L
    )
    v = np.zeros((grid.n,) + grid.shape)
    for d in range(grid.n):
        v[d][inside] = v_pts[:, d]
    resid = flux.copy()
    resid[inside] -= div_pts
    correction = VectorField(grid, v)
    return TruncationResult(
        field=VectorField(grid, rho * phi.values - v),
        correction=correction,
        flux=flux,
        quadrature_divergence=resid,
        R=float(R),
        lattice_flux=S,
    )
