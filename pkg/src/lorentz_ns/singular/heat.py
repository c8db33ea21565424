"""Heat semigroup: spectral multiplier and real-space Gaussian kernel."""

from __future__ import annotations

import math

import numpy as np

from .. import _kernels
from ..grid import Field, Grid, ScalarField, fft, field_of_rank, ifft

# Contributions below this are treated as zero when deciding tails and images.
KERNEL_TOL = 1e-12


def heat_multiplier(grid: Grid, t: float) -> np.ndarray:
    if t < 0:
        raise ValueError(f"heat semigroup needs t >= 0, got {t}")
    return np.exp(-t * grid.xi2)


def heat_semigroup(f: Field, t: float) -> Field:
    """``e^{t Laplacian} f`` via the multiplier ``exp(-t |xi|^2)``; ``t = 0`` returns ``f`` itself."""
    if t < 0:
        raise ValueError(f"heat semigroup needs t >= 0, got {t}")
    if t == 0:
        return f
    grid = f.grid
    vals = ifft(grid, heat_multiplier(grid, t) * fft(grid, f.values))
    return field_of_rank(grid, vals, f.rank)


def heat_kernel(t: float, x: np.ndarray) -> np.ndarray:
    """Gaussian ``(4 pi t)^{-n/2} exp(-|x|^2/4t)``; ``x`` has the dimension on the last axis."""
    if t <= 0:
        raise ValueError("heat kernel needs t > 0")
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    return (4 * math.pi * t) ** (-n / 2) * np.exp(-np.sum(x**2, axis=-1) / (4 * t))


def box_tail_mass(grid: Grid, t: float) -> float:
    """Mass of the free-space Gaussian outside the box ``[-L/2, L/2)^n``."""
    inside = math.erf(grid.L / (4 * math.sqrt(t))) ** grid.n
    return 1.0 - inside


def heat_kernel_sample(grid: Grid, t: float, periodize: bool = True) -> ScalarField:
    """Kernel at the grid offsets (origin at the centre of the box).

    With ``periodize`` the periodic images are summed, giving the torus heat
    kernel; otherwise the free-space Gaussian is cut at the box and a
    ``ValueError`` reports the lost tail mass when it exceeds ``KERNEL_TOL``.
    """
    if t <= 0:
        raise ValueError(f"heat kernel needs t > 0, got {t}")
    aliasing = math.exp(-t * (2 * math.pi / grid.dx) ** 2)
    if aliasing > KERNEL_TOL:
        raise ValueError(f"t={t} is below grid resolution (aliasing error {aliasing:.2e})")
    if not periodize:
        tail = box_tail_mass(grid, t)
        if tail > KERNEL_TOL:
            raise ValueError(f"t={t} too large for the box: Gaussian tail mass {tail:.2e}")
        return ScalarField(grid, heat_kernel(t, np.stack(grid.mesh, axis=-1)))
    # images beyond distance (m - 1/2) L contribute below exp(-((m-1/2)L)^2/4t)
    images = int(math.ceil(0.5 + math.sqrt(4 * t * -math.log(1e-18)) / grid.L))
    if images > 64:
        raise ValueError(f"t={t} too large for the box: {images} periodic images needed")
    shifts = grid.L * np.arange(-images, images + 1)
    # the Gaussian factorises over axes, so sum images per axis
    kern1d = sum(np.exp(-((grid.coords + s) ** 2) / (4 * t)) for s in shifts)
    kern1d = kern1d / math.sqrt(4 * math.pi * t)
    vals = kern1d
    for _ in range(grid.n - 1):
        vals = np.multiply.outer(vals, kern1d)
    return ScalarField(grid, vals)


def kernel_convolve(f: Field, t: float, periodize: bool = True) -> Field:
    """Direct real-space convolution of ``f`` with the sampled heat kernel."""
    grid = f.grid
    kern = heat_kernel_sample(grid, t, periodize).values
    m1 = np.arange(grid.N) - grid.N // 2
    mesh = np.meshgrid(*([m1] * grid.n), indexing="ij")
    offsets = np.stack([m.ravel() for m in mesh], axis=1)
    weights = kern.ravel() * grid.cell_volume
    keep = weights > KERNEL_TOL * weights.max() * 1e-6
    offsets, weights = offsets[keep], weights[keep]
    vals = f.values
    if f.rank == 0:
        out = _kernels.convolve_offsets(vals, offsets, weights)
    else:
        flat = vals.reshape((-1,) + grid.shape)
        out = np.stack([_kernels.convolve_offsets(c, offsets, weights) for c in flat]).reshape(vals.shape)
    return field_of_rank(grid, out, f.rank)
