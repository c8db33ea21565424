"""Energy identities, the Prodi-Serrin accumulator and the weak-strong Gronwall check."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.linalg import eigh

from .grid import Field, Grid, VectorField, fft, gradient, ifft, l2_norm
from .mild import Trajectory


def cumulative_integral(times: np.ndarray, values: np.ndarray, quadrature: str = "simpson") -> np.ndarray:
    """``int_0^{t_i} g`` for every stored time; ``values`` has time on axis 0."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.size < 2:
        return np.zeros_like(values)
    if quadrature == "simpson" and times.size >= 3:
        return cumulative_simpson(values, x=times, axis=0, initial=0.0)
    if quadrature in ("simpson", "trapezoid"):
        h = np.diff(times).reshape((-1,) + (1,) * (values.ndim - 1))
        steps = 0.5 * h * (values[1:] + values[:-1])
        return np.concatenate([np.zeros_like(values[:1]), np.cumsum(steps, axis=0)])
    raise ValueError(f"unknown quadrature {quadrature!r}")


@dataclass(frozen=True, eq=False)
class EnergyReport:
    times: np.ndarray
    energy: np.ndarray  # ||u(t)||_2^2
    dissipation: np.ndarray  # 2 int_0^t ||grad u||_2^2
    defect: np.ndarray  # ||f||^2 - energy - dissipation
    initial_energy: float

    def max_relative_defect(self) -> float:
        if self.initial_energy == 0:
            return float(np.max(np.abs(self.defect)))
        return float(np.max(np.abs(self.defect)) / self.initial_energy)


def energy_report(traj: Trajectory, quadrature: str = "simpson") -> EnergyReport:
    energy = traj.l2_norms() ** 2
    dissipation = 2.0 * cumulative_integral(traj.times, traj.gradient_l2_norms() ** 2, quadrature)
    e0 = float(energy[0])
    return EnergyReport(traj.times, energy, dissipation, e0 - energy - dissipation, e0)


def energy_inequality_check(traj: Trajectory, rtol: float = 1e-8, quadrature: str = "simpson") -> tuple[np.ndarray, np.ndarray]:
    """Per time: ``||f||^2 >= ||u||^2 + 2 int ||grad u||^2 - rtol ||f||^2``; returns (ok, margin)."""
    rep = energy_report(traj, quadrature)
    margin = rep.defect + rtol * rep.initial_energy
    return margin >= 0, rep.defect


def _advect(grid: Grid, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``(a . grad) b`` with spectral derivatives; ``a``, ``b`` carry the component axis before the grid axes."""
    db = ifft(grid, np.stack([1j * xi * fft(grid, b) for xi in grid.xi], axis=-grid.n - 1))
    # db[..., j, k, x] = d_k b_j
    return np.sum(np.expand_dims(a, -grid.n - 2) * db, axis=-grid.n - 1)


def trilinear(a: VectorField, b: VectorField, c: VectorField) -> float:
    """``<(a . grad) b, c>``."""
    grid = a.grid
    if b.grid != grid or c.grid != grid:
        raise ValueError("fields live on different grids")
    return float(grid.cell_volume * np.sum(_advect(grid, a.values, b.values) * c.values))


def _check_pair(u: Trajectory, v: Trajectory):
    if u.grid != v.grid:
        raise ValueError(f"trajectories live on different grids: {u.grid} vs {v.grid}")
    if u.times.shape != v.times.shape or not np.array_equal(u.times, v.times):
        raise ValueError("trajectories need identical time grids")


def _gradient_pairings(u: Trajectory, v: Trajectory) -> np.ndarray:
    """``<grad u(t), grad v(t)>`` from the coefficients."""
    g = u.grid
    out = np.empty(len(u))
    for i in range(len(u)):
        cu, cv = fft(g, u.states[i]), fft(g, v.states[i])
        out[i] = g.cell_volume * float(np.sum(g.xi2 * (cu * np.conj(cv)).real)) / g.N**g.n
    return out


def cross_energy_defect(u: Trajectory, v: Trajectory, quadrature: str = "simpson") -> np.ndarray:
    """``||f||^2 - 2 int <grad u, grad v> - int <(u.grad)u, v> - int <u, (v.grad)v> - <u(t), v(t)>``."""
    _check_pair(u, v)
    g = u.grid
    if not np.allclose(u.states[0], v.states[0], rtol=0, atol=1e-12 * max(np.max(np.abs(u.states[0])), 1e-300)):
        raise ValueError("cross-energy identity needs the same initial data")
    pair = g.cell_volume * np.sum(u.states * v.states, axis=tuple(range(1, u.states.ndim)))
    grad = _gradient_pairings(u, v)
    conv = np.empty(len(u))
    for i in range(len(u)):
        a, b = u.states[i], v.states[i]
        conv[i] = g.cell_volume * (np.sum(_advect(g, a, a) * b) + np.sum(a * _advect(g, b, b)))
    f2 = float(g.cell_volume * np.sum(u.states[0] ** 2))
    integral = cumulative_integral(u.times, 2 * grad + conv, quadrature)
    return f2 - integral - pair


def prodi_serrin_exponent(p: float, n: int) -> float:
    if not p > n:
        raise ValueError(f"the Prodi-Serrin class needs p > n = {n}, got p={p}")
    return 2.0 if math.isinf(p) else 2 * p / (p - n)


def prodi_serrin_norm(traj: Trajectory, p: float, quadrature: str = "trapezoid") -> np.ndarray:
    """``A(t) = int_0^t ||u(s)||_{L^{p,inf}}^{2p/(p-n)} ds``; ``p = inf`` uses the sup norm squared.

    Trapezoid by default so that ``A`` is non-decreasing for any data.
    """
    e = prodi_serrin_exponent(p, traj.grid.n)
    return cumulative_integral(traj.times, traj.weak_lorentz_norms(p) ** e, quadrature)


@dataclass(frozen=True, eq=False)
class WSReport:
    times: np.ndarray
    gap: np.ndarray  # ||w(t)||_2^2
    accumulator: np.ndarray  # A(t)
    bound: np.ndarray  # ||w(0)||^2 exp(C A(t))
    ok: np.ndarray
    p: float
    C: float

    @property
    def holds(self) -> bool:
        return bool(np.all(self.ok))


def gap_series(u: Trajectory, v: Trajectory) -> np.ndarray:
    """``||u(t) - v(t)||_2^2``."""
    _check_pair(u, v)
    d = u.states - v.states
    return u.grid.cell_volume * np.sum(d * d, axis=tuple(range(1, d.ndim)))


def gronwall_bound(u: Trajectory, v: Trajectory, p: float, C: float, atol: float = 0.0) -> WSReport:
    """``||w(t)||^2`` against ``B(t) = ||w(0)||^2 exp(C A(t))`` with ``A`` built on ``u``."""
    _check_pair(u, v)
    if not C > 0:
        raise ValueError(f"Gronwall constant must be positive, got {C}")
    gap = gap_series(u, v)
    A = prodi_serrin_norm(u, p)
    B = gap[0] * np.exp(C * A)
    return WSReport(u.times, gap, A, B, gap <= B + atol, float(p), float(C))


def calibrate_constant(u: Trajectory, v: Trajectory, p: float) -> float:
    """Smallest ``C`` with ``||w(t)||^2 <= ||w(0)||^2 exp(C A(t))`` on the stored times.

    This is ``max_t log(||w(t)||^2 / ||w(0)||^2) / A(t)`` over times with ``A > 0``
    (may be negative when the gap only decays).
    """
    gap = gap_series(u, v)
    if gap[0] <= 0:
        raise ValueError("calibration needs distinct initial data")
    A = prodi_serrin_norm(u, p)
    live = (A > 0) & (gap > 0)
    if not live.any():
        raise ValueError("the accumulator never becomes positive")
    return float(np.max(np.log(gap[live] / gap[0]) / A[live]))


def holder_sobolev_ratio(u: VectorField, w: VectorField, p: float) -> float:
    """``|<u, (w.grad)w>| / (||u||_{L^{p,inf}} ||w||^{(p-n)/p} ||grad w||^{(p+n)/p})``."""
    from .lorentz import norm as lorentz_norm

    n = u.grid.n
    if not p > n:
        raise ValueError(f"need p > n = {n}, got {p}")
    if math.isinf(p):
        up, a, b = float(np.max(u.magnitude())), 1.0, 1.0
    else:
        up, a, b = lorentz_norm(u, p, math.inf), (p - n) / p, (p + n) / p
    gw = l2_norm(gradient(w))
    denom = up * l2_norm(w) ** a * gw**b
    if denom == 0:
        raise ValueError("ratio undefined for vanishing fields")
    return abs(trilinear(w, w, u)) / denom


def _solenoidal_basis(grid: Grid, band: int) -> list[np.ndarray]:
    """Real divergence-free modes ``k_perp/|k| cos(k.x)``, ``k_perp/|k| sin(k.x)`` for ``0 < |k|_inf <= band`` (2D)."""
    freq = 2 * np.pi / grid.L
    x, y = grid.mesh
    out = []
    for a in range(0, band + 1):
        for b in range(-band, band + 1):
            if a == 0 and b <= 0:
                continue
            kk = math.hypot(a, b)
            phase = freq * (a * x + b * y)
            for fn in (np.cos, np.sin):
                out.append(np.stack([-b / kk * fn(phase), a / kk * fn(phase)]))
    return out


def growth_optimal_perturbation(u: VectorField, band: int, size: float) -> tuple[VectorField, float]:
    """Divergence-free ``delta`` in the band maximising the initial growth of ``||w||^2``.

    Linearising about ``u``: ``d/dt ||w||^2 = -2 ||grad w||^2 - 2 <w, S w>`` with
    ``S`` the strain of ``u``.  Returns ``delta`` scaled to ``||delta||_2 = size``
    and the optimal rate ``(d/dt ||w||^2) / ||w||^2`` (2D only).
    """
    grid = u.grid
    if grid.n != 2:
        raise ValueError("growth-optimal perturbations are implemented for n = 2")
    basis = _solenoidal_basis(grid, band)
    du = gradient(u).values
    strain = 0.5 * (du + np.swapaxes(du, 0, 1))
    grads = [gradient(VectorField(grid, b)).values for b in basis]
    sb = [np.einsum("ij...,j...->i...", strain, b) for b in basis]
    m = len(basis)
    M = np.empty((m, m))
    G = np.empty((m, m))
    for i in range(m):
        for j in range(m):
            M[i, j] = -2 * np.sum(grads[i] * grads[j]) - 2 * np.sum(basis[i] * sb[j])
            G[i, j] = np.sum(basis[i] * basis[j])
    vals, vecs = eigh(0.5 * (M + M.T), G)
    vec = vecs[:, -1]
    vec = vec * np.sign(vec[np.argmax(np.abs(vec))])
    delta = VectorField(grid, sum(c * b for c, b in zip(vec, basis)))
    return delta * (size / l2_norm(delta)), float(vals[-1])


def relative_l2(a: Field, b: Field) -> float:
    return l2_norm(a - b) / l2_norm(b)
