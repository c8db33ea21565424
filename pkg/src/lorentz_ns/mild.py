"""Mild (Duhamel) formulation of the Navier-Stokes equations on the periodic box.

Equations: ``d_t u - Laplacian u + d_k F_jk + d_j P = 0``, ``div u = 0``,
``u(0) = f`` with ``F_jk = u_j u_k``.  Projecting out the pressure gives

    u(t) = e^{t Lap} f - int_0^t d_k e^{(t-s) Lap} Proj F(s) ds.

All spatial operators are spectral.  The solver is an exponential integrator:
each step closes the Duhamel integral over ``[t, t + dt]`` with the trapezoid
rule and resolves the implicit end point by Picard iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grid import (
    Grid,
    ScalarField,
    TensorField,
    VectorField,
    divergence,
    fft,
    gradient,
    ifft,
    laplacian,
)
from .lorentz import norm as lorentz_norm
from .singular.riesz import leray_coefficients, leray_project


class PicardError(RuntimeError):
    """Picard iteration did not reach the tolerance within the iteration cap."""

    def __init__(self, step: int, residual: float, iterations: int):
        super().__init__(
            f"Picard iteration stalled at step {step}: residual {residual:.3e} after {iterations} iterations"
        )
        self.step = step
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    T: float
    dealias: bool = True
    picard_tol: float = 1e-12
    picard_max: int = 50

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.T >= self.dt:
            raise ValueError(f"T must be at least dt, got T={self.T}, dt={self.dt}")
        if not self.picard_tol > 0:
            raise ValueError(f"picard_tol must be positive, got {self.picard_tol}")
        if self.picard_max < 1:
            raise ValueError(f"picard_max must be >= 1, got {self.picard_max}")

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Velocity samples ``u(t_i)`` on a common grid, ``t_0 = 0``.

    ``states`` has shape ``(len(times), n) + grid.shape``.  Norms are cached on
    first use; the arrays themselves are read-only.
    """

    grid: Grid
    times: np.ndarray
    states: np.ndarray
    dealias: bool = True
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        states = np.array(self.states, dtype=float)
        if times.ndim != 1 or times.size < 1 or times[0] != 0.0:
            raise ValueError("times must be a 1-d sequence starting at 0")
        if np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        expected = (times.size, self.grid.n) + self.grid.shape
        if states.shape != expected:
            raise ValueError(f"states need shape {expected}, got {states.shape}")
        times.setflags(write=False)
        states.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)

    def __len__(self) -> int:
        return self.times.size

    def state(self, i: int) -> VectorField:
        return VectorField(self.grid, self.states[i])

    @property
    def initial(self) -> VectorField:
        return self.state(0)

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def _cached(self, key, compute):
        if key not in self._cache:
            value = np.asarray(compute(), dtype=float)
            value.setflags(write=False)
            self._cache[key] = value
        return self._cache[key]

    def l2_norms(self) -> np.ndarray:
        g = self.grid
        axes = tuple(range(1, self.states.ndim))
        return self._cached("l2", lambda: np.sqrt(g.cell_volume * np.sum(self.states**2, axis=axes)))

    def gradient_l2_norms(self) -> np.ndarray:
        """``||grad u(t)||_2`` from the coefficients (Parseval)."""

        def compute():
            g = self.grid
            coef = fft(g, self.states)
            total = np.sum(g.xi2 * np.abs(coef) ** 2, axis=tuple(range(1, coef.ndim)))
            return np.sqrt(g.cell_volume * total / g.N**g.n)

        return self._cached("grad", compute)

    def weak_lorentz_norms(self, p: float) -> np.ndarray:
        """``||u(t)||_{L^{p,inf}}`` (the norm built on ``f**``); sup norm for ``p = inf``."""

        def compute():
            if math.isinf(p):
                return np.array([np.max(self.state(i).magnitude()) for i in range(len(self))])
            return np.array([lorentz_norm(self.state(i), p, math.inf) for i in range(len(self))])

        return self._cached(("lorentz", float(p)), compute)

    def subsample(self, stride: int) -> "Trajectory":
        if stride < 1:
            raise ValueError("stride must be >= 1")
        return Trajectory(self.grid, self.times[::stride], self.states[::stride], self.dealias)

    def scaled(self, factor: float) -> "Trajectory":
        return Trajectory(self.grid, self.times, factor * self.states, self.dealias)

    def with_state(self, i: int, values: np.ndarray) -> "Trajectory":
        """Copy with state ``i`` replaced (used for fault injection)."""
        states = self.states.copy()
        states[i] = values
        return Trajectory(self.grid, self.times, states, self.dealias)

    def divergence_ratio(self) -> float:
        """``max_t ||div u(t)||_2 / ||u(t)||_2``."""
        worst = 0.0
        for i in range(len(self)):
            u = self.state(i)
            size = float(np.sqrt(self.grid.cell_volume * np.sum(u.values**2)))
            if size > 0:
                d = divergence(u).values
                worst = max(worst, float(np.sqrt(self.grid.cell_volume * np.sum(d**2))) / size)
        return worst


def _flux_values(grid: Grid, u: np.ndarray, dealias: bool) -> np.ndarray:
    """``u_j u_k`` with ``u`` of shape ``(..., n) + grid.shape``; returns ``(..., n, n) + shape``."""
    n = grid.n
    if dealias:
        u = ifft(grid, grid.dealias_mask * fft(grid, u))
    F = np.expand_dims(u, u.ndim - n) * np.expand_dims(u, u.ndim - n - 1)
    if dealias:
        F = ifft(grid, grid.dealias_mask * fft(grid, F))
    return F


def nonlinear_flux(u: VectorField, dealias: bool = True) -> TensorField:
    """``F_jk = u_j u_k``; with ``dealias`` the 2/3-truncated spectra are multiplied and truncated."""
    return TensorField(u.grid, _flux_values(u.grid, u.values, dealias))


def _pressure_coefficients(grid: Grid, Fhat: np.ndarray) -> np.ndarray:
    # R_j R_k has symbol -xi_j xi_k / |xi|^2
    xi2 = np.where(grid.xi2 > 0, grid.xi2, 1.0)
    spatial = (slice(None),) * grid.n
    total = sum(grid.xi[j] * grid.xi[k] * Fhat[(Ellipsis, j, k) + spatial]
                for j in range(grid.n) for k in range(grid.n))
    return np.where(grid.xi2 > 0, -total / xi2, 0.0)


def pressure_from_flux(F: TensorField) -> ScalarField:
    """``P = R_j R_k F_jk`` with zero mean."""
    grid = F.grid
    return ScalarField(grid, ifft(grid, _pressure_coefficients(grid, fft(grid, F.values))))


def _projected_flux_divergence(grid: Grid, Fhat: np.ndarray) -> np.ndarray:
    """Coefficients of ``d_k Proj_ij F_jk`` for ``Fhat`` of shape ``(n, n) + shape``."""
    divF = sum(1j * grid.xi[k] * Fhat[:, k] for k in range(grid.n))
    return leray_coefficients(grid, divF)


def projected_nonlinearity(u: VectorField, dealias: bool = True) -> VectorField:
    """``Proj div(u (x) u)``, the term the projection removes from the momentum balance."""
    grid = u.grid
    Fhat = fft(grid, _flux_values(grid, u.values, dealias))
    return VectorField(grid, ifft(grid, _projected_flux_divergence(grid, Fhat)))


def _time_index(times: np.ndarray, t: float) -> int:
    if t < 0 or t > times[-1] * (1 + 1e-12) + 1e-300:
        raise ValueError(f"t={t} lies outside the stored history [0, {times[-1]}]")
    i = int(np.argmin(np.abs(times - t)))
    if not math.isclose(times[i], t, rel_tol=1e-12, abs_tol=1e-14):
        raise ValueError(f"t={t} is not a stored time")
    return i


def mild_rhs(f: VectorField, F_history: np.ndarray, times: np.ndarray, t: float) -> VectorField:
    """``e^{t Lap} f - int_0^t d_k e^{(t-s) Lap} Proj F(s) ds`` at a stored time ``t``.

    ``F_history[i]`` is ``F(times[i])`` (shape ``(n, n) + grid.shape``); the
    Duhamel integral uses the trapezoid rule on ``times``.
    """
    grid = f.grid
    times = np.asarray(times, dtype=float)
    F_history = np.asarray(F_history, dtype=float)
    if F_history.shape[0] != times.size:
        raise ValueError("F_history and times have different lengths")
    m = _time_index(times, t)
    if m == 0:
        return f
    t = times[m]
    out = np.exp(-t * grid.xi2) * fft(grid, f.values)
    s = times[: m + 1]
    w = time_weights(s, "trapezoid")
    for i in range(m + 1):
        Nhat = _projected_flux_divergence(grid, fft(grid, F_history[i]))
        out = out - w[i] * np.exp(-(t - s[i]) * grid.xi2) * Nhat
    return VectorField(grid, ifft(grid, out))


def _nonlinear_coefficients(grid: Grid, uhat: np.ndarray, dealias: bool) -> np.ndarray:
    u = ifft(grid, uhat)
    return _projected_flux_divergence(grid, fft(grid, _flux_values(grid, u, dealias)))


def _norm(a: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.abs(a) ** 2)))


def solve_mild(f: VectorField, config: SolverConfig, progress: Callable[[int], None] | None = None) -> Trajectory:
    """Exponential-integrator solution of the mild formulation.

    Step: ``u+ = E (u - dt/2 N(u)) - dt/2 N(u+)`` with ``E = e^{dt Lap}`` and
    ``N(u) = d_k Proj F_jk(u)``; ``u+`` by Picard iteration, then re-projected.
    """
    grid = f.grid
    steps = config.steps
    dt = config.dt
    E = np.exp(-dt * grid.xi2)
    uhat = leray_coefficients(grid, fft(grid, f.values))
    if config.dealias:
        uhat = uhat * grid.dealias_mask
    states = np.empty((steps + 1, grid.n) + grid.shape)
    states[0] = f.values
    Nn = _nonlinear_coefficients(grid, uhat, config.dealias)
    for step in range(1, steps + 1):
        base = E * (uhat - 0.5 * dt * Nn)
        guess = base - 0.5 * dt * Nn
        for it in range(1, config.picard_max + 1):
            Nnew = _nonlinear_coefficients(grid, guess, config.dealias)
            new = leray_coefficients(grid, base - 0.5 * dt * Nnew)
            diff = _norm(new - guess)
            scale = max(_norm(new), _norm(uhat))
            guess = new
            if diff <= config.picard_tol * scale:
                break
        else:
            raise PicardError(step, diff / scale if scale > 0 else diff, config.picard_max)
        uhat = guess
        Nn = _nonlinear_coefficients(grid, uhat, config.dealias)
        states[step] = ifft(grid, uhat)
        if progress is not None:
            progress(step)
    times = dt * np.arange(steps + 1)
    return Trajectory(grid, times, states, config.dealias)


def continuity_constant(traj: Trajectory, count: int = 5) -> float:
    """``max ||u(t_i) - f||_2 / (t_i^{1/2} ||f||_2)`` over the first ``count`` steps."""
    f = traj.states[0]
    scale = float(np.sqrt(np.sum(f**2) * traj.grid.cell_volume))
    if scale == 0.0:
        return 0.0
    worst = 0.0
    for i in range(1, min(count + 1, len(traj))):
        gap = float(np.sqrt(np.sum((traj.states[i] - f) ** 2) * traj.grid.cell_volume))
        worst = max(worst, gap / (math.sqrt(traj.times[i]) * scale))
    return worst


# ---------------------------------------------------------------------------
# test functions and formulation residuals


def bump_profile(t, support: float) -> tuple[np.ndarray, np.ndarray]:
    """``theta(t) = exp(1 - 1/(1 - (t/s)^2))`` on ``[0, s)``, zero after; returns theta, theta'."""
    t = np.asarray(t, dtype=float)
    r = t / support
    inside = np.abs(r) < 1
    theta = np.zeros_like(r)
    dtheta = np.zeros_like(r)
    ri = r[inside]
    den = 1.0 - ri**2
    theta[inside] = np.exp(1.0 - 1.0 / den)
    dtheta[inside] = theta[inside] * (-2.0 * ri / den**2) / support
    return theta, dtheta


@dataclass(frozen=True, eq=False)
class TestFunction:
    """Separated test function ``theta(t) phi(x)`` with a bump ``theta`` supported in ``[0, support)``."""

    __test__ = False  # keep pytest from collecting this class

    phi: VectorField
    support: float
    solenoidal: bool = False

    def __post_init__(self):
        if not self.support > 0:
            raise ValueError("temporal support must be positive")
        if self.solenoidal:
            g = self.phi.grid
            d = divergence(self.phi).values
            size = max(float(np.max(np.abs(gradient(self.phi).values))), 1e-300)
            if np.max(np.abs(d)) > 1e-10 * size:
                raise ValueError("phi is flagged solenoidal but has non-zero divergence")
            del g

    def theta(self, t):
        return bump_profile(t, self.support)[0]

    def dtheta(self, t):
        return bump_profile(t, self.support)[1]

    def solenoidal_part(self) -> "TestFunction":
        return TestFunction(leray_project(self.phi), self.support, solenoidal=True)


def test_battery(grid: Grid, T: float, seed: int = 0, count: int = 20, max_mode: int = 2) -> tuple[TestFunction, ...]:
    """Fixed list of trigonometric test functions with bump time profiles.

    Test ``m`` has ``phi_i = sum_k a_{ik} cos(k.x) + b_{ik} sin(k.x)`` over the
    wavevectors ``0 < |k|_inf <= max_mode`` (in units of ``2 pi / L``), with
    coefficients drawn from a Philox stream keyed by ``seed``, and temporal
    support ``T (0.3 + 0.65 m / (count - 1))``.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    ks = [k for k in np.ndindex(*(2 * max_mode + 1,) * grid.n)]
    ks = np.array(ks) - max_mode
    ks = ks[np.any(ks != 0, axis=1)]
    freq = 2 * np.pi / grid.L
    phases = [freq * sum(int(k[d]) * grid.mesh[d] for d in range(grid.n)) for k in ks]
    tests = []
    for m in range(count):
        a = rng.standard_normal((grid.n, len(ks))) / len(ks)
        b = rng.standard_normal((grid.n, len(ks))) / len(ks)
        vals = np.stack([
            sum(a[i, j] * np.cos(ph) + b[i, j] * np.sin(ph) for j, ph in enumerate(phases))
            for i in range(grid.n)
        ])
        support = T * (0.3 + 0.65 * m / max(count - 1, 1))
        tests.append(TestFunction(VectorField(grid, vals), support))
    return tuple(tests)


test_battery.__test__ = False


@dataclass(frozen=True)
class Residual:
    """Defect of a space-time pairing and the sum of the magnitudes of its terms."""

    value: float
    scale: float

    @property
    def relative(self) -> float:
        return abs(self.value) / self.scale if self.scale > 0 else abs(self.value)


def time_weights(times: np.ndarray, quadrature: str = "trapezoid") -> np.ndarray:
    """Weights ``w`` with ``sum w_i g(t_i) ~ int g``; Simpson needs a uniform grid."""
    times = np.asarray(times, dtype=float)
    m = times.size
    if m < 2:
        return np.zeros(m)
    h = np.diff(times)
    if quadrature == "trapezoid":
        w = np.zeros(m)
        w[:-1] += 0.5 * h
        w[1:] += 0.5 * h
        return w
    if quadrature == "simpson":
        if not np.allclose(h, h[0], rtol=1e-9):
            raise ValueError("Simpson weights need a uniform time grid")
        if m == 2:
            return time_weights(times, "trapezoid")
        return _simpson_weights(m, h[0])
    raise ValueError(f"unknown quadrature {quadrature!r}")


def _simpson_weights(m: int, h: float) -> np.ndarray:
    # composite Simpson 1/3; an odd panel count takes a 3/8 rule on the last three panels
    w = np.zeros(m)
    panels = m - 1
    simple = panels if panels % 2 == 0 else panels - 3
    for start in range(0, simple, 2):
        w[start : start + 3] += h / 3 * np.array([1.0, 4.0, 1.0])
    if simple != panels:
        w[simple:] += 3 * h / 8 * np.array([1.0, 3.0, 3.0, 1.0])
    return w


def _check_support(traj: Trajectory, test: TestFunction):
    if test.phi.grid != traj.grid:
        raise ValueError("test function and trajectory live on different grids")
    if test.support > traj.T * (1 + 1e-12):
        raise ValueError(f"test support {test.support} exceeds the trajectory horizon {traj.T}")


def _pairings(traj: Trajectory, phi: np.ndarray) -> np.ndarray:
    """``<u(t_i), phi>`` for every stored time."""
    return traj.grid.cell_volume * np.tensordot(traj.states, phi, axes=phi.ndim)


def _flux_history(traj: Trajectory) -> np.ndarray:
    key = "flux"
    if key not in traj._cache:
        chunk = 64
        F = np.concatenate([
            _flux_values(traj.grid, traj.states[i : i + chunk], traj.dealias)
            for i in range(0, len(traj), chunk)
        ])
        F.setflags(write=False)
        traj._cache[key] = F
    return traj._cache[key]


def pressure_history(traj: Trajectory) -> np.ndarray:
    """``P(t_i) = R_j R_k F_jk(t_i)`` for every stored time."""
    key = "pressure"
    if key not in traj._cache:
        grid = traj.grid
        F = _flux_history(traj)
        P = np.concatenate([
            ifft(grid, _pressure_coefficients(grid, fft(grid, F[i : i + 64])))
            for i in range(0, len(traj), 64)
        ])
        P.setflags(write=False)
        traj._cache[key] = P
    return traj._cache[key]


def _assemble(traj, test, terms, quadrature) -> Residual:
    w = time_weights(traj.times, quadrature)
    f = traj.states[0]
    phi = test.phi.values
    start = traj.grid.cell_volume * float(np.sum(f * phi)) * float(test.theta(0.0))
    value = start + sum(float(np.dot(w, g)) for g in terms)
    scale = abs(start) + sum(float(np.dot(w, np.abs(g))) for g in terms)
    return Residual(value, scale)


def weak_residual(traj: Trajectory, P: np.ndarray | None, test: TestFunction, quadrature: str = "simpson") -> Residual:
    """``<f, phi(0)> + int <u, phi' + Lap phi> + <F_jk, d_k phi_j> + <P, div phi> dt``.

    ``P`` holds the pressure at every stored time; ``None`` uses ``R_j R_k F_jk``.
    """
    _check_support(traj, test)
    grid = traj.grid
    theta, dtheta = bump_profile(traj.times, test.support)
    phi = test.phi
    P = pressure_history(traj) if P is None else np.asarray(P, dtype=float)
    u_phi = _pairings(traj, phi.values)
    u_lap = _pairings(traj, laplacian(phi).values)
    grad_phi = gradient(phi).values  # (d_k phi_j) stored at [j, k]
    F_grad = grid.cell_volume * np.tensordot(_flux_history(traj), grad_phi, axes=grad_phi.ndim)
    P_div = grid.cell_volume * np.tensordot(P, divergence(phi).values, axes=grid.n)
    terms = [dtheta * u_phi, theta * u_lap, theta * F_grad, theta * P_div]
    return _assemble(traj, test, terms, quadrature)


def projected_residual(traj: Trajectory, test: TestFunction, quadrature: str = "simpson") -> Residual:
    """``<f, phi(0)> + int <u, phi' + Lap phi> + <F_jk, Proj_ij d_k phi_i> dt``."""
    _check_support(traj, test)
    grid = traj.grid
    theta, dtheta = bump_profile(traj.times, test.support)
    phi = test.phi
    u_phi = _pairings(traj, phi.values)
    u_lap = _pairings(traj, laplacian(phi).values)
    grad_phi = gradient(phi).values
    # G[j, k] = Proj_ij d_k phi_i: project the vector (d_k phi_i)_i for each k
    G = np.stack([ifft(grid, leray_coefficients(grid, fft(grid, grad_phi[:, k]))) for k in range(grid.n)], axis=1)
    F_G = grid.cell_volume * np.tensordot(_flux_history(traj), G, axes=G.ndim)
    terms = [dtheta * u_phi, theta * u_lap, theta * F_G]
    return _assemble(traj, test, terms, quadrature)


def very_weak_residual(traj: Trajectory, test: TestFunction, quadrature: str = "simpson") -> Residual:
    """``<f, theta(0) phi> + int <u, theta' phi + theta Lap phi> + <F_jk, theta d_k phi_j> dt`` for solenoidal ``phi``."""
    _check_support(traj, test)
    if not test.solenoidal:
        raise ValueError("the very weak formulation needs a solenoidal test function")
    grid = traj.grid
    theta, dtheta = bump_profile(traj.times, test.support)
    phi = test.phi
    u_phi = _pairings(traj, phi.values)
    u_lap = _pairings(traj, laplacian(phi).values)
    grad_phi = gradient(phi).values
    F_grad = grid.cell_volume * np.tensordot(_flux_history(traj), grad_phi, axes=grad_phi.ndim)
    terms = [dtheta * u_phi, theta * u_lap, theta * F_grad]
    return _assemble(traj, test, terms, quadrature)
