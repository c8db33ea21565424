"""Decreasing rearrangements and Lorentz quasinorms/norms of grid fields.

A grid field is piecewise constant on cells, so its rearrangement ``f*`` is a
decreasing step function and its averaged rearrangement ``f**`` is, on each
step, ``C/tau + v`` with ``C`` determined by the earlier steps.  All Lorentz
quantities below are computed from that exact step structure; only the
finite-``q`` norm with a non-integer ``q`` needs quadrature (Gauss-Legendre in
``log tau``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import integrate

from . import _kernels
from .grid import Field, gradient, l2_norm

INF = math.inf


@dataclass(frozen=True)
class LorentzIndex:
    """Exponent pair ``(p, q)`` with ``p`` in (1, inf], ``q`` in [1, inf]."""

    p: float
    q: float

    def __post_init__(self):
        p, q = float(self.p), float(self.q)
        if not p > 1.0:
            raise ValueError(f"Lorentz index needs p > 1, got {p}")
        if not q >= 1.0:
            raise ValueError(f"Lorentz index needs q >= 1, got {q}")
        if p == INF and q != INF:
            raise ValueError("p = inf requires q = inf")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    @property
    def conjugate(self) -> float:
        """Hoelder conjugate ``p' = p/(p-1)``."""
        return 1.0 if self.p == INF else self.p / (self.p - 1.0)


def _is_small_integer(q: float) -> bool:
    return q == round(q) and q <= 64


def _power_increment(lo, width, e):
    """``(lo + width)^e - lo^e`` without cancellation (``lo > 0``)."""
    return lo**e * np.expm1(e * np.log1p(width / lo))


@dataclass(frozen=True, eq=False)
class StepRearrangement:
    """Decreasing step function ``f*``: ``values[k]`` on ``[T[k-1], T[k])``.

    ``values`` are strictly decreasing and positive (ties merged, zeros
    dropped), ``measures`` the lengths of the steps.  ``f* = 0`` beyond
    ``total_measure``.
    """

    values: np.ndarray
    measures: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        m = np.asarray(self.measures, dtype=float)
        if v.shape != m.shape or v.ndim != 1:
            raise ValueError("values and measures must be 1D arrays of equal length")
        if v.size and (np.any(np.diff(v) >= 0) or v[-1] <= 0 or np.any(m <= 0)):
            raise ValueError("steps must have strictly decreasing positive values and positive measures")
        for name, arr in (("values", v), ("measures", m)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @classmethod
    def from_samples(cls, samples, cell_volume: float) -> "StepRearrangement":
        """Rearrangement of ``|samples|``, each sample owning ``cell_volume``."""
        a = np.abs(np.asarray(samples, dtype=float)).ravel()
        a = a[a > 0]
        vals, counts = np.unique(a, return_counts=True)
        return cls(vals[::-1].copy(), counts[::-1] * float(cell_volume))

    @property
    def breakpoints(self) -> np.ndarray:
        """Right endpoints ``T_k`` of the steps."""
        return np.cumsum(self.measures)

    @property
    def total_measure(self) -> float:
        return float(np.sum(self.measures))

    @property
    def cumulative(self) -> np.ndarray:
        """``C_k = int_0^{T_k} f*``."""
        return np.cumsum(self.values * self.measures)

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        if np.any(tau < 0):
            raise ValueError("rearrangement is defined for tau >= 0")
        idx = np.searchsorted(self.breakpoints, tau, side="right")
        padded = np.append(self.values, 0.0)
        return padded[idx]

    def double_star(self, tau):
        """Average ``f**(tau) = (1/tau) int_0^tau f*``."""
        tau = np.asarray(tau, dtype=float)
        if np.any(tau <= 0):
            raise ValueError("f** is defined for tau > 0")
        if self.values.size == 0:
            return np.zeros_like(tau)
        T = self.breakpoints
        C = self.cumulative
        k = np.minimum(np.searchsorted(T, tau, side="right"), T.size - 1)
        T_prev = np.where(k > 0, T[k - 1], 0.0)
        C_prev = np.where(k > 0, C[k - 1], 0.0)
        inside = C_prev + self.values[k] * (tau - T_prev)
        integral = np.where(tau >= T[-1], C[-1], inside)
        return integral / tau

    def quasinorm(self, p: float, q: float) -> float:
        """``((q/p) int (tau^{1/p} f*)^q dtau/tau)^{1/q}`` evaluated exactly."""
        idx = LorentzIndex(p, q)
        p, q = idx.p, idx.q
        v, m = self.values, self.measures
        if v.size == 0:
            return 0.0
        if p == INF:
            return float(v[0])
        T = self.breakpoints
        if q == INF:
            return float(np.max(v * T ** (1.0 / p)))
        e = q / p
        incr = np.empty_like(T)
        incr[0] = T[0] ** e
        incr[1:] = _power_increment(T[:-1], m[1:], e)
        return float(np.sum(v**q * incr) ** (1.0 / q))

    def norm(self, p: float, q: float) -> float:
        """Same as :meth:`quasinorm` with ``f*`` replaced by ``f**``."""
        idx = LorentzIndex(p, q)
        p, q = idx.p, idx.q
        v, m = self.values, self.measures
        if v.size == 0:
            return 0.0
        if p == INF:
            return float(v[0])
        T = self.breakpoints
        C = self.cumulative
        beta = C[:-1] - v[1:] * T[:-1]  # f** = beta/tau + v on later steps
        if q == INF:
            return float(self._sup_double_star(p, T, C, beta, v[1:]))
        M = T[-1]
        e = q / p
        first = v[0] ** q * T[0] ** e / e
        tail = C[-1] ** q * M ** (e - q) / (q - e)
        if _is_small_integer(q):
            middle = self._segments_closed_form(beta, v[1:], T[:-1], m[1:], p, int(q))
        else:
            middle = _kernels.double_star_segments(beta, v[1:], T[:-1], T[1:], p, q)
        return float((e * (first + middle + tail)) ** (1.0 / q))

    @staticmethod
    def _segments_closed_form(beta, v, lo, width, p, q):
        # (beta/t + v)^q t^{q/p - 1} expanded binomially, integrated term by term
        total = 0.0
        for j in range(q + 1):
            e = q / p - j
            if e == 0.0:
                piece = np.log1p(width / lo)
            else:
                piece = _power_increment(lo, width, e) / e
            total += math.comb(q, j) * np.sum(beta**j * v ** (q - j) * piece)
        return total

    @staticmethod
    def _sup_double_star(p, T, C, beta, v):
        # endpoints (f**(T_k) = C_k/T_k; the tail decreases) and interior critical points
        best = float(np.max(C * T ** (1.0 / p - 1.0)))
        if beta.size:
            crit = beta * (p - 1.0) / v
            ok = (crit > T[:-1]) & (crit < T[1:])
            if ok.any():
                t = crit[ok]
                best = max(best, float(np.max(t ** (1.0 / p) * (beta[ok] / t + v[ok]))))
        return best


FieldLike = Union[Field, StepRearrangement]


def _magnitude_samples(f: Field) -> np.ndarray:
    return f.magnitude()


def distribution_function(f: Field, y: float) -> float:
    """Measure of ``{|f| > y}`` (Euclidean magnitude for vector fields)."""
    if not y > 0:
        raise ValueError(f"distribution function needs y > 0, got {y}")
    return float(f.grid.cell_volume * np.count_nonzero(_magnitude_samples(f) > y))


def rearrangement(f: Field) -> StepRearrangement:
    return StepRearrangement.from_samples(_magnitude_samples(f), f.grid.cell_volume)


def _as_rearrangement(f: FieldLike) -> StepRearrangement:
    return f if isinstance(f, StepRearrangement) else rearrangement(f)


def double_star(f: FieldLike, tau):
    return _as_rearrangement(f).double_star(tau)


def quasinorm(f: FieldLike, p: float, q: float) -> float:
    return _as_rearrangement(f).quasinorm(p, q)


def norm(f: FieldLike, p: float, q: float) -> float:
    return _as_rearrangement(f).norm(p, q)


def rearranged_product_integral(a: StepRearrangement, b: StepRearrangement) -> float:
    """``int_0^inf a*(tau) b*(tau) dtau`` for two step rearrangements."""
    if a.values.size == 0 or b.values.size == 0:
        return 0.0
    ends = np.union1d(a.breakpoints, b.breakpoints)
    ends = ends[ends <= min(a.total_measure, b.total_measure)]
    starts = np.concatenate(([0.0], ends[:-1]))
    mid = 0.5 * (starts + ends)
    return float(np.sum(a(mid) * b(mid) * (ends - starts)))


def interpolation_check(f: FieldLike, p0: float, p1: float, theta: float) -> tuple[float, float]:
    """``(||f||_{p,inf}, ||f||_{p0,inf}^{1-theta} ||f||_{p1,inf}^theta)``.

    ``1/p = (1-theta)/p0 + theta/p1``; the first entry never exceeds the second.
    """
    if not 0.0 < theta < 1.0:
        raise ValueError("theta must lie in (0, 1)")
    r = _as_rearrangement(f)
    p = 1.0 / ((1.0 - theta) / p0 + theta / p1)
    lhs = r.norm(p, INF)
    rhs = r.norm(p0, INF) ** (1.0 - theta) * r.norm(p1, INF) ** theta
    return lhs, rhs


# ---------------------------------------------------------------- Hardy


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Non-negative step function on (0, inf): ``values[k]`` on ``(edges[k], edges[k+1])``."""

    edges: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if e.ndim != 1 or v.shape != (e.size - 1,):
            raise ValueError("need len(edges) == len(values) + 1")
        if np.any(np.diff(e) <= 0) or e[0] < 0:
            raise ValueError("edges must be increasing and non-negative")
        if np.any(v < 0):
            raise ValueError("step function must be non-negative")
        # drop leading zero steps so the support starts at a positive edge
        nz = np.flatnonzero(v > 0)
        if nz.size:
            e, v = e[nz[0] : nz[-1] + 2], v[nz[0] : nz[-1] + 1]
        if v.size and e[0] <= 0:
            raise ValueError("support must stay away from 0")
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "values", v)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        idx = np.searchsorted(self.edges, s, side="right") - 1
        ok = (idx >= 0) & (idx < self.values.size)
        return np.where(ok, self.values[np.clip(idx, 0, max(self.values.size - 1, 0))], 0.0)

    @classmethod
    def sample(cls, fn, lo: float, hi: float, steps: int) -> "StepFunction":
        """Left-endpoint samples of ``fn`` on ``steps`` equal pieces of ``[lo, hi]``."""
        edges = np.linspace(lo, hi, steps + 1)
        return cls(edges, np.asarray(fn(edges[:-1]), dtype=float))


@dataclass(frozen=True)
class HardyResult:
    """Both sides of the two weighted Hardy inequalities (without the factor p)."""

    lhs_lower: float
    rhs_lower: float
    lhs_upper: float
    rhs_upper: float
    p: float

    @property
    def defects(self) -> tuple[float, float]:
        """``p*rhs - lhs`` for each inequality (non-negative when they hold)."""
        return (self.p * self.rhs_lower - self.lhs_lower, self.p * self.rhs_upper - self.lhs_upper)


def _exp_poly_integral(A: float, c: float, lam: float, ell: float, q: float) -> float:
    """``int_0^ell exp(-lam u) (A + c u)^q du`` for ``A, c >= 0``."""
    if c == 0.0:
        return A**q * -math.expm1(-lam * ell) / lam
    val, _ = integrate.quad(
        lambda u: math.exp(-lam * u) * (A + c * u) ** q, 0.0, ell, epsabs=0.0, epsrel=1e-13, limit=200
    )
    return val


def hardy_check(phi: StepFunction, p: float, q: float) -> HardyResult:
    """Evaluate both weighted Hardy inequalities for a step function ``phi``.

    Lower: ``(int [t^{-1/p} int_0^t phi ds/s]^q dt/t)^{1/q}`` versus
    ``(int [s^{-1/p} phi]^q ds/s)^{1/q}``.  Upper: the same with
    ``int_t^inf`` and weights ``t^{1/p}``, ``s^{1/p}``.  The inner integrals
    are logarithms on each step; the outer ones are integrated per step.
    """
    if not p > 0:
        raise ValueError("Hardy inequality needs p > 0")
    if not q >= 1:
        raise ValueError("Hardy inequality needs q >= 1")
    if q == INF:
        raise ValueError("Hardy check is implemented for finite q")
    a, c = phi.edges[:-1], phi.values
    b = phi.edges[1:]
    if c.size == 0:
        return HardyResult(0.0, 0.0, 0.0, 0.0, p)
    ell = np.log(b / a)
    lam = q / p
    jumps = c * ell
    G_start = np.concatenate(([0.0], np.cumsum(jumps)[:-1]))  # int_0^{a_k} phi ds/s
    H_end = np.concatenate((np.cumsum(jumps[::-1])[::-1][1:], [0.0]))  # int_{b_k}^inf phi ds/s

    lower = 0.0
    upper = 0.0
    for k in range(c.size):
        lower += a[k] ** -lam * _exp_poly_integral(G_start[k], c[k], lam, ell[k], q)
        upper += b[k] ** lam * _exp_poly_integral(H_end[k], c[k], lam, ell[k], q)
    S = b[-1]
    lower += np.sum(jumps) ** q * S**-lam / lam  # G is constant beyond the support
    upper += np.sum(jumps) ** q * a[0] ** lam / lam  # H is constant before the support
    rhs_lower = np.sum(c**q * (a**-lam - b**-lam)) / lam
    rhs_upper = np.sum(c**q * (b**lam - a**lam)) / lam
    return HardyResult(
        float(lower ** (1 / q)), float(rhs_lower ** (1 / q)),
        float(upper ** (1 / q)), float(rhs_upper ** (1 / q)), float(p),
    )


def hardy_family(seed: int = 0) -> dict[str, StepFunction]:
    """Documented step functions for the Hardy checks.

    ``indicator``: ``1_(1,2)``; ``ramp``: ``s`` on ``[0.01, 1]`` (64 steps);
    ``decay``: ``s^{-1/2}`` on ``[0.1, 10]`` (geometric edges, 48 steps);
    ``two_bumps``: ``2 * 1_(0.5,1) + 1_(3,5)``; ``random``: 32 positive
    values on geometric edges in ``[0.05, 20]`` from a Philox stream keyed
    by ``seed``.
    """
    rng = np.random.Generator(np.random.Philox(key=seed))
    geo = np.geomspace(0.1, 10.0, 49)
    rand_edges = np.geomspace(0.05, 20.0, 33)
    return {
        "indicator": StepFunction(np.array([1.0, 2.0]), np.array([1.0])),
        "ramp": StepFunction.sample(lambda s: s, 0.01, 1.0, 64),
        "decay": StepFunction(geo, geo[:-1] ** -0.5),
        "two_bumps": StepFunction(np.array([0.5, 1.0, 3.0, 5.0]), np.array([2.0, 0.0, 1.0])),
        "random": StepFunction(rand_edges, rng.uniform(0.1, 1.0, 32)),
    }


# --------------------------------------------------------- Sobolev ratio


def sobolev_ratio(u: Field, p: float) -> float:
    """``||u||_{L^{2p/(p-2),2}} / (||u||_2^{1-n/p} ||grad u||_2^{n/p})``."""
    n = u.grid.n
    if not (p > 2 and p >= n):
        raise ValueError(f"Sobolev ratio needs p > 2 and p >= n, got p={p}")
    l2 = l2_norm(u)
    if l2 == 0.0:
        raise ValueError("Sobolev ratio is undefined for u = 0")
    grad = l2_norm(gradient(u))
    r = 2.0 if p == INF else 2.0 * p / (p - 2.0)
    theta = 0.0 if p == INF else n / p
    return norm(u, r, 2.0) / (l2 ** (1.0 - theta) * grad**theta)
