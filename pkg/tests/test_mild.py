import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lorentz_ns.grid import Grid, ScalarField, TensorField, VectorField, gradient, inner_product, l2_norm, laplacian
from lorentz_ns.initial_data import make_rng, random_solenoidal, taylor_green
from lorentz_ns.mild import (
    PicardError,
    SolverConfig,
    TestFunction,
    Trajectory,
    bump_profile,
    continuity_constant,
    mild_rhs,
    nonlinear_flux,
    pressure_from_flux,
    pressure_history,
    projected_nonlinearity,
    projected_residual,
    solve_mild,
    test_battery as make_battery,
    time_weights,
    very_weak_residual,
    weak_residual,
)
from lorentz_ns.singular.heat import heat_semigroup

from conftest import TWO_PI, philox

G32 = Grid(2, 32, TWO_PI)


def tg_pressure(grid, t):
    x, y = grid.mesh
    return (np.cos(2 * x) + np.cos(2 * y)) / 4 * math.exp(-4 * t)


def shear_heat_trajectory(grid, dt, T, seed=0):
    """Exact heat flow of shear data ``(a(y), 0)``: also an exact Navier-Stokes solution with ``P = 0``."""
    rng = philox(seed)
    y = grid.mesh[1]
    modes = [(m, rng.standard_normal(), rng.uniform(0, TWO_PI)) for m in (1, 2, 3)]
    times = dt * np.arange(int(round(T / dt)) + 1)
    states = np.zeros((times.size, 2) + grid.shape)
    for i, t in enumerate(times):
        states[i, 0] = sum(c * math.exp(-m * m * t) * np.sin(m * y + ph) for m, c, ph in modes)
    return Trajectory(grid, times, states)


# ------------------------------------------------------------- types


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(dt=0.0, T=1.0)
    with pytest.raises(ValueError):
        SolverConfig(dt=0.1, T=0.05)
    with pytest.raises(ValueError):
        SolverConfig(dt=0.1, T=1.0, picard_tol=0.0)
    assert SolverConfig(dt=1e-3, T=1.0).steps == 1000


def test_trajectory_validation_and_views():
    states = np.zeros((3, 2) + G32.shape)
    with pytest.raises(ValueError):
        Trajectory(G32, [0.1, 0.2, 0.3], states)
    with pytest.raises(ValueError):
        Trajectory(G32, [0.0, 0.2, 0.1], states)
    with pytest.raises(ValueError):
        Trajectory(G32, [0.0, 0.1], states)
    tr = Trajectory(G32, [0.0, 0.1, 0.2], states)
    with pytest.raises(ValueError):
        tr.states[0, 0, 0, 0] = 1.0
    assert len(tr.subsample(2)) == 2 and tr.T == 0.2
    tg = taylor_green(G32)
    tr2 = tr.with_state(1, tg.values)
    assert np.array_equal(tr2.scaled(2.0).states[1], 2 * tg.values)
    assert np.allclose(tr2.weak_lorentz_norms(math.inf), [0, 1, 0])


# ------------------------------------------------------------- flux and pressure


def test_flux_trivial_cases():
    zero = VectorField(G32, np.zeros((2,) + G32.shape))
    assert np.all(nonlinear_flux(zero).values == 0)
    c = np.array([0.5, -2.0])
    const = VectorField(G32, c[:, None, None] * np.ones(G32.shape))
    for dealias in (True, False):
        F = nonlinear_flux(const, dealias).values
        assert np.allclose(F, np.multiply.outer(np.outer(c, c), np.ones(G32.shape)), rtol=1e-14, atol=1e-14)
    u = random_solenoidal(G32, 4, 1.0, make_rng(1))
    F = nonlinear_flux(u).values
    assert np.array_equal(F[0, 1], F[1, 0])
    assert np.all(pressure_from_flux(nonlinear_flux(zero)).values == 0)


@pytest.mark.parametrize("t", [0.0, 0.3])
def test_taylor_green_pressure(t):
    u = taylor_green(G32) * math.exp(-2 * t)
    P = pressure_from_flux(nonlinear_flux(u)).values
    want = tg_pressure(G32, t)
    assert np.max(np.abs((P - P.mean()) - (want - want.mean()))) <= 1e-8


def test_taylor_green_pressure_balances_advection():
    # independent pointwise route: (u.grad)u = -grad P for the steady Euler part of TG
    u = taylor_green(G32)
    du = gradient(u).values
    adv = np.einsum("k...,jk...->j...", u.values, du)
    gradP = gradient(ScalarField(G32, tg_pressure(G32, 0.0))).values
    assert np.max(np.abs(adv + gradP)) <= 1e-12


@given(st.integers(0, 2**32))
def test_pressure_identity(seed):
    rng = philox(seed)
    u = random_solenoidal(G32, 4, 1.0, rng)
    F = nonlinear_flux(u)
    psi = ScalarField(G32, rng.standard_normal(G32.shape))
    P = pressure_from_flux(F)
    hess = gradient(gradient(psi)).values
    lhs = inner_product(P, laplacian(psi))
    rhs = -inner_product(F, TensorField(G32, hess))
    assert abs(lhs - rhs) <= 1e-8 * (abs(lhs) + 1e-300)


def test_taylor_green_nonlinearity_annihilated():
    u = taylor_green(Grid(2, 64, TWO_PI))
    assert np.max(np.abs(projected_nonlinearity(u).values)) <= 1e-10


# ------------------------------------------------------------- mild formulation


def test_mild_rhs_trivial_cases():
    f = random_solenoidal(G32, 4, 1.0, make_rng(2))
    times = np.linspace(0, 0.5, 11)
    zeroF = np.zeros((11, 2, 2) + G32.shape)
    assert mild_rhs(f, zeroF, times, 0.0) is f
    assert np.array_equal(mild_rhs(f, zeroF, times, 0.3).values, heat_semigroup(f, times[6]).values)
    with pytest.raises(ValueError):
        mild_rhs(f, zeroF, times, 0.6)
    with pytest.raises(ValueError):
        mild_rhs(f, zeroF, times, 0.123)


def duhamel_error(dt, T=1.0):
    # F_12 = cos(s) cos(2y): the Duhamel term is 2 sin(2y) int_0^t e^{-4(t-s)} cos s ds
    g = G32
    y = g.mesh[1]
    times = dt * np.arange(int(round(T / dt)) + 1)
    F = np.zeros((times.size, 2, 2) + g.shape)
    F[:, 0, 1] = np.cos(times)[:, None, None] * np.cos(2 * y)
    f = VectorField(g, np.zeros((2,) + g.shape))
    lam, t = 4.0, T
    integral = (lam * math.cos(t) + math.sin(t) - lam * math.exp(-lam * t)) / (lam**2 + 1)
    want = np.stack([2 * integral * np.sin(2 * y), np.zeros_like(y)])
    got = mild_rhs(f, F, times, T).values
    return float(np.max(np.abs(got - want)))


def test_manufactured_duhamel_second_order():
    errs = [duhamel_error(dt) for dt in (0.04, 0.02, 0.01)]
    assert errs[-1] < 1e-4
    for a, b in zip(errs, errs[1:]):
        assert 3.6 < a / b < 4.4


def test_solver_zero_data():
    zero = VectorField(G32, np.zeros((2,) + G32.shape))
    traj = solve_mild(zero, SolverConfig(dt=0.1, T=0.5))
    assert np.all(traj.states == 0)


def test_taylor_green_solution(tg_trajectory):
    g = tg_trajectory.grid
    f = taylor_green(g)
    errs = [l2_norm(tg_trajectory.state(i) - f * math.exp(-2 * t)) for i, t in enumerate(tg_trajectory.times)]
    assert max(errs) <= 1e-6
    assert tg_trajectory.divergence_ratio() <= 1e-8


def test_solution_satisfies_discrete_mild_equation():
    # the exponential trapezoid step unrolled is the trapezoid mild formulation
    traj = solve_mild(random_solenoidal(G32, 4, 0.5, make_rng(4)), SolverConfig(dt=0.02, T=0.4))
    F = np.stack([nonlinear_flux(traj.state(i)).values for i in range(len(traj))])
    for i in (1, 7, len(traj) - 1):
        rhs = mild_rhs(traj.initial, F, traj.times, traj.times[i]).values
        assert np.max(np.abs(rhs - traj.states[i])) <= 1e-12 * np.max(np.abs(traj.states[i]))


def test_self_convergence_second_order():
    f = random_solenoidal(G32, 4, 0.1, make_rng(5))
    finals = [solve_mild(f, SolverConfig(dt=dt, T=0.4)).states[-1] for dt in (0.04, 0.02, 0.01)]
    ratio = np.linalg.norm(finals[0] - finals[1]) / np.linalg.norm(finals[1] - finals[2])
    assert 3.5 < ratio < 4.5


def test_mean_momentum_and_divergence_preserved():
    f = random_solenoidal(G32, 4, 1.0, make_rng(6))
    shifted = VectorField(G32, f.values + np.array([0.3, -0.2])[:, None, None])
    traj = solve_mild(shifted, SolverConfig(dt=0.01, T=0.3))
    means = traj.states.mean(axis=(2, 3))
    assert np.max(np.abs(means - means[0])) <= 1e-12
    assert traj.divergence_ratio() <= 1e-8


def test_picard_failure_reported():
    f = random_solenoidal(G32, 4, 5.0, make_rng(7))
    with pytest.raises(PicardError) as info:
        solve_mild(f, SolverConfig(dt=0.05, T=0.1, picard_tol=1e-15, picard_max=2))
    assert info.value.step == 1 and info.value.residual > 0


def test_continuity_constant(tg_trajectory):
    C = continuity_constant(tg_trajectory)
    # ||u(t) - f|| = (1 - e^{-2t}) ||f|| <= 2t ||f||
    assert 0 < C <= 2 * math.sqrt(5e-3)


# ------------------------------------------------------------- test functions


def test_bump_profile():
    theta, dtheta = bump_profile(np.array([0.0, 0.5, 1.0, 2.0]), 1.0)
    assert theta[0] == 1.0 and theta[2] == 0.0 and theta[3] == 0.0 and dtheta[0] == 0.0
    t = np.linspace(0, 0.99, 50)
    h = 1e-6
    num = (bump_profile(t + h, 1.0)[0] - bump_profile(t - h, 1.0)[0]) / (2 * h)
    assert np.allclose(num[1:], bump_profile(t, 1.0)[1][1:], atol=1e-6)


def test_battery_is_deterministic():
    a = make_battery(G32, 1.0, seed=3)
    b = make_battery(G32, 1.0, seed=3)
    assert len(a) == 20
    assert all(np.array_equal(x.phi.values, y.phi.values) for x, y in zip(a, b))
    assert all(0 < t.support < 1.0 for t in a)
    with pytest.raises(ValueError):
        TestFunction(a[0].phi, 0.5, solenoidal=True)
    assert a[0].solenoidal_part().solenoidal


def test_time_weights_exact_on_cubics():
    for m in (5, 6):  # even and odd panel counts
        t = np.linspace(0, 1.3, m)
        assert math.isclose(np.dot(time_weights(t, "simpson"), t**3), 1.3**4 / 4, rel_tol=1e-13)
    t = np.array([0.0, 0.4])
    assert np.array_equal(time_weights(t, "simpson"), time_weights(t, "trapezoid"))
    with pytest.raises(ValueError):
        time_weights(np.array([0, 0.1, 0.3]), "simpson")
    with pytest.raises(ValueError):
        time_weights(np.array([0, 0.1]), "midpoint")


# ------------------------------------------------------------- residuals


def test_heat_flow_residuals_vanish():
    traj = shear_heat_trajectory(G32, 1e-3, 1.0)
    P = np.zeros((len(traj),) + G32.shape)
    for test in make_battery(G32, 1.0):
        sol = test.solenoidal_part()
        for r in (weak_residual(traj, P, test), projected_residual(traj, test), very_weak_residual(traj, sol)):
            assert abs(r.value) <= 1e-8 * r.scale


def test_taylor_green_weak_residual_and_fault_injection(tg_trajectory):
    traj = tg_trajectory.subsample(10)  # dt = 1e-2
    test = make_battery(traj.grid, 1.0, count=3)[1]
    clean = weak_residual(traj, None, test)
    assert abs(clean.value) <= 1e-6 * clean.scale
    bad = traj.with_state(20, 1.01 * traj.states[20])
    dirty = weak_residual(bad, None, test)
    assert abs(dirty.value) >= 10 * abs(clean.value)


def test_residual_errors(tg_short):
    test = make_battery(tg_short.grid, 1.0, count=1)[0]
    with pytest.raises(ValueError):
        very_weak_residual(tg_short, test)
    long = TestFunction(test.phi, 0.9)
    with pytest.raises(ValueError):
        projected_residual(tg_short, long)
    assert pressure_history(tg_short).shape == (len(tg_short),) + tg_short.grid.shape
