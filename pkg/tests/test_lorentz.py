import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lorentz_ns.grid import Grid, ScalarField, VectorField, band_limit
from lorentz_ns.initial_data import indicator, radial_power
from lorentz_ns.lorentz import (
    INF,
    LorentzIndex,
    StepFunction,
    StepRearrangement,
    distribution_function,
    double_star,
    hardy_check,
    hardy_family,
    interpolation_check,
    norm,
    quasinorm,
    rearranged_product_integral,
    rearrangement,
    sobolev_ratio,
)

from conftest import TWO_PI, philox
from oracles import double_star_oracle, hardy_oracle, norm_oracle, star_oracle

seeds = st.integers(min_value=0, max_value=2**32)
P_VALUES = [1.5, 2.0, 3.0, 7.0]
Q_VALUES = [1.0, 1.5, 2.0, 3.0, 4.5, INF]
SMALL = Grid(2, 8, 2.0)


def random_field(grid, seed):
    return ScalarField(grid, philox(seed).standard_normal(grid.shape))


def lp_norm(f, p):
    return float((f.grid.cell_volume * np.sum(np.abs(f.values) ** p)) ** (1 / p))


# ------------------------------------------------------------- index and steps


def test_lorentz_index_admissibility():
    with pytest.raises(ValueError):
        LorentzIndex(1.0, 2.0)
    with pytest.raises(ValueError):
        LorentzIndex(2.0, 0.5)
    with pytest.raises(ValueError):
        LorentzIndex(INF, 2.0)
    assert LorentzIndex(INF, INF).conjugate == 1.0
    assert LorentzIndex(3.0, 1.0).conjugate == 1.5


def test_step_rearrangement_invariants():
    with pytest.raises(ValueError):
        StepRearrangement(np.array([1.0, 2.0]), np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        StepRearrangement(np.array([2.0, 1.0]), np.array([1.0, 0.0]))


def test_distribution_function_disc():
    g = Grid(2, 256, 4.0)
    f = indicator(g, {"kind": "ball", "radius": 1.0})
    layer = 2 * math.pi * 1.0 * g.dx * math.sqrt(2)
    assert abs(distribution_function(f, 0.5) - math.pi) <= layer
    assert distribution_function(f, 1.5) == 0.0
    with pytest.raises(ValueError):
        distribution_function(f, 0.0)


def test_distribution_function_power_profile():
    g = Grid(2, 512, 8.0)
    f = radial_power(g, -1.0, (0.05, 4.0))
    for y in (0.5, 1.0, 2.0):
        r = 1 / y
        layer = 2 * math.pi * r * g.dx * math.sqrt(2)
        assert abs(distribution_function(f, y) - math.pi / y**2) <= layer


def test_rearrangement_of_indicator_and_two_levels():
    g = Grid(2, 16, 4.0)
    x, y = g.mesh
    A = (x < 0) & (y < 0)
    B = (x >= 1) & (y >= 1)
    r = rearrangement(ScalarField(g, A.astype(float)))
    assert np.array_equal(r.values, [1.0]) and r.measures[0] == A.sum() * g.cell_volume
    r2 = rearrangement(ScalarField(g, 3.0 * A + 0.5 * B))
    assert np.array_equal(r2.values, [3.0, 0.5])
    assert np.allclose(r2.measures, [A.sum() * g.cell_volume, B.sum() * g.cell_volume], rtol=0, atol=0)


@given(seeds)
def test_rearrangement_matches_sup_definition(seed):
    f = ScalarField(SMALL, np.round(philox(seed).standard_normal(SMALL.shape), 1))
    r = rearrangement(f)
    taus = np.linspace(0, SMALL.volume * 1.1, 97)
    got = r(taus)
    want = [star_oracle(f.values, SMALL.cell_volume, t) for t in taus]
    assert np.array_equal(got, want)


def test_double_star_single_step():
    r = StepRearrangement(np.array([1.0]), np.array([0.7]))
    assert np.array_equal(r.double_star(np.array([0.1, 0.7])), [1.0, 1.0])
    assert math.isclose(float(r.double_star(2.0)), 0.35, rel_tol=1e-15)
    zero = rearrangement(ScalarField(SMALL, np.zeros(SMALL.shape)))
    assert np.all(zero.double_star(np.array([0.1, 1.0, 10.0])) == 0)
    with pytest.raises(ValueError):
        r.double_star(0.0)


@given(seeds)
def test_double_star_dominates_and_matches_oracle(seed):
    f = random_field(SMALL, seed)
    r = rearrangement(f)
    taus = np.geomspace(1e-3, 10.0, 60)
    ds = double_star(r, taus)
    assert np.all(r(taus) <= ds * (1 + 1e-15))
    want = np.array([double_star_oracle(f.values, SMALL.cell_volume, t) for t in taus])
    assert np.allclose(ds, want, rtol=1e-13, atol=0)


# ------------------------------------------------------------- norms


ADMISSIBLE = [(p, q) for p in (1.5, 2.0, 4.0) for q in (1.0, 2.5, 3.0, INF)] + [(INF, INF)]


@pytest.mark.parametrize("p,q", ADMISSIBLE)
def test_indicator_closed_form(p, q):
    g = Grid(2, 32, 4.0)
    f = indicator(g, {"kind": "cube", "side": 2.0})
    measure = float(f.values.sum() * g.cell_volume)
    expected = measure ** (0.0 if p == INF else 1 / p)
    assert math.isclose(quasinorm(f, p, q), expected, rel_tol=1e-12)


@given(seeds, st.sampled_from(P_VALUES))
def test_property_i_lpp_equals_lp(seed, p):
    f = random_field(Grid(2, 16, 3.0), seed)
    assert math.isclose(quasinorm(f, p, p), lp_norm(f, p), rel_tol=1e-10)


@given(seeds, st.sampled_from(P_VALUES))
def test_property_ii_monotone_in_q(seed, p):
    f = random_field(Grid(2, 16, 3.0), seed)
    vals = [quasinorm(f, p, q) for q in Q_VALUES]
    assert all(b <= a for a, b in zip(vals, vals[1:]))


@given(seeds, st.sampled_from(P_VALUES), st.sampled_from(Q_VALUES))
def test_property_iii_sandwich(seed, p, q):
    f = random_field(Grid(2, 16, 3.0), seed)
    star, full = quasinorm(f, p, q), norm(f, p, q)
    pp = p / (p - 1)
    assert full - star >= -1e-10 * star
    assert pp * star - full >= -1e-10 * full


@pytest.mark.parametrize("p,q", [(2.0, 1.0), (3.0, 2.0), (1.5, 2.5), (4.0, 3.7), (2.5, INF)])
def test_norm_matches_quadrature_oracle(p, q):
    f = random_field(Grid(2, 8, 2.0), 11)
    if q == INF:
        taus = np.geomspace(1e-4, 10, 20001)
        want = float(np.max(taus ** (1 / p) * double_star(f, taus)))
        assert norm(f, p, q) >= want * (1 - 1e-12)
        assert norm(f, p, q) <= want * (1 + 1e-6)
    else:
        want = norm_oracle(f.values, f.grid.cell_volume, p, q)
        assert math.isclose(norm(f, p, q), want, rel_tol=1e-9)


def test_integer_and_fractional_q_paths_agree():
    f = random_field(Grid(2, 16, 3.0), 5)
    for p in (1.5, 3.0):
        a = norm(f, p, 3.0)
        b = norm(f, p, 3.0 + 1e-9)
        assert math.isclose(a, b, rel_tol=1e-7)


def test_infinite_p():
    f = random_field(SMALL, 2)
    m = float(np.max(np.abs(f.values)))
    assert quasinorm(f, INF, INF) == m and norm(f, INF, INF) == m


def test_vector_field_uses_magnitude():
    g = Grid(2, 16, 3.0)
    rng = philox(3)
    u = VectorField(g, rng.standard_normal((2,) + g.shape))
    s = ScalarField(g, u.magnitude())
    assert quasinorm(u, 3.0, 2.0) == quasinorm(s, 3.0, 2.0)


@given(seeds)
def test_permutation_invariance(seed):
    f = random_field(Grid(2, 16, 3.0), seed)
    perm = philox(seed + 1).permutation(f.values.ravel()).reshape(f.grid.shape)
    g = ScalarField(f.grid, perm)
    for p, q in [(2.0, 1.0), (3.0, 2.5), (1.5, INF)]:
        assert quasinorm(f, p, q) == quasinorm(g, p, q)


@given(seeds)
def test_rearranged_hoelder(seed):
    grid = Grid(2, 16, 3.0)
    f, g = random_field(grid, seed), random_field(grid, seed + 7)
    lhs = grid.cell_volume * np.sum(np.abs(f.values * g.values))
    rhs = rearranged_product_integral(rearrangement(f), rearrangement(g))
    assert lhs <= rhs * (1 + 1e-14)


# ------------------------------------------------------------- interpolation and Sobolev


def test_interpolation_indicator_and_zero():
    g = Grid(2, 16, 3.0)
    f = indicator(g, {"kind": "ball", "radius": 1.0})
    lhs, rhs = interpolation_check(f, 1.5, 4.0, 0.3)
    assert np.isfinite(lhs) and np.isfinite(rhs) and lhs <= rhs * (1 + 1e-14)
    zero = ScalarField(g, np.zeros(g.shape))
    assert interpolation_check(zero, 1.5, 4.0, 0.3) == (0.0, 0.0)
    with pytest.raises(ValueError):
        interpolation_check(f, 1.5, 4.0, 1.0)


def test_interpolation_two_level_sweep():
    g = Grid(2, 16, 3.0)
    rng = philox(42)
    x = g.mesh[0]
    for _ in range(500):
        a, b = np.sort(rng.uniform(0.01, 10.0, 2))[::-1]
        cut1, cut2 = np.sort(rng.uniform(-1.5, 1.5, 2))
        f = ScalarField(g, np.where(x < cut1, a, np.where(x < cut2, b, 0.0)))
        p0, p1 = np.sort(rng.uniform(1.1, 12.0, 2))
        theta = rng.uniform(0.05, 0.95)
        lhs, rhs = interpolation_check(f, p0, p1, theta)
        assert lhs <= rhs * (1 + 1e-12)


def test_sobolev_ratio_homogeneous_and_stable():
    g = Grid(2, 32, TWO_PI)
    u = ScalarField(g, np.sin(g.mesh[0]))
    base = sobolev_ratio(u, 4.0)
    for lam in (0.1, 3.0, 100.0):
        assert math.isclose(sobolev_ratio(lam * u, 4.0), base, rel_tol=1e-12)
    fine = Grid(2, 128, TWO_PI)
    ref = sobolev_ratio(ScalarField(fine, np.sin(fine.mesh[0])), 4.0)
    assert abs(base / ref - 1) <= 0.01
    with pytest.raises(ValueError):
        sobolev_ratio(ScalarField(g, np.zeros(g.shape)), 4.0)


def test_sobolev_ratio_bounded_on_random_family():
    g = Grid(2, 32, TWO_PI)
    mask = (np.abs(g.wavenumbers)[:, None] <= 4) & (np.abs(g.wavenumbers)[None, :] <= 4)
    ratios = []
    for seed in range(100):
        f = band_limit(random_field(g, seed), mask, remove_mean=True)
        ratios.append(sobolev_ratio(f, 4.0))
    assert max(ratios) <= 10 * float(np.median(ratios))


# ------------------------------------------------------------- Hardy


def test_hardy_zero_and_errors():
    zero = StepFunction(np.array([1.0, 2.0]), np.array([0.0]))
    res = hardy_check(zero, 2.0, 1.0)
    assert (res.lhs_lower, res.rhs_lower, res.lhs_upper, res.rhs_upper) == (0.0, 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        StepFunction(np.array([1.0, 2.0]), np.array([-1.0]))
    with pytest.raises(ValueError):
        hardy_check(zero, 2.0, 0.5)


def test_hardy_indicator_closed_form():
    # phi = 1_(1,2), p = 2, q = 1: both sides in closed form, lhs = p * rhs
    res = hardy_check(StepFunction(np.array([1.0, 2.0]), np.array([1.0])), 2.0, 1.0)
    assert math.isclose(res.lhs_lower, 4 - 2 * math.sqrt(2), rel_tol=1e-13)
    assert math.isclose(res.rhs_lower, 2 - math.sqrt(2), rel_tol=1e-13)
    assert math.isclose(res.lhs_upper, 4 * (math.sqrt(2) - 1), rel_tol=1e-13)
    assert math.isclose(res.rhs_upper, 2 * (math.sqrt(2) - 1), rel_tol=1e-13)


@pytest.mark.parametrize("p,q", [(2.0, 1.0), (2.0, 2.0), (3.0, 2.5)])
def test_hardy_matches_oracle(p, q):
    phi = StepFunction(np.array([1.0, 2.0]), np.array([1.0]))
    got = hardy_check(phi, p, q)
    want = hardy_oracle(phi, p, q)
    for a, b in zip((got.lhs_lower, got.rhs_lower, got.lhs_upper, got.rhs_upper), want):
        assert math.isclose(a, b, rel_tol=1e-8)
    assert min(got.defects) >= -1e-10 * max(got.lhs_lower, got.lhs_upper)


@pytest.mark.parametrize("p,q", [(2.0, 1.0), (3.0, 2.0), (1.5, 1.0)])
def test_hardy_ramp_1024(p, q):
    phi = StepFunction.sample(lambda s: s, 1.0 / 1024, 1.0, 1023)
    res = hardy_check(phi, p, q)
    assert min(res.defects) >= -1e-10 * max(res.lhs_lower, res.lhs_upper)


@given(seeds, st.floats(0.3, 6.0))
def test_hardy_equality_at_q_one(seed, p):
    phi = hardy_family(seed)["random"]
    res = hardy_check(phi, p, 1.0)
    assert math.isclose(res.lhs_lower, p * res.rhs_lower, rel_tol=1e-12)
    assert math.isclose(res.lhs_upper, p * res.rhs_upper, rel_tol=1e-12)


@given(st.floats(0.5, 6.0), st.floats(1.0, 6.0))
def test_hardy_family_inequalities(p, q):
    for phi in hardy_family(0).values():
        res = hardy_check(phi, p, q)
        assert min(res.defects) >= -1e-10 * max(res.lhs_lower, res.lhs_upper, 1e-300)
