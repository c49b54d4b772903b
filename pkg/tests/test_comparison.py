import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ksharmonic.comparison import (DefectReport, cauchy_functional, convexity_defect, defect_scaling,
                                   estimate_I_defect, estimate_II_defect, loglog_slope, midpoint_energy_defect,
                                   modified_energy_gap, radial_energy_defect)
from ksharmonic.domain import build_grid_domain
from ksharmonic.energy import MapState, ks_values, modified_energy
from ksharmonic.sampling import common_trace_partner, random_lipschitz_map, random_unit_interval_map
from ksharmonic.targets import Euclidean, RegularBall, Sphere

S = Sphere(2)
BALL = RegularBall(S, np.array([0.0, 0.0, 1.0]), 1.2)


def rot(rng):
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    return q * np.sign(np.linalg.det(q))


@pytest.fixture(scope="module")
def grid():
    return build_grid_domain(2, 25, [0.0, 1.0], 0.25)


def pair(dom, ball, seed, **kw):
    u, _ = random_lipschitz_map(dom, ball, [seed, 0])
    v, _ = common_trace_partner(u, [seed, 1], **kw)
    return u, v


# -- pointwise estimates ---------------------------------------------------

def test_estimate_I_trivial():
    g0, g1 = np.array([1.0, 0, 0]), np.array([0, 1.0, 0])
    rep = estimate_I_defect(g0, g1, g0, g1)
    assert rep.defect == 0.0
    assert rep.positive_part == 0.0


def test_estimate_I_perimeter_guard():
    g0, g1 = np.array([1.0, 0, 0]), np.array([-1.0, 1e-3, 0])
    h0, h1 = np.array([0, 0, 1.0]), np.array([0, 0, -1.0 + 1e-6])
    with pytest.raises(ValueError):
        estimate_I_defect(g0, g1, h0, h1)


def test_estimate_I_flat_parallelogram(rng):
    E = Euclidean(3)
    g0, g1 = rng.normal(size=(2, 500, 3))
    shift = rng.normal(size=(500, 3))
    # translated segment: parallelogram, equality in the flat inequality
    rep = estimate_I_defect(g0, g1, g0 + shift, g1 + shift, target=E)
    assert np.max(np.abs(rep.defect)) <= 1e-12 * np.max(np.sum(shift ** 2, axis=1))
    h0, h1 = rng.normal(size=(2, 500, 3))
    rep = estimate_I_defect(g0, g1, h0, h1, target=E)
    assert np.max(rep.defect) <= 1e-12


@given(st.integers(0, 2 ** 32 - 1))
def test_estimate_I_symmetry_and_isometry(seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(2, 3))
    g0, g1 = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    h0 = S.point(g0 + 0.2 * rng.normal(size=3))
    h1 = S.point(g1 + 0.2 * rng.normal(size=3))
    if S.distance(g0, g1) > 2.5:
        return
    base = estimate_I_defect(g0, g1, h0, h1).defect
    R = rot(rng)
    moved = estimate_I_defect(g0 @ R.T, g1 @ R.T, h0 @ R.T, h1 @ R.T).defect
    reversed_ = estimate_I_defect(g1, g0, h1, h0).defect
    assert abs(base - moved) <= 1e-12
    assert abs(base - reversed_) <= 1e-12
    # exchanging the two geodesics only changes the cos^2 prefactor, so the
    # difference is exactly the (cubic) prefactor change times d(m_g, m_h)^2
    swapped = estimate_I_defect(h0, h1, g0, g1).defect
    D, Dh = S.distance(g0, g1), S.distance(h0, h1)
    mm2 = S.distance(S.midpoint(g0, g1), S.midpoint(h0, h1)) ** 2
    assert abs((base - swapped) - (np.cos(D / 2) ** 2 - np.cos(Dh / 2) ** 2) * mm2) <= 1e-12


def test_estimate_II_trivial(rng):
    for _ in range(20):
        g0, g1 = S.point(rng.normal(size=3)), S.point(rng.normal(size=3))
        if not 0.1 < S.distance(g0, g1) < 3.0:
            continue
        t = rng.uniform()
        assert abs(estimate_II_defect(g0, g1, g0, t, t).defect) <= 1e-14
        h0 = S.point(g0 + 0.1 * rng.normal(size=3))
        assert abs(estimate_II_defect(g0, g1, h0, 1.0, 1.0).defect) <= 1e-14


def test_estimate_II_guards():
    g0 = np.array([1.0, 0, 0])
    with pytest.raises(ValueError):
        estimate_II_defect(g0, g0, g0, 0.5, 0.5)
    with pytest.raises(ValueError):
        estimate_II_defect(g0, np.array([0, 1.0, 0]), g0, 1.5, 0.5)


def test_defect_report_validation():
    with pytest.raises(ValueError):
        DefectReport(np.zeros(1), np.zeros(1), {}, "bogus")
    with pytest.raises(ValueError):
        DefectReport(np.zeros(1), np.array([np.nan]), {}, "estimateI")


def test_loglog_slope_recovers_power():
    s = np.array([1e-1, 1e-2, 1e-3])
    assert loglog_slope(s, 4.0 * s ** 3) == pytest.approx(3.0, abs=1e-12)
    assert np.isnan(loglog_slope(s, [1.0, 0.0, 1.0]))
    assert np.isnan(loglog_slope([0.1, 0.1], [1.0, 2.0]))


@pytest.mark.parametrize("kind", ["estimateI", "estimateII"])
def test_cubic_scaling(kind):
    rep = defect_scaling(kind, samples=100, seed=3)
    assert rep.slope >= 2.8
    assert np.all(rep.max_positive <= rep.fitted_c * rep.scales ** 3 * 2.0)


def test_flat_estimate_I_scaling():
    rep = defect_scaling("estimateI", samples=100, seed=0, target=Euclidean(3))
    assert np.all(rep.max_positive <= 1e-12)


def test_scaling_thread_independent():
    a = defect_scaling("estimateII", scales=[0.1, 0.01], samples=20, seed=1, threads=1)
    b = defect_scaling("estimateII", scales=[0.1, 0.01], samples=20, seed=1, threads=2)
    assert np.array_equal(a.p95, b.p95)


# -- map-level defects -----------------------------------------------------

def test_midpoint_defect_u_equals_v(grid):
    u, _ = pair(grid, BALL, 0)
    rep = midpoint_energy_defect(u, u, 0.12)
    assert np.all(rep.per_point == 0)


def test_midpoint_defect_flat(grid):
    E = Euclidean(2)
    ball = RegularBall(E, np.zeros(2), 1.2)
    for seed in range(3):
        u, v = pair(grid, ball, seed)
        for r in (0.2, 0.1):
            assert midpoint_energy_defect(u, v, r).max_positive <= 1e-12


def test_midpoint_defect_sphere_shrinks(grid):
    u, v = pair(grid, BALL, 5)
    vals = [midpoint_energy_defect(u, v, r).max_positive for r in (0.2, 0.1)]
    assert vals[1] <= vals[0] + 1e-12


def test_radial_defect_cases(grid):
    u, _ = pair(grid, BALL, 1)
    zero = MapState.real(grid, np.zeros(grid.n))
    one = MapState.real(grid, np.ones(grid.n))
    assert np.all(radial_energy_defect(u, zero, 0.12).per_point == 0)
    assert np.all(radial_energy_defect(u, one, 0.12).per_point <= 1e-15)
    bad = MapState.real(grid, np.full(grid.n, 1.5))
    with pytest.raises(ValueError):
        radial_energy_defect(u, bad, 0.12)


def test_radial_defect_trend(grid):
    u, _ = pair(grid, BALL, 2)
    eta, _ = random_unit_interval_map(grid, 9)
    a = radial_energy_defect(u, eta, 0.2).max_positive
    b = radial_energy_defect(u, eta, 0.08).max_positive
    assert b <= a


def test_convexity_u_equals_v(grid):
    u, _ = pair(grid, BALL, 3)
    rep = convexity_defect(u, u, 0.12)
    assert rep.defect_total == 0.0
    assert rep.components["E_tangent"] == 0.0


def test_convexity_flat(grid):
    E = Euclidean(2)
    ball = RegularBall(E, np.zeros(2), 1.2)
    for seed in range(3):
        u, v = pair(grid, ball, seed)
        assert convexity_defect(u, v, 0.12).defect_total <= 1e-12


def test_convexity_component_identity(grid):
    u, v = pair(grid, BALL, 4)
    rep = convexity_defect(u, v, 0.12)
    c = rep.components
    assert c["E_m_eta"] <= c["rhs"] + max(rep.defect_total, 0.0) + 1e-15
    assert rep.defect_total == pytest.approx(c["E_m_eta"] + c["cos8_rho"] * c["E_tangent"] - c["rhs"],
                                             abs=1e-14)


def test_convexity_requires_same_trace(grid):
    u, _ = pair(grid, BALL, 5)
    w, _ = random_lipschitz_map(grid, BALL, 99)
    with pytest.raises(ValueError):
        convexity_defect(u, w, 0.12)


def test_cauchy_functional(grid):
    u, v = pair(grid, BALL, 6)
    assert cauchy_functional(u, u).functional == 0.0
    rep = cauchy_functional(u, v)
    assert rep.bound_holds
    assert rep.functional >= 0.25 * rep.l2_distance ** 2
    w, _ = random_lipschitz_map(grid, BALL, 98)
    with pytest.raises(ValueError):
        cauchy_functional(u, w)


def test_modified_gap_bound(grid):
    u, v, w = (random_lipschitz_map(grid, BALL, [7, k], frequency=3.0)[0] for k in range(3))
    alpha = np.pi - 2 * BALL.radius
    for r in (0.2, 0.1):
        gap = modified_energy_gap(u, v, w, alpha, r)
        assert np.all(gap.gap_squared >= -1e-15)
        assert np.all(gap.gap_squared <= gap.bound + 1e-12)
        full = ks_values(u, r)
        mod = modified_energy(u, v, w, alpha, r).per_point_ks
        assert np.allclose(gap.gap, full - mod, atol=1e-15)
