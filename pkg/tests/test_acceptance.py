"""Acceptance gate: one test per criterion, each printing a pass/fail line.

Tolerances are the stated ones; nothing is relaxed here.
"""

import time

import numpy as np
import pytest
from scipy.optimize import minimize

from ksharmonic.benchmarks import chain_benchmark, grid_benchmark
from ksharmonic.comparison import convexity_defect, defect_scaling, modified_energy_gap
from ksharmonic.domain import build_grid_domain
from ksharmonic.energy import MapState, density_estimate
from ksharmonic.sampling import common_trace_partner, random_lipschitz_map
from ksharmonic.solver import SolverConfig, coupling_matrix, geodesic_init, multistart_uniqueness, random_init, solve
from ksharmonic.targets import Euclidean, RegularBall, Sphere, eta_solve

S = Sphere(2)


# -- shared benchmark runs -------------------------------------------------

@pytest.fixture(scope="module")
def chain_run():
    bench = chain_benchmark(n_interior=64, distance=1.6, rho=1.2)
    u0 = geodesic_init(bench.domain, bench.trace, bench.ball)
    t0 = time.perf_counter()
    res = solve(u0, SolverConfig(r=bench.r, relaxation=1.9), trace=bench.trace)
    return bench, res, time.perf_counter() - t0


@pytest.fixture(scope="module")
def grid_runs():
    bench = grid_benchmark(n=32, rho=1.2)
    cfg = SolverConfig(r=bench.r, relaxation=1.8)
    rep = multistart_uniqueness(bench.domain, bench.trace, bench.ball, cfg, n_starts=10,
                                perturbation=bench.ball.radius)
    return bench, rep


@pytest.fixture(scope="module")
def flat_run():
    dom = build_grid_domain(2, 24, [0.0, 1.0], 0.15)
    E = Euclidean(2)
    ball = RegularBall(E, np.zeros(2), 1.0)
    x = dom.coordinates[dom.exterior]
    trace = 0.5 * np.column_stack([np.sin(3 * x[:, 0] + x[:, 1]), np.cos(2 * x[:, 1])])
    u0 = random_init(dom, trace, ball, 0, 0.8)
    res = solve(u0, SolverConfig(r=1.5 / 23, relaxation=1.8), trace=trace)
    return dom, trace, res


# -- 1: c_d consistency ----------------------------------------------------

def ball_second_moment(d, n=2_000_000, seed=0):
    """Monte-Carlo mean of z_1^2 over the unit d-ball (continuum ball average)."""
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(n, d))
    z *= (rng.uniform(size=(n, 1)) ** (1.0 / d)) / np.linalg.norm(z, axis=1, keepdims=True)
    return float(np.mean(z[:, 0] ** 2))


def test_criterion_1_cd_consistency(criterion):
    t0 = time.perf_counter()
    dom = build_grid_domain(2, 200, [0.0, 1.0], 0.1)
    a = np.array([1.0, 0.5])
    u = MapState.real(dom, dom.coordinates @ a)
    rs = [0.05, 0.035, 0.025]
    dens = density_estimate(u, rs)
    bulk = dom.bulk_mask(2 * max(rs)) & np.isfinite(dens.estimate)
    est = float(np.median(dens.estimate[bulk]))
    ref = np.linalg.norm(a) * np.sqrt(ball_second_moment(2))
    elapsed = time.perf_counter() - t0
    rel = abs(est / ref - 1)
    criterion(1, "c_d consistency", rel <= 0.02 and elapsed <= 60,
              f"median {est:.6f} vs oracle {ref:.6f} (rel err {rel:.4f}, tol 0.02), {elapsed:.1f}s")


# -- 2: 1D geodesic Dirichlet problem --------------------------------------

def dense_chain_minimizer(bench):
    """Minimize the discrete chain energy directly with BFGS in ambient coordinates."""
    dom = bench.domain
    W = coupling_matrix(dom, bench.r).toarray()
    ii = dom.interior_ids
    fixed = np.array(bench.oracle)
    fixed[ii] = bench.ball.center

    def unpack(y):
        vals = fixed.copy()
        yy = y.reshape(-1, 3)
        vals[ii] = yy / np.linalg.norm(yy, axis=1, keepdims=True)
        return vals, yy

    def energy_and_grad(y):
        p, yy = unpack(y)
        c = np.clip(p @ p.T, -1.0, 1.0)
        theta = np.arccos(c)
        e = 0.25 * np.sum(W * theta ** 2) * 2
        s = np.sqrt(np.maximum(1 - c * c, 1e-300))
        coef = np.where(theta > 0, -2 * W * theta / s, 0.0)
        g_p = coef @ p  # d E / d p for every row
        g = g_p[ii]
        norm = np.linalg.norm(yy, axis=1, keepdims=True)
        pi = yy / norm
        g = (g - np.sum(g * pi, axis=1, keepdims=True) * pi) / norm
        return 0.5 * e, g.ravel()

    y0 = np.tile(bench.ball.center, (ii.size, 1)).ravel() + 1e-3
    res = minimize(energy_and_grad, y0, jac=True, method="BFGS", options={"gtol": 1e-14, "maxiter": 20000})
    return unpack(res.x)[0]


def test_criterion_2_chain(criterion, chain_run):
    bench, res, elapsed = chain_run
    dense = dense_chain_minimizer(bench)
    ii = bench.domain.interior_ids
    oracle_gap = float(np.max(S.distance(dense[ii], bench.oracle[ii])))
    err = float(np.max(S.distance(res.map.values, bench.oracle)))
    ok = res.converged and err <= 1e-6 and oracle_gap <= 1e-6 and elapsed <= 10
    criterion(2, "1D geodesic Dirichlet problem", ok,
              f"max dist to slerp {err:.2e} (dense minimizer vs slerp {oracle_gap:.2e}), "
              f"{res.sweeps_used} sweeps, {elapsed:.2f}s")


# -- 3: uniqueness ---------------------------------------------------------

def test_criterion_3_uniqueness(criterion, grid_runs):
    bench, rep = grid_runs
    ok = (rep.max_l2 <= 1e-5 and rep.max_cauchy <= 1e-9 and rep.closing_bound_holds)
    criterion(3, "uniqueness from 10 starts", ok,
              f"max L2 {rep.max_l2:.2e}, max cauchy {rep.max_cauchy:.2e}, "
              f"closing bound {rep.closing_bound_holds}, unconverged {rep.unconverged}")


# -- 4: cubic defect scaling -----------------------------------------------

def test_criterion_4_cubic_scaling(criterion):
    t0 = time.perf_counter()
    r1 = defect_scaling("estimateI", samples=100, seed=0)
    r2 = defect_scaling("estimateII", samples=100, seed=0)
    flat = defect_scaling("estimateI", samples=100, seed=0, target=Euclidean(3))
    elapsed = time.perf_counter() - t0
    flat_max = float(flat.max_positive.max())
    ok = r1.slope >= 2.8 and r2.slope >= 2.8 and flat_max <= 1e-12 and elapsed <= 30
    criterion(4, "estimate I & II cubic scaling", ok,
              f"slopes {r1.slope:.3f} / {r2.slope:.3f}, flat max positive {flat_max:.1e}, {elapsed:.1f}s")


# -- 5: convexity surrogate ------------------------------------------------

def test_criterion_5_convexity(criterion):
    h = 1.0 / 63
    r_values = (0.2, 0.1, 0.05)
    dom = build_grid_domain(2, 64, [0.0, 1.0], max(r_values) + h)
    ball = RegularBall(S, np.array([0.0, 0.0, 1.0]), 1.2)
    pos, rhs = [], []
    for k in range(20):
        u, _ = random_lipschitz_map(dom, ball, [5, k, 0])
        v, _ = common_trace_partner(u, [5, k, 1])
        reps = [convexity_defect(u, v, r) for r in r_values]
        pos.append([max(c.defect_total, 0.0) for c in reps])
        rhs.append(reps[-1].components["rhs"])
    pos, rhs = np.array(pos), np.array(rhs)
    monotone = bool(np.all(np.diff(pos, axis=1) <= 0))
    final_ok = bool(np.all(pos[:, -1] <= 0.1 * rhs))
    flat_ball = RegularBall(Euclidean(2), np.zeros(2), 1.2)
    flat = []
    for k in range(5):
        u, _ = random_lipschitz_map(dom, flat_ball, [6, k, 0])
        v, _ = common_trace_partner(u, [6, k, 1])
        flat.append(max(max(convexity_defect(u, v, r).defect_total for r in r_values), 0.0))
    flat_max = max(flat)
    criterion(5, "convexity surrogate", monotone and final_ok and flat_max <= 1e-12,
              f"max positive part {pos.max():.2e} (final vs 10% rhs: {final_ok}), "
              f"nonincreasing {monotone}, flat control {flat_max:.1e}")


# -- 6: modified energy convergence ----------------------------------------

def test_criterion_6_modified_energy(criterion):
    rho = 1.2
    r_values = (0.2, 0.1, 0.05)
    h = 1.0 / 63
    dom = build_grid_domain(2, 64, [0.0, 1.0], max(r_values) + h)
    ball = RegularBall(S, np.array([0.0, 0.0, 1.0]), rho)
    u, v, w = (random_lipschitz_map(dom, ball, [0, k], frequency=3.0)[0] for k in range(3))
    alpha = np.pi - 2 * rho
    bulk = dom.bulk_mask(2 * max(r_values))
    gaps, dominated = [], True
    for r in r_values:
        g = modified_energy_gap(u, v, w, alpha, r)
        gaps.append(float(np.max(np.abs(g.gap[bulk]))))
        inside = dom.ball_graph(r).inside
        dominated &= bool(np.all(g.gap_squared[inside] <= g.bound[inside] + 1e-12))
        dominated &= bool(np.all(np.abs(g.gap[inside]) <= np.sqrt(g.bound[inside]) + 1e-12))
    monotone = bool(np.all(np.diff(gaps) <= 0))
    criterion(6, "modified-energy convergence", monotone and dominated and gaps[0] > 0,
              f"max bulk gaps {[f'{x:.3e}' for x in gaps]}, bound dominates {dominated}")


# -- 7: solver monotonicity and feasibility --------------------------------

def _check_run(res, trace, ball):
    e = np.array([res.initial_energy] + res.energy_trace)
    slack = 1e-12 + np.array(res.updates) * SolverConfig(r=1.0).barycenter_tol ** 2
    mono = bool(np.all(np.diff(e) <= slack))
    proj = sum(res.projections[1:]) == 0
    exact = np.array_equal(res.map.values[res.map.domain.exterior], trace)
    feasible = ball is None or bool(np.all(ball.contains(res.map.values)))
    return mono and proj and exact and feasible


def test_criterion_7_solver_invariants(criterion, chain_run, grid_runs, flat_run):
    bench, res, _ = chain_run
    checks = {"chain": _check_run(res, bench.trace, bench.ball)}
    gbench, rep = grid_runs
    checks["grid"] = all(_check_run(r, gbench.trace, gbench.ball) for r in rep.results)
    dom, trace, fres = flat_run
    checks["flat"] = _check_run(fres, trace, None)
    criterion(7, "solver monotonicity & feasibility", all(checks.values()), str(checks))


# -- 8: eta_solve ----------------------------------------------------------

def bisect_eta(dd, d, iters=200):
    lo, hi = 0.0, 1.0
    target = np.cos(d / 2) * np.sin(dd)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.sin((1 - mid) * dd) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_criterion_8_eta(criterion):
    rho = 1.2
    dd, d = np.meshgrid(np.linspace(0, rho, 100), np.linspace(0, 2 * rho, 100))
    eta = eta_solve(dd, d, rho=rho)
    resid = float(np.max(np.abs(np.sin((1 - eta) * dd) - np.cos(d / 2) * np.sin(dd))))
    rng = np.random.default_rng(8)
    dd_r = rng.uniform(1e-6, rho, 1000)
    d_r = rng.uniform(0, 2 * rho, 1000)
    got = eta_solve(dd_r, d_r, rho=rho)
    ref = np.array([bisect_eta(a, b) for a, b in zip(dd_r, d_r)])
    agree = float(np.max(np.abs(got - ref)))
    criterion(8, "eta_solve correctness", resid <= 1e-10 and agree <= 1e-9,
              f"max residual {resid:.1e}, max bisection gap {agree:.1e}")
