"""Reference problems shared by the CLI generators and the test suite."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import PointCloudSpace, build_grid_domain
from .targets import RegularBall, Sphere


@dataclass
class Benchmark:
    domain: PointCloudSpace
    ball: RegularBall
    trace: np.ndarray
    r: float
    oracle: np.ndarray | None = None  # exact minimizer values, when known


def smooth_tangent_field(coords: np.ndarray, amplitude: float) -> np.ndarray:
    """Smooth 2-vector field of sup-norm at most ``amplitude``."""
    x = coords[:, 0]
    y = coords[:, 1] if coords.shape[1] > 1 else np.zeros_like(x)
    return amplitude / np.sqrt(2) * np.column_stack([np.cos(2 * x + y), np.sin(x - 2 * y)])


def smooth_sphere_values(coords: np.ndarray, ball: RegularBall, amplitude: float = 0.9) -> np.ndarray:
    """exp at the ball center of a smooth tangent field; stays inside the ball for amplitude < 1."""
    tgt = ball.target
    basis = tgt._tangent_basis(ball.center)[:2]
    field = smooth_tangent_field(coords, amplitude * ball.radius)
    return tgt._exp(np.broadcast_to(ball.center, (coords.shape[0], tgt.ambient)), field @ basis)


def chain_endpoints(distance: float):
    """Two points of S^2 at the given distance, symmetric about the north pole."""
    a = distance / 2
    return np.array([-np.sin(a), 0.0, np.cos(a)]), np.array([np.sin(a), 0.0, np.cos(a)])


def chain_benchmark(n_interior: int = 64, distance: float = 1.6, rho: float = 1.2,
                    r_factor: float = 2.5, p=None, q=None) -> Benchmark:
    """Chain of ``n_interior`` points between two boundary points on S^2.

    The points sit at k/(n+1), k = 1..n, of the unit interval; the boundary
    points at 0 and 1 and a collar of width 2r on both sides are exterior.
    The trace follows the great circle through p and q at constant speed, so
    the minimizer is the equispaced geodesic interpolation, returned as the
    oracle.
    """
    if n_interior < 2:
        raise ValueError("need at least two interior points")
    if p is None or q is None:
        p, q = chain_endpoints(distance)
    S = Sphere(2)
    p, q = S.point(p), S.point(q)
    h = 1.0 / (n_interior + 1)
    r = r_factor * h
    dom = build_grid_domain(1, n_interior, (h, 1 - h), 2 * r)
    x = dom.coordinates[:, 0]
    center = S.midpoint(p, q)
    ball = RegularBall(S, center, rho)
    oracle = S.geodesic_point(np.broadcast_to(p, (dom.n, 3)), np.broadcast_to(q, (dom.n, 3)), x)
    if not np.all(ball.contains(oracle)):
        raise ValueError("the extended geodesic leaves the ball; use a larger rho or smaller r")
    return Benchmark(dom, ball, oracle[dom.exterior], r, oracle)


def grid_benchmark(n: int = 32, rho: float = 1.2, r_factor: float = 1.5,
                   amplitude: float = 0.9) -> Benchmark:
    """n x n interior grid on the unit square with a smooth nonconstant sphere trace."""
    S = Sphere(2)
    ball = RegularBall(S, np.array([0.0, 0.0, 1.0]), rho)
    h = 1.0 / (n - 1)
    r = r_factor * h
    dom = build_grid_domain(2, n, (0.0, 1.0), 2 * r)
    vals = smooth_sphere_values(dom.coordinates, ball, amplitude)
    return Benchmark(dom, ball, vals[dom.exterior], r)
