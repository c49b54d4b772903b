"""Random test objects: smooth maps on coordinate domains and comparison configurations."""

from __future__ import annotations

import numpy as np

from .domain import PointCloudSpace
from .energy import MapState
from .targets import RegularBall, Target


def _coords(domain: PointCloudSpace) -> np.ndarray:
    c = domain.coordinates
    if c is None:
        raise ValueError("random smooth maps need a domain with coordinates")
    return c


def random_field(domain: PointCloudSpace, seed, n_out: int = 1, n_modes: int = 4,
                 frequency: float = 1.5):
    """Sum of random Fourier modes, scaled to max |f| = 1 over the domain.

    Returns ``(values, lipschitz_bound)`` with values of shape (n, n_out).
    """
    rng = np.random.default_rng(seed)
    x = _coords(domain)
    d = x.shape[1]
    omega = rng.normal(size=(n_modes, d))
    omega *= (frequency * rng.uniform(0.3, 1.0, size=(n_modes, 1))
              / np.linalg.norm(omega, axis=1, keepdims=True))
    phase = rng.uniform(0, 2 * np.pi, size=n_modes)
    amp = rng.normal(size=(n_modes, n_out))
    f = np.sin(2 * np.pi * x @ omega.T + phase) @ amp
    scale = float(np.max(np.linalg.norm(f, axis=1)))
    if scale == 0:
        return f, 0.0
    lip = float(np.sum(np.linalg.norm(amp, axis=1) * 2 * np.pi * np.linalg.norm(omega, axis=1)))
    return f / scale, lip / scale


def random_lipschitz_map(domain: PointCloudSpace, ball: RegularBall, seed, amplitude: float = 0.8,
                         n_modes: int = 4, frequency: float = 1.5):
    """Smooth random perturbation of the constant map at the ball center.

    A random tangent field of sup-norm ``amplitude * radius`` is pushed
    through the exponential map at the center (1-Lipschitz on the sphere
    inside a regular ball); anything outside the ball is contracted back.
    Returns ``(map, lipschitz_bound)``.
    """
    tgt = ball.target
    basis = tgt._tangent_basis(ball.center)
    f, lip = random_field(domain, seed, n_out=basis.shape[0], n_modes=n_modes, frequency=frequency)
    f *= amplitude * ball.radius
    vals = tgt._exp(np.broadcast_to(ball.center, (domain.n, tgt.ambient)), f @ basis)
    vals, _ = ball.project(vals)
    return MapState(domain, tgt, vals, ball), lip * amplitude * ball.radius


def random_unit_interval_map(domain: PointCloudSpace, seed, lo: float = 0.1, hi: float = 0.9,
                             **kw) -> tuple[MapState, float]:
    f, lip = random_field(domain, seed, **kw)
    mid, half = (lo + hi) / 2, (hi - lo) / 2
    return MapState.real(domain, mid + half * f[:, 0]), lip * half


def common_trace_partner(u: MapState, seed, width: float | None = None, strength: float = 1.0, **kw):
    """A second map that agrees with ``u`` bit-exactly on the exterior.

    ``v = G^{u, w}_phi`` for a random map ``w`` and a cutoff ``phi`` rising
    from 0 at the exterior to ``strength`` at distance ``width`` inside.
    """
    dom = u.domain
    w, lip_w = random_lipschitz_map(dom, u.ball, seed, **kw)
    if width is None:
        width = 0.25 * float(np.max(dom.exterior_distance))
    phi = strength * np.clip(dom.exterior_distance / width, 0.0, 1.0)
    phi[dom.exterior] = 0.0
    vals = u.target.geodesic_point(u.values, w.values, phi)
    vals[dom.exterior] = u.values[dom.exterior]
    vals, _ = u.ball.project(vals)
    vals[dom.exterior] = u.values[dom.exterior]
    return MapState(dom, u.target, vals, u.ball, u.boundary_trace), lip_w


# -- configurations for the pointwise comparison estimates ------------------

def _random_frame(tgt: Target, rng):
    """Base point g0, unit tangent e0 and a unit normal n orthogonal to both."""
    k = tgt.ambient
    if tgt.curvature == 1:
        g0 = rng.normal(size=k)
        g0 /= np.linalg.norm(g0)
    else:
        g0 = rng.normal(size=k)
    e0 = rng.normal(size=k)
    if tgt.curvature == 1:
        e0 -= (e0 @ g0) * g0
    e0 /= np.linalg.norm(e0)
    n = rng.normal(size=k)
    if tgt.curvature == 1:
        n -= (n @ g0) * g0
    n -= (n @ e0) * e0
    nn = np.linalg.norm(n)
    n = n / nn if nn > 1e-12 and (k - tgt.curvature) >= 2 else np.zeros(k)
    return g0, e0, n


def _tangent(tgt: Target, p, rng):
    w = rng.normal(size=tgt.ambient)
    if tgt.curvature == 1:
        w -= (w @ p) * p
    return w


def _base_geodesic(tgt: Target, rng, length_range):
    g0, e0, n = _random_frame(tgt, rng)
    D = rng.uniform(*length_range)
    if tgt.curvature == 1:
        g1 = np.cos(D) * g0 + np.sin(D) * e0
        e1 = -np.sin(D) * g0 + np.cos(D) * e0
    else:
        g1 = g0 + D * e0
        e1 = e0
    return g0, g1, e0, e1, n


def sample_estimate_I(tgt: Target, scale: float, rng, family: str = "degenerate",
                      length_range=(0.3, 1.5)):
    """Quadruple (g0, g1, h0, h1): a unit-order geodesic and a nearby one.

    ``family="degenerate"`` displaces both endpoints by the same normal
    offset and a symmetric stretch; along that family the quadratic part of
    the defect vanishes and the cubic term is what remains.  ``"generic"``
    uses independent random endpoint displacements.
    """
    g0, g1, e0, e1, n = _base_geodesic(tgt, rng, length_range)
    if family == "degenerate":
        c, a = rng.normal(size=2)
        h0 = tgt._exp(g0, scale * (c * n + a * e0))
        h1 = tgt._exp(g1, scale * (c * n - a * e1))
    elif family == "generic":
        h0 = tgt._exp(g0, scale * _tangent(tgt, g0, rng))
        h1 = tgt._exp(g1, scale * _tangent(tgt, g1, rng))
    else:
        raise ValueError(f"unknown family {family!r}")
    return g0, g1, h0, h1


def sample_estimate_II(tgt: Target, scale: float, rng, length_range=(0.3, 1.5)):
    """(g0, g1, h0, t, s): geodesics g0->g1 and h0->g1 with h0 near g0, |s - t| <= scale."""
    g0, g1, _, _, _ = _base_geodesic(tgt, rng, length_range)
    h0 = tgt._exp(g0, scale * _tangent(tgt, g0, rng))
    t = rng.uniform(0.0, 1.0)
    s = float(np.clip(t + scale * rng.uniform(-1.0, 1.0), 0.0, 1.0))
    return g0, g1, h0, t, s
