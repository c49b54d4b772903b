"""Model target spaces: the unit sphere (CAT(1)) and Euclidean space (CAT(0)).

Points are plain ``numpy`` arrays whose last axis holds ambient coordinates,
so every operation broadcasts over leading axes.  Both targets expose the
same small surface (distance, geodesic evaluation, membership in a ball) plus
the curvature-dependent model functions ``sn``/``cs`` that let the comparison
formulas be written once for both curvatures.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SMALL_ANGLE = 1e-8
ANTIPODAL_GAP = 1e-12
BALL_SLACK = 1e-12


def _norm(x, keepdims=False):
    # row norms along the last axis; much cheaper than np.linalg.norm on small rows
    out = np.sqrt(np.einsum("...i,...i->...", x, x))
    return out[..., None] if keepdims else out


class Target:
    """Common interface of the two model targets."""

    curvature: int = 0
    name: str = ""

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError("target dimension must be positive")
        self.dim = int(dim)

    # subclasses fill these in
    ambient: int

    def point(self, coords) -> np.ndarray:
        raise NotImplementedError

    def distance(self, p, q) -> np.ndarray:
        raise NotImplementedError

    def geodesic_point(self, p, q, t) -> np.ndarray:
        raise NotImplementedError

    def midpoint(self, p, q) -> np.ndarray:
        return self.geodesic_point(p, q, 0.5)

    def sn(self, x):
        raise NotImplementedError

    def cs(self, x):
        raise NotImplementedError

    def tn(self, x):
        return self.sn(x) / self.cs(x)

    def descriptor(self, ball: RegularBall | None = None) -> dict:
        out = {"type": self.name, "dim": self.dim}
        if ball is not None:
            out["center"] = ball.center.tolist()
            out["rho"] = float(ball.radius)
        return out

    def __eq__(self, other):
        return type(self) is type(other) and self.dim == other.dim

    def __hash__(self):
        return hash((self.name, self.dim))

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"


class Sphere(Target):
    """Unit sphere S^dim in R^(dim+1) with its intrinsic (great-circle) metric."""

    curvature = 1
    name = "sphere"

    def __init__(self, dim: int = 2):
        super().__init__(dim)
        self.ambient = self.dim + 1

    def point(self, coords) -> np.ndarray:
        p = np.asarray(coords, dtype=float)
        if p.shape[-1] != self.ambient:
            raise ValueError(f"expected {self.ambient} coordinates, got {p.shape[-1]}")
        if not np.all(np.isfinite(p)):
            raise ValueError("non-finite coordinates")
        norm = _norm(p, keepdims=True)
        if np.any(norm == 0):
            raise ValueError("zero vector is not a sphere point")
        # leave already-unit rows alone so re-validation is bit-exact
        return np.where(np.abs(norm - 1.0) <= 4e-16, p, p / norm)

    def distance(self, p, q):
        # 2*atan2(|p-q|, |p+q|) equals arccos(<p,q>) but keeps full relative
        # accuracy for nearly equal and nearly antipodal points.
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        return 2.0 * np.arctan2(_norm(p - q), _norm(p + q))

    def geodesic_point(self, p, q, t):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        theta = self.distance(p, q)
        if np.any(theta > np.pi - ANTIPODAL_GAP):
            raise ValueError("geodesic between (nearly) antipodal points is not unique")
        t = np.asarray(t, dtype=float)
        theta_b, t_b = np.broadcast_arrays(theta, t)
        small = theta_b < SMALL_ANGLE
        safe = np.where(small, 1.0, theta_b)
        sin_theta = np.sin(safe)
        a = np.where(small, 1.0 - t_b, np.sin((1.0 - t_b) * safe) / sin_theta)
        b = np.where(small, t_b, np.sin(t_b * safe) / sin_theta)
        out = a[..., None] * p + b[..., None] * q
        out /= _norm(out, keepdims=True)
        # endpoints and coincident pairs come back bit-exact
        out = np.where(((t_b == 0) | (theta_b == 0))[..., None], p, out)
        return np.where((t_b == 1)[..., None], q, out)

    def _log(self, p, q):
        """Tangent vector at ``p`` pointing to ``q`` with length d(p, q)."""
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        theta = self.distance(p, q)
        v = q - np.sum(p * q, axis=-1, keepdims=True) * p
        nv = _norm(v, keepdims=True)
        scale = np.where(nv[..., 0] > 0, theta / np.where(nv[..., 0] > 0, nv[..., 0], 1.0), 0.0)
        return v * scale[..., None]

    def _exp(self, p, v):
        p = np.asarray(p, dtype=float)
        v = np.asarray(v, dtype=float)
        nv = _norm(v, keepdims=True)
        sinc = np.where(nv > 0, np.sin(nv) / np.where(nv > 0, nv, 1.0), 1.0)
        out = np.cos(nv) * p + sinc * v
        return out / _norm(out, keepdims=True)

    def _tangent_basis(self, p) -> np.ndarray:
        """Orthonormal basis (dim, ambient) of the tangent space at ``p``."""
        p = np.asarray(p, dtype=float)
        q, _ = np.linalg.qr(np.column_stack([p, np.eye(self.ambient)]))
        basis = q[:, 1:self.ambient].T
        return basis - np.outer(basis @ p, p)

    def sn(self, x):
        return np.sin(x)

    def cs(self, x):
        return np.cos(x)


class Euclidean(Target):
    """Flat R^dim, used as the CAT(0) control and for real-valued maps."""

    curvature = 0
    name = "euclidean"

    def __init__(self, dim: int = 1):
        super().__init__(dim)
        self.ambient = self.dim

    def point(self, coords) -> np.ndarray:
        p = np.asarray(coords, dtype=float)
        if p.shape[-1] != self.ambient:
            raise ValueError(f"expected {self.ambient} coordinates, got {p.shape[-1]}")
        if not np.all(np.isfinite(p)):
            raise ValueError("non-finite coordinates")
        return p

    def distance(self, p, q):
        return _norm(np.asarray(q, dtype=float) - np.asarray(p, dtype=float))

    def geodesic_point(self, p, q, t):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        t = np.asarray(t, dtype=float)[..., None]
        out = (1.0 - t) * p + t * q
        return np.where(np.all(p == q, axis=-1, keepdims=True), p, out)

    def _log(self, p, q):
        return np.asarray(q, dtype=float) - np.asarray(p, dtype=float)

    def _exp(self, p, v):
        return np.asarray(p, dtype=float) + np.asarray(v, dtype=float)

    def _tangent_basis(self, p) -> np.ndarray:
        return np.eye(self.ambient)

    def sn(self, x):
        return np.asarray(x, dtype=float)

    def cs(self, x):
        return np.ones_like(np.asarray(x, dtype=float))


def make_target(kind: str, dim: int) -> Target:
    if kind == "sphere":
        return Sphere(dim)
    if kind == "euclidean":
        return Euclidean(dim)
    raise ValueError(f"unknown target type {kind!r}")


def sphere_point(coords) -> np.ndarray:
    """Renormalize ``coords`` onto the unit sphere of matching dimension."""
    coords = np.asarray(coords, dtype=float)
    return Sphere(coords.shape[-1] - 1).point(coords)


@dataclass(frozen=True, eq=False)
class RegularBall:
    """Closed ball of radius ``radius`` around ``center``.

    On the sphere the radius must lie in (0, pi/2); such balls are convex and
    carry unique geodesics.
    """

    target: Target
    center: np.ndarray
    radius: float

    def __post_init__(self):
        center = self.target.point(self.center)
        object.__setattr__(self, "center", center)
        radius = float(self.radius)
        if not radius > 0:
            raise ValueError("ball radius must be positive")
        if isinstance(self.target, Sphere) and not radius < np.pi / 2:
            raise ValueError("a regular ball on the sphere needs radius < pi/2")
        if not np.isfinite(radius):
            raise ValueError("ball radius must be finite")
        object.__setattr__(self, "radius", radius)

    def center_distance(self, p):
        return self.target.distance(p, self.center)

    def contains(self, p, slack: float = BALL_SLACK):
        return self.center_distance(p) <= self.radius + slack

    def project(self, p):
        """Radially pull points outside the ball back onto its boundary.

        Returns ``(points, n_moved)``.
        """
        p = np.array(p, dtype=float)
        dist = self.center_distance(p)
        outside = dist > self.radius
        if np.any(outside):
            t = 1.0 - self.radius / dist[outside]
            p[outside] = self.target.geodesic_point(p[outside], self.center, t)
        return p, int(np.count_nonzero(outside))


def eta_solve(dd, d, rho: float | None = None):
    """Solve sin((1 - eta) * dd) / sin(dd) = cos(d / 2) for eta in [0, 1].

    ``dd`` is the distance of the midpoint to the ball center and ``d`` the
    distance between the two endpoints.  Closed form on the principal arcsin
    branch; the small-``dd`` limit ``1 - cos(d/2)`` takes over below 1e-8.
    """
    dd = np.asarray(dd, dtype=float)
    d = np.asarray(d, dtype=float)
    limit = np.pi / 2 if rho is None else float(rho)
    if rho is not None and not 0 < limit < np.pi / 2:
        raise ValueError("rho must lie in (0, pi/2)")
    if np.any(dd < 0) or np.any(dd > limit) or np.any(~np.isfinite(dd)):
        raise ValueError("center distance outside [0, rho]")
    if rho is None and np.any(dd >= np.pi / 2):
        raise ValueError("center distance must be < pi/2")
    if np.any(d < 0) or np.any(d > 2 * limit) or np.any(~np.isfinite(d)):
        raise ValueError("endpoint distance outside [0, 2 rho]")
    c = np.cos(d / 2.0)
    small = dd < SMALL_ANGLE
    safe = np.where(small, 1.0, dd)
    eta = np.where(small, 1.0 - c, 1.0 - np.arcsin(c * np.sin(safe)) / safe)
    return np.where(d == 0, 0.0, np.clip(eta, 0.0, 1.0))


def corrected_midpoint(p, q, ball: RegularBall):
    """Midpoint of p, q pulled toward the ball center by the solved eta.

    Returns ``(m_eta, aux)`` with ``aux`` holding ``d``, ``dd``, ``eta`` and
    the uncorrected midpoint ``m``.
    """
    tgt = ball.target
    if not (np.all(ball.contains(p)) and np.all(ball.contains(q))):
        raise ValueError("corrected_midpoint needs both points inside the ball")
    m = tgt.midpoint(p, q)
    d = tgt.distance(p, q)
    dd = np.minimum(ball.center_distance(m), ball.radius)
    if tgt.curvature == 0:
        # flat model: sin-ratio becomes linear, so cos -> 1 forces eta = 0
        eta = np.zeros_like(d)
    else:
        eta = eta_solve(dd, np.minimum(d, 2 * ball.radius), rho=ball.radius)
    m_eta = tgt.geodesic_point(m, np.broadcast_to(ball.center, np.shape(m)), eta)
    return m_eta, {"d": d, "dd": dd, "eta": eta, "m": m}


def radial_contraction(p, ball: RegularBall, t):
    """Move ``p`` a fraction ``t`` of the way toward the ball center."""
    p = np.asarray(p, dtype=float)
    return ball.target.geodesic_point(p, np.broadcast_to(ball.center, p.shape), t)


def contraction_constant(length: float, curvature: int = 1) -> float:
    """Constant c with d(g_t, h_t) <= c * d(g_1, h_1) for geodesics from a common point.

    For curvature 1 and lengths at most ``length`` < pi we return
    ``length / sin(length)``.  Variations through geodesics issuing from the
    common point are governed by Jacobi fields vanishing at it: the radial
    part grows like ``t`` and the normal part like ``sin(t L)/sin(L)``.  The
    latter is bounded by 1 for L <= pi/2 and by 1/sin(L) beyond, and both are
    below L/sin(L).  For L > pi/2 the connecting geodesic may leave the
    L-ball, so there the constant is backed by Monte-Carlo sampling only.
    """
    length = float(length)
    if curvature == 0:
        return 1.0
    if not 0 < length < np.pi:
        raise ValueError("contraction constant needs 0 < length < pi")
    if length < 1e-8:
        return 1.0
    return length / np.sin(length)
