"""Korevaar-Schoen approximate energies of maps on a :class:`PointCloudSpace`.

For a map ``u`` and scale ``r`` the approximate energy at ``x`` is

    ks_r[u](x)^2 = (1 / m(B_r(x))) * sum_{y in B_r(x)} m(y) d_Y(u(x), u(y))^2 / r^2

when the ball lies inside the interior region, and 0 otherwise.  The
``dirichlet=True`` variant drops the case split and lets balls reach into the
exterior, where the map is frozen to its boundary trace; that is the energy
the Dirichlet solver minimizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .domain import PointCloudSpace
from .targets import Euclidean, RegularBall, Target


@dataclass(frozen=True, eq=False)
class MapState:
    """A map from the points of ``domain`` into ``target``.

    ``values`` has one row per point.  The exterior rows form the boundary
    trace and are frozen: :meth:`with_values` refuses any change to them.
    ``ball`` constrains every value; it is ``None`` for unconstrained real
    maps.
    """

    domain: PointCloudSpace
    target: Target
    values: np.ndarray
    ball: RegularBall | None = None
    boundary_trace: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        vals = self.target.point(np.array(self.values, dtype=float))
        if vals.ndim != 2 or vals.shape[0] != self.domain.n:
            raise ValueError("need one target point per domain point")
        ext = self.domain.exterior
        trace = vals[ext].copy() if self.boundary_trace is None else np.array(self.boundary_trace, dtype=float)
        if trace.shape != vals[ext].shape:
            raise ValueError("boundary trace has the wrong shape")
        if not np.array_equal(vals[ext], trace):
            raise ValueError("exterior values differ from the boundary trace")
        if self.ball is not None:
            if self.ball.target != self.target:
                raise ValueError("ball lives in a different target")
            if not np.all(self.ball.contains(vals)):
                raise ValueError("map leaves the regular ball")
        vals.setflags(write=False)
        trace.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "boundary_trace", trace)

    @classmethod
    def real(cls, domain: PointCloudSpace, values) -> MapState:
        """Real-valued map (1D Euclidean target, no ball constraint)."""
        vals = np.asarray(values, dtype=float).reshape(domain.n, 1)
        return cls(domain, Euclidean(1), vals)

    @classmethod
    def from_trace(cls, domain, target, ball, trace, interior_values) -> MapState:
        vals = np.empty((domain.n, target.ambient))
        vals[domain.exterior] = trace
        vals[domain.interior] = interior_values
        return cls(domain, target, vals, ball)

    @property
    def scalar(self) -> np.ndarray:
        if not (isinstance(self.target, Euclidean) and self.target.dim == 1):
            raise ValueError("not a real-valued map")
        return self.values[:, 0]

    def with_values(self, values) -> MapState:
        return MapState(self.domain, self.target, values, self.ball, self.boundary_trace)

    def same_class(self, other: MapState) -> bool:
        return (self.domain is other.domain and self.target == other.target
                and np.array_equal(self.boundary_trace, other.boundary_trace))


@dataclass
class EnergyReport:
    r: float
    per_point_ks: np.ndarray
    total: float
    excluded_mass_fraction: np.ndarray


@dataclass
class ExclusionSet:
    x: int
    alpha: float
    excluded: np.ndarray


@dataclass
class DensityEstimate:
    estimate: np.ndarray
    residual: np.ndarray
    r_values: np.ndarray
    ks: np.ndarray  # (n_scales, n_points)


@dataclass
class ConsistencyCheck:
    c_d_estimate: float
    reference: float
    dimension: int
    n_points: int
    ratios: np.ndarray


def _check_shared(*maps: MapState):
    dom = maps[0].domain
    for m in maps[1:]:
        if m.domain is not dom:
            raise ValueError("maps live on different domains")


def _active_rows(domain: PointCloudSpace, r: float, dirichlet: bool) -> np.ndarray:
    g = domain.ball_graph(r)
    return np.arange(domain.n) if dirichlet else np.nonzero(g.inside)[0]


def _ks_squared(u: MapState, r: float, exclude=None, dirichlet: bool = False):
    """Per-point ks^2 and excluded-mass fraction (zeros off the active set)."""
    dom = u.domain
    g = dom.ball_graph(r)
    ks2 = np.zeros(dom.n)
    frac = np.zeros(dom.n)
    rows = _active_rows(dom, r, dirichlet)
    w = dom.weights
    for chunk, centers, members in g.row_chunks(rows):
        d2 = u.target.distance(u.values[centers], u.values[members]) ** 2
        mw = w[members]
        if exclude is not None:
            v, ww, alpha = exclude
            out = ((v.target.distance(v.values[centers], v.values[members]) >= alpha)
                   | (ww.target.distance(ww.values[centers], ww.values[members]) >= alpha))
            starts = np.concatenate([[0], np.cumsum(g.counts[chunk])[:-1]])
            frac[chunk] = np.add.reduceat(np.where(out, mw, 0.0), starts) / g.mass[chunk]
            mw = np.where(out, 0.0, mw)
        starts = np.concatenate([[0], np.cumsum(g.counts[chunk])[:-1]])
        ks2[chunk] = np.add.reduceat(mw * d2, starts) / (g.mass[chunk] * r * r)
    return ks2, frac


def ks_squared(u: MapState, r: float, dirichlet: bool = False, exclude=None) -> np.ndarray:
    """ks_r[u]^2 at every point, without the round trip through sqrt.

    ``exclude=(v, w, alpha)`` drops the exclusion sets as in
    :func:`modified_energy`.
    """
    if not r > 0:
        raise ValueError("r must be positive")
    return _ks_squared(u, r, exclude=exclude, dirichlet=dirichlet)[0]


def ks_values(u: MapState, r: float, dirichlet: bool = False) -> np.ndarray:
    """ks_r[u] at every point."""
    if not r > 0:
        raise ValueError("r must be positive")
    return np.sqrt(_ks_squared(u, r, dirichlet=dirichlet)[0])


def ks_at(u: MapState, r: float, x: int) -> float:
    if not r > 0:
        raise ValueError("r must be positive")
    dom = u.domain
    if not dom.ball_inside_interior(x, r):
        return 0.0
    ball = dom.ball(x, r)
    d2 = u.target.distance(u.values[x], u.values[ball.members]) ** 2
    return math.sqrt(math.fsum(dom.weights[ball.members] * d2) / (ball.mass * r * r))


def weighted_total(domain: PointCloudSpace, per_point, mask=None) -> float:
    vals = domain.weights * np.asarray(per_point)
    if mask is not None:
        vals = vals[mask]
    return math.fsum(vals)


def total_energy(u: MapState, r: float) -> EnergyReport:
    """Sum over interior points of weight * ks_r^2."""
    if not r > 0:
        raise ValueError("r must be positive")
    ks2, frac = _ks_squared(u, r)
    total = weighted_total(u.domain, ks2, u.domain.interior)
    return EnergyReport(float(r), np.sqrt(ks2), total, frac)


def dirichlet_energy(u: MapState, r: float) -> float:
    """Energy of the map extended by its frozen trace, summed over all points."""
    if not r > 0:
        raise ValueError("r must be positive")
    ks2, _ = _ks_squared(u, r, dirichlet=True)
    return weighted_total(u.domain, ks2)


def exclusion_set(v: MapState, w: MapState, alpha: float, x: int, r: float | None = None) -> ExclusionSet:
    """Points y with d(v(x), v(y)) >= alpha or d(w(x), w(y)) >= alpha.

    With ``r`` given the search is restricted to B_r(x) and interior points;
    otherwise every interior point is tested.
    """
    _check_shared(v, w)
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    dom = v.domain
    cand = dom.interior_ids if r is None else dom.ball(x, r).members
    cand = cand[dom.interior[cand]]
    far = ((v.target.distance(v.values[x], v.values[cand]) >= alpha)
           | (w.target.distance(w.values[x], w.values[cand]) >= alpha))
    return ExclusionSet(int(x), float(alpha), cand[far])


def modified_energy(u: MapState, v: MapState, w: MapState, alpha: float, r: float) -> EnergyReport:
    """ks with the exclusion sets of (v, w, alpha) removed from each ball.

    The normalization keeps the full ball mass.
    """
    _check_shared(u, v, w)
    if not (r > 0 and alpha > 0):
        raise ValueError("r and alpha must be positive")
    ks2, frac = _ks_squared(u, r, exclude=(v, w, alpha))
    total = weighted_total(u.domain, ks2, u.domain.interior)
    return EnergyReport(float(r), np.sqrt(ks2), total, frac)


def ks_modified_at(u: MapState, v: MapState, w: MapState, alpha: float, r: float, x: int) -> float:
    _check_shared(u, v, w)
    if not (r > 0 and alpha > 0):
        raise ValueError("r and alpha must be positive")
    dom = u.domain
    if not dom.ball_inside_interior(x, r):
        return 0.0
    ball = dom.ball(x, r)
    excluded = exclusion_set(v, w, alpha, x, r).excluded
    keep = ball.members[~np.isin(ball.members, excluded)]
    d2 = u.target.distance(u.values[x], u.values[keep]) ** 2
    return math.sqrt(math.fsum(dom.weights[keep] * d2) / (ball.mass * r * r))


def distance_map(u: MapState, v: MapState) -> MapState:
    """Pointwise d_Y(u, v) as a real-valued map."""
    _check_shared(u, v)
    if u.target != v.target:
        raise ValueError("maps have different targets")
    return MapState.real(u.domain, u.target.distance(u.values, v.values))


def density_estimate(u: MapState, r_values) -> DensityEstimate:
    """Extrapolate ks_r linearly in r to r = 0, point by point.

    Points whose ball at the largest scale is not inside the interior get
    NaN.  ``residual`` is the RMS misfit of the linear fit.
    """
    rs = np.asarray(r_values, dtype=float)
    if rs.size < 2:
        raise ValueError("need at least two scales")
    if np.any(rs <= 0):
        raise ValueError("scales must be positive")
    dom = u.domain
    ks = np.vstack([ks_values(u, r) for r in rs])
    usable = dom.ball_graph(rs.max()).inside.copy()
    for r in rs:
        usable &= dom.ball_graph(r).inside
    design = np.column_stack([np.ones_like(rs), rs])
    coef, *_ = np.linalg.lstsq(design, ks[:, usable], rcond=None)
    fitted = design @ coef
    est = np.full(dom.n, np.nan)
    res = np.full(dom.n, np.nan)
    est[usable] = coef[0]
    res[usable] = np.sqrt(np.mean((ks[:, usable] - fitted) ** 2, axis=0))
    return DensityEstimate(est, res, rs, ks)


def finite_difference_gradient_norm(u: MapState) -> np.ndarray:
    """|Du| by central differences on a grid domain (NaN on the lattice rim)."""
    lat = u.domain.lattice
    if lat is None:
        raise ValueError("finite differences need a grid domain")
    shape, spacing, _ = lat
    f = u.scalar.reshape(shape)
    sq = np.zeros(shape)
    for axis, h in enumerate(spacing):
        g = np.full(shape, np.nan)
        lo = [slice(None)] * len(shape)
        hi = [slice(None)] * len(shape)
        mid = [slice(None)] * len(shape)
        lo[axis], hi[axis], mid[axis] = slice(None, -2), slice(2, None), slice(1, -1)
        g[tuple(mid)] = (f[tuple(hi)] - f[tuple(lo)]) / (2 * h)
        sq += g * g
    return np.sqrt(sq).ravel()


def consistency_check(u: MapState, r_values) -> ConsistencyCheck:
    """Estimate c_d in e_2[u] = c_d |Du| for a smooth real map on a grid.

    Median over bulk points (farther than 2 max(r) from the exterior) of the
    extrapolated density divided by the finite-difference gradient norm.
    """
    if not (isinstance(u.target, Euclidean) and u.target.dim == 1):
        raise ValueError("consistency check needs a real-valued map")
    lat = u.domain.lattice
    if lat is None:
        raise ValueError("consistency check needs a grid domain")
    dim = len(lat[0])
    rs = np.asarray(r_values, dtype=float)
    dens = density_estimate(u, rs).estimate
    grad = finite_difference_gradient_norm(u)
    bulk = u.domain.bulk_mask(2 * rs.max())
    ok = bulk & np.isfinite(dens) & np.isfinite(grad) & (grad >= 1e-8)
    ratios = dens[ok] / grad[ok]
    est = float(np.median(ratios)) if ratios.size else float("nan")
    return ConsistencyCheck(est, (dim + 2) ** -0.5, dim, int(ok.sum()), ratios)
