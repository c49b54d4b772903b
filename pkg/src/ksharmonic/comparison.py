"""Numerical checks of the curvature comparison inequalities.

Every check returns a *signed* defect, LHS minus RHS of a one-sided
inequality.  Only the positive part is expected to be small (cubic in the
configuration scale for the pointwise estimates, vanishing as r -> 0 for the
energy versions), so summaries report the positive part.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .energy import MapState, ks_squared, total_energy, weighted_total
from .sampling import sample_estimate_I, sample_estimate_II
from .targets import Sphere, Target, corrected_midpoint, radial_contraction

KINDS = ("estimateI", "estimateII", "midpoint_energy", "radial_energy", "convexity")
DEFAULT_SCALES = tuple(10.0 ** -e for e in (1.0, 1.5, 2.0, 2.5, 3.0))


@dataclass
class DefectReport:
    """Signed defect of one inequality, possibly vectorized over configurations.

    ``scale`` is the max of the variables the cubic remainder depends on.
    """

    scale: np.ndarray
    defect: np.ndarray
    config: dict
    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown defect kind {self.kind!r}")
        if not np.all(np.isfinite(self.defect)):
            raise ValueError("non-finite defect")

    @property
    def positive_part(self):
        return np.maximum(self.defect, 0.0)


def _infer_target(target, *pts):
    if target is not None:
        return target
    return Sphere(np.asarray(pts[0]).shape[-1] - 1)


def _points(tgt: Target, *pts):
    return [tgt.point(p) for p in pts]


def estimate_I_defect(g0, g1, h0, h1, target: Target | None = None) -> DefectReport:
    """Quadrilateral comparison for two geodesics g0->g1 and h0->h1.

    defect = cs^2(D/2) d^2(m_g, m_h) + (Delta^2)/4 - (d^2(g0,h0) + d^2(g1,h1))/2
    with D = d(g0, g1), Delta = d(h0, h1) - D and m_g, m_h the midpoints.
    The default target is the unit sphere of matching dimension.
    """
    tgt = _infer_target(target, g0)
    g0, g1, h0, h1 = _points(tgt, g0, g1, h0, h1)
    dist = tgt.distance
    a, b = dist(g0, h0), dist(g1, h1)
    D, Dh = dist(g0, g1), dist(h0, h1)
    if tgt.curvature == 1 and np.any(a + Dh + b + D >= 2 * np.pi):
        raise ValueError("quadrilateral perimeter must be below 2 pi")
    mm = dist(tgt.midpoint(g0, g1), tgt.midpoint(h0, h1))
    delta = Dh - D
    defect = tgt.cs(D / 2) ** 2 * mm ** 2 + 0.25 * delta ** 2 - 0.5 * (a ** 2 + b ** 2)
    scale = np.maximum.reduce([a, b, np.abs(delta), mm])
    return DefectReport(scale, defect, {"g0": g0, "g1": g1, "h0": h0, "h1": h1}, "estimateI")


def estimate_II_defect(g0, g1, h0, t, s, target: Target | None = None) -> DefectReport:
    """Comparison for geodesics g0->g1 and h0->g1 sharing their endpoint.

    With gamma, eta those geodesics, D = d(g0, g1), Delta = d(h0, g1) - D:

    defect = d^2(gamma_t, eta_s) - [sn^2((1-t)D)/sn^2(D) (d^2(g0,h0) - Delta^2)
             + (1-t)^2 Delta^2 + D^2 (s-t)^2 - 2 (1-t)(s-t) D Delta]
    """
    tgt = _infer_target(target, g0)
    g0, g1, h0 = _points(tgt, g0, g1, h0)
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any((t < 0) | (t > 1) | (s < 0) | (s > 1)):
        raise ValueError("t and s must lie in [0, 1]")
    dist = tgt.distance
    D, Dh, a = dist(g0, g1), dist(h0, g1), dist(g0, h0)
    if np.any(D <= 0):
        raise ValueError("d(g0, g1) must be positive")
    if tgt.curvature == 1:
        if np.any(D >= np.pi):
            raise ValueError("d(g0, g1) must be below pi")
        if np.any(a + Dh + D >= 2 * np.pi):
            raise ValueError("triangle perimeter must be below 2 pi")
    delta = Dh - D
    gt = tgt.geodesic_point(g0, g1, t)
    es = tgt.geodesic_point(h0, g1, s)
    lhs = dist(gt, es) ** 2
    ratio = tgt.sn((1 - t) * D) ** 2 / tgt.sn(D) ** 2
    rhs = (ratio * (a ** 2 - delta ** 2) + (1 - t) ** 2 * delta ** 2
           + D ** 2 * (s - t) ** 2 - 2 * (1 - t) * (s - t) * D * delta)
    scale = np.maximum.reduce([np.abs(s - t) * np.ones_like(a), a, np.abs(delta), np.sqrt(lhs)])
    return DefectReport(scale, lhs - rhs, {"g0": g0, "g1": g1, "h0": h0, "t": t, "s": s},
                        "estimateII")


# -- Monte-Carlo scaling ----------------------------------------------------

@dataclass
class ScalingReport:
    kind: str
    scales: np.ndarray
    p95: np.ndarray
    p50: np.ndarray
    max_positive: np.ndarray
    fraction_positive: np.ndarray
    max_cubic_ratio: np.ndarray  # max positive defect / config scale^3
    slope: float
    fitted_c: float  # max positive defect / s^3 at the largest s
    samples: int
    family: str = ""

    def as_dict(self) -> dict:
        rows = {}
        for i, s in enumerate(self.scales):
            rows[repr(float(s))] = {
                "p50": float(self.p50[i]), "p95": float(self.p95[i]),
                "max": float(self.max_positive[i]),
                "fraction_positive": float(self.fraction_positive[i]),
                "max_cubic_ratio": float(self.max_cubic_ratio[i]),
            }
        return {"kind": self.kind, "family": self.family, "samples": self.samples,
                "slope": self.slope, "fitted_c": self.fitted_c, "scales": rows}


def _records(kind, tgt, scale, samples, seed, family):
    cfg = []
    for j in range(samples):
        # same stream for record j at every scale: the base geometry is
        # shared across scales and only the displacement size changes
        rng = np.random.default_rng([seed, j])
        if kind == "estimateI":
            cfg.append(sample_estimate_I(tgt, scale, rng, family))
        else:
            cfg.append(sample_estimate_II(tgt, scale, rng))
    cols = [np.array(c) for c in zip(*cfg)]
    if kind == "estimateI":
        return estimate_I_defect(*cols, target=tgt)
    return estimate_II_defect(*cols, target=tgt)


def loglog_slope(scales, values) -> float:
    scales = np.asarray(scales, dtype=float)
    values = np.asarray(values, dtype=float)
    if np.any(values <= 0) or np.ptp(scales) == 0:
        return float("nan")
    return float(np.polyfit(np.log10(scales), np.log10(values), 1)[0])


def defect_scaling(kind: str, scales=DEFAULT_SCALES, samples: int = 100, seed: int = 0,
                   target: Target | None = None, family: str = "degenerate",
                   threads: int = 1) -> ScalingReport:
    """Percentiles of the positive-part defect over random configurations per scale.

    Record j draws from ``default_rng([seed, j])`` at every scale (common
    random numbers), so the output does not depend on ``threads`` and the
    slope is not blurred by resampling the base geometry.
    """
    if kind not in ("estimateI", "estimateII"):
        raise ValueError("scaling studies exist for estimateI and estimateII only")
    if samples < 1:
        raise ValueError("need at least one sample")
    tgt = Sphere(2) if target is None else target
    scales = np.asarray(scales, dtype=float)
    jobs = [(kind, tgt, float(s), samples, seed, family) for s in scales]
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            reports = list(ex.map(lambda a: _records(*a), jobs))
    else:
        reports = [_records(*a) for a in jobs]
    pos = np.array([r.positive_part for r in reports])
    cub = np.array([np.max(np.where(r.scale > 0, r.positive_part / np.maximum(r.scale, 1e-100) ** 3, 0.0))
                    for r in reports])
    p95 = np.percentile(pos, 95, axis=1)
    i0 = int(np.argmax(scales))
    return ScalingReport(
        kind=kind, scales=scales, p95=p95, p50=np.percentile(pos, 50, axis=1),
        max_positive=pos.max(axis=1), fraction_positive=(pos > 0).mean(axis=1),
        max_cubic_ratio=cub, slope=loglog_slope(scales, p95),
        fitted_c=float(pos[i0].max() / scales[i0] ** 3), samples=samples,
        family=family if kind == "estimateI" else "generic",
    )


# -- energy versions on maps -----------------------------------------------

@dataclass
class MapDefect:
    kind: str
    r: float
    per_point: np.ndarray
    max_positive: float
    weighted_mean: float


def _summary(kind, u: MapState, r, defect):
    dom = u.domain
    return MapDefect(kind, float(r), defect, float(np.max(np.maximum(defect, 0.0))),
                     weighted_total(dom, defect) / float(np.sum(dom.weights)))


def _same_domain(u: MapState, v: MapState):
    if u.domain is not v.domain:
        raise ValueError("maps live on different domains")
    if u.target != v.target:
        raise ValueError("maps have different targets")


def midpoint_map(u: MapState, v: MapState) -> MapState:
    _same_domain(u, v)
    return MapState(u.domain, u.target, u.target.midpoint(u.values, v.values), u.ball)


def midpoint_energy_defect(u: MapState, v: MapState, r: float) -> MapDefect:
    """cs^2(d/2) ks^2[m] + ks^2[d]/4 - (ks^2[u] + ks^2[v])/2 at each point."""
    _same_domain(u, v)
    tgt = u.target
    d = tgt.distance(u.values, v.values)
    m = midpoint_map(u, v)
    dmap = MapState.real(u.domain, d)
    defect = (tgt.cs(d / 2) ** 2 * ks_squared(m, r) + 0.25 * ks_squared(dmap, r)
              - 0.5 * (ks_squared(u, r) + ks_squared(v, r)))
    return _summary("midpoint_energy", u, r, defect)


def radial_energy_defect(u: MapState, eta: MapState, r: float) -> MapDefect:
    """Energy of u pulled toward the ball center by the pointwise fraction eta.

    defect = ks^2[u_eta] - [q ks^2[u] + (ks^2[(1-eta) dd] - q ks^2[dd])]
    with dd = d(u, o) and q = sn^2((1-eta) dd)/sn^2(dd) (limit (1-eta)^2).
    """
    if u.ball is None:
        raise ValueError("radial contraction needs a map with a ball")
    if eta.domain is not u.domain:
        raise ValueError("maps live on different domains")
    e = eta.scalar
    if np.any((e < 0) | (e > 1)):
        raise ValueError("eta must take values in [0, 1]")
    tgt, ball, dom = u.target, u.ball, u.domain
    u_eta = MapState(dom, tgt, radial_contraction(u.values, ball, e), ball)
    dd = ball.center_distance(u.values)
    small = dd < 1e-8
    safe = np.where(small, 1.0, dd)
    q = np.where(small, (1 - e) ** 2, tgt.sn((1 - e) * safe) ** 2 / tgt.sn(safe) ** 2)
    k_dd = ks_squared(MapState.real(dom, dd), r)
    k_sdd = ks_squared(MapState.real(dom, (1 - e) * dd), r)
    rhs = q * ks_squared(u, r) + (k_sdd - q * k_dd)
    return _summary("radial_energy", u, r, ks_squared(u_eta, r) - rhs)


def tangent_weight(u: MapState, v: MapState):
    """Pointwise tn(d/2)/cs(dd) with d = d(u, v) and dd the midpoint's center distance."""
    tgt = u.target
    d = tgt.distance(u.values, v.values)
    if u.ball is None:
        if tgt.curvature != 0:
            raise ValueError("curved targets need a regular ball")
        return tgt.tn(d / 2)
    dd = u.ball.center_distance(tgt.midpoint(u.values, v.values))
    return tgt.tn(d / 2) / tgt.cs(dd)


@dataclass
class ConvexityReport:
    r: float
    defect_total: float
    components: dict = field(default_factory=dict)


def convexity_defect(u: MapState, v: MapState, r: float) -> ConvexityReport:
    """E(m_eta) + cs^8(rho) E(T) - E(u)/2 - E(v)/2 with T = tn(d/2)/cs(dd).

    ``m_eta`` is the corrected midpoint map and E the interior energy at r.
    """
    _same_domain(u, v)
    if not u.same_class(v):
        raise ValueError("maps must share their boundary trace")
    if u.ball is None or v.ball is not u.ball and not (
            np.array_equal(u.ball.center, v.ball.center) and u.ball.radius == v.ball.radius):
        raise ValueError("maps must share their regular ball")
    tgt, ball, dom = u.target, u.ball, u.domain
    m_eta, aux = corrected_midpoint(u.values, v.values, ball)
    m_map = MapState(dom, tgt, m_eta, ball)
    tmap = MapState.real(dom, tangent_weight(u, v))
    c8 = float(tgt.cs(ball.radius)) ** 8
    e_m = total_energy(m_map, r).total
    e_t = total_energy(tmap, r).total
    e_u = total_energy(u, r).total
    e_v = total_energy(v, r).total
    defect = e_m + c8 * e_t - 0.5 * e_u - 0.5 * e_v
    comps = {"E_m_eta": e_m, "E_tangent": e_t, "E_u": e_u, "E_v": e_v, "cos8_rho": c8,
             "rhs": 0.5 * e_u + 0.5 * e_v, "max_eta": float(np.max(aux["eta"]))}
    return ConvexityReport(float(r), float(defect), comps)


@dataclass
class CauchyReport:
    functional: float
    l2_distance: float
    bound_holds: bool


def cauchy_functional(u: MapState, v: MapState) -> CauchyReport:
    """Sum over interior points of w (tn(d/2)/cs(dd))^2, with the L2 distance.

    ``bound_holds`` records L2^2 <= 4 * functional (up to rounding).
    """
    _same_domain(u, v)
    if not u.same_class(v):
        raise ValueError("maps must share their boundary trace")
    dom = u.domain
    t = tangent_weight(u, v)
    f = weighted_total(dom, t * t, dom.interior)
    l2sq = weighted_total(dom, u.target.distance(u.values, v.values) ** 2, dom.interior)
    ok = l2sq <= 4 * f * (1 + 1e-12) + 1e-300
    return CauchyReport(float(f), float(np.sqrt(l2sq)), bool(ok))


# -- modified energy --------------------------------------------------------

@dataclass
class ModifiedGap:
    r: float
    alpha: float
    gap: np.ndarray  # ks - ks_modified
    gap_squared: np.ndarray  # ks^2 - ks_modified^2
    bound: np.ndarray  # (r/alpha)^2 (ks_v^2 + ks_w^2) sup d_u^2 / d_X^2


def local_lipschitz_squared(u: MapState, r: float) -> np.ndarray:
    """max over y in B_r(x), y != x, of d_Y(u(x), u(y))^2 / d_X(x, y)^2."""
    dom = u.domain
    g = dom.ball_graph(r)
    out = np.zeros(dom.n)
    rows = np.arange(dom.n)
    for chunk, centers, members, pos in g.row_chunks(rows, positions=True):
        dx = g.distances[pos]
        dy = u.target.distance(u.values[centers], u.values[members])
        ratio = np.where(dx > 0, dy ** 2 / np.where(dx > 0, dx, 1.0) ** 2, 0.0)
        starts = np.concatenate([[0], np.cumsum(g.counts[chunk])[:-1]])
        out[chunk] = np.maximum.reduceat(ratio, starts)
    return out


def modified_energy_gap(u: MapState, v: MapState, w: MapState, alpha: float, r: float) -> ModifiedGap:
    """Pointwise effect of removing the (v, w, alpha) exclusion sets from ks_r[u]."""
    full = ks_squared(u, r)
    mod = ks_squared(u, r, exclude=(v, w, alpha))
    bound = (r / alpha) ** 2 * (ks_squared(v, r) + ks_squared(w, r)) * local_lipschitz_squared(u, r)
    inside = u.domain.ball_graph(r).inside
    bound = np.where(inside, bound, 0.0)
    return ModifiedGap(float(r), float(alpha), np.sqrt(full) - np.sqrt(mod), full - mod, bound)
