"""Discrete Dirichlet problem: minimize the approximate energy with a frozen trace.

The objective is a sum of pairwise terms ``W[x, y] * d^2(u(x), u(y))`` with a
symmetric coupling ``W`` built from the ball structure at scale ``r``.  Since
only the row of ``x`` involves ``u(x)``, updating one point to the weighted
barycenter of its neighbors never raises the energy.  Points with no coupling
between them are updated together; the result is the same as visiting them
one by one.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .comparison import cauchy_functional
from .domain import PointCloudSpace
from .energy import MapState, weighted_total
from .targets import RegularBall

OBJECTIVES = ("dirichlet", "interior")


@dataclass(frozen=True)
class SolverConfig:
    """Stopping rules and options for :func:`solve`.

    ``relaxation`` > 1 over-relaxes each update along the geodesic to the
    barycenter; an over-relaxed point is kept only if it lowers the local
    objective, otherwise the plain barycenter is used.  ``objective`` picks
    the energy: ``"dirichlet"`` lets balls reach into the exterior (where
    the trace is frozen), ``"interior"`` only counts balls inside the
    interior region.
    """

    r: float
    max_sweeps: int = 5000
    energy_tol: float = 1e-13
    move_tol: float = 1e-10
    sweep_order: tuple | None = None
    barycenter_max_iter: int = 50
    barycenter_tol: float = 1e-14
    seed: int = 0
    method: str = "gauss-seidel"
    relaxation: float = 1.0
    objective: str = "dirichlet"

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("r must be positive")
        for name in ("energy_tol", "move_tol", "barycenter_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_sweeps < 1 or self.barycenter_max_iter < 1:
            raise ValueError("iteration budgets must be positive")
        if self.method not in ("gauss-seidel", "jacobi"):
            raise ValueError(f"unknown method {self.method!r}")
        if not 1.0 <= self.relaxation < 2.0:
            raise ValueError("relaxation must lie in [1, 2)")
        if self.objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}")


@dataclass
class SolveResult:
    map: MapState
    energy_trace: list
    cauchy_trace: list
    converged: bool
    sweeps_used: int
    initial_energy: float = 0.0
    projections: list = field(default_factory=list)
    max_moves: list = field(default_factory=list)
    updates: list = field(default_factory=list)


# -- coupling ---------------------------------------------------------------

def coupling_matrix(domain: PointCloudSpace, r: float, objective: str = "dirichlet") -> sp.csr_matrix:
    """Symmetric W with energy = 1/2 sum_{x,y} W[x,y] d^2(u(x), u(y)).

    A ball center c contributes w_c w_y / (r^2 m(B_r(c))) for each y != c in
    its ball; W is that matrix plus its transpose.
    """
    if objective not in OBJECTIVES:
        raise ValueError(f"unknown objective {objective!r}")
    key = ("coupling", float(r), objective)
    if key in domain._cache:
        return domain._cache[key]
    g = domain.ball_graph(r)
    centers = np.repeat(np.arange(domain.n), g.counts)
    active = np.ones(domain.n, bool) if objective == "dirichlet" else g.inside
    keep = active[centers] & (centers != g.indices)
    c, y = centers[keep], g.indices[keep]
    w = domain.weights
    a = w[c] * w[y] / (r * r * g.mass[c])
    A = sp.csr_matrix((a, (c, y)), shape=(domain.n, domain.n))
    W = (A + A.T).tocsr()
    W.sum_duplicates()
    W.sort_indices()
    domain._cache[key] = W
    return W


def coupled_energy(u: MapState, W: sp.csr_matrix) -> float:
    coo = W.tocoo()
    d2 = u.target.distance(u.values[coo.row], u.values[coo.col]) ** 2
    return 0.5 * math.fsum(coo.data * d2)


def solver_energy(u: MapState, r: float, objective: str = "dirichlet") -> float:
    return coupled_energy(u, coupling_matrix(u.domain, r, objective))


class _Rows:
    """Gathered CSR rows of W for a block of points."""

    def __init__(self, W: sp.csr_matrix, rows: np.ndarray):
        self.rows = rows
        lo, hi = W.indptr[rows], W.indptr[rows + 1]
        counts = hi - lo
        pos = np.repeat(lo, counts) + (np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts))
        self.owner = np.repeat(np.arange(rows.size), counts)
        self.nbr = W.indices[pos]
        self.wt = W.data[pos]
        self.wsum = np.bincount(self.owner, self.wt, minlength=rows.size)

    def segsum(self, vals):
        k = self.rows.size
        if vals.ndim == 1:
            return np.bincount(self.owner, self.wt * vals, minlength=k)
        return np.column_stack([np.bincount(self.owner, self.wt * vals[:, j], minlength=k)
                                for j in range(vals.shape[1])])

    def objective(self, tgt, p, values):
        return self.segsum(tgt.distance(p[self.owner], values[self.nbr]) ** 2)


def local_objective(x: int, p, u: MapState, r: float, objective: str = "dirichlet") -> float:
    """sum_{y != x} W[x, y] d^2(p, u(y)): the part of the energy that depends on u(x)."""
    W = coupling_matrix(u.domain, r, objective)
    lo, hi = W.indptr[x], W.indptr[x + 1]
    nbr, wt = W.indices[lo:hi], W.data[lo:hi]
    if nbr.size == 0:
        return 0.0
    p = u.target.point(p)
    return math.fsum(wt * u.target.distance(p, u.values[nbr]) ** 2)


def _barycenters(tgt, ball, values, block: _Rows, max_iter, tol):
    """Weighted barycenters of the neighbors of each row, projected into the ball."""
    q = values[block.nbr]
    wsum = np.where(block.wsum > 0, block.wsum, 1.0)
    start = values[block.rows].copy()
    if tgt.curvature == 0:
        b = block.segsum(q) / wsum[:, None]
    else:
        b = start
        active = block.wsum > 0
        for _ in range(max_iter):
            g = block.segsum(tgt._log(b[block.owner], q)) / wsum[:, None]
            step = np.linalg.norm(g, axis=1)
            b = np.where(active[:, None], tgt._exp(b, g), b)
            active &= step > tol
            if not active.any():
                break
    b = np.where((block.wsum > 0)[:, None], b, start)
    n_proj = 0
    if ball is not None:
        b, n_proj = ball.project(b)
    return b, n_proj


def local_barycenter(x: int, u: MapState, r: float, config: SolverConfig | None = None):
    """Minimizer of :func:`local_objective` over the ball (``u(x)`` if x is uncoupled)."""
    config = config or SolverConfig(r=r)
    if not u.domain.interior[x]:
        raise ValueError("barycenters are only taken at interior points")
    W = coupling_matrix(u.domain, r, config.objective)
    block = _Rows(W, np.array([x]))
    b, _ = _barycenters(u.target, u.ball, u.values, block, config.barycenter_max_iter,
                        config.barycenter_tol)
    return b[0]


# -- ordering ---------------------------------------------------------------

def greedy_coloring(W: sp.csr_matrix, rows: np.ndarray) -> np.ndarray:
    """Colour ``rows`` so that coupled rows differ (greedy, in the given order)."""
    colour = np.full(W.shape[0], -1)
    for x in rows:
        nb = W.indices[W.indptr[x]:W.indptr[x + 1]]
        used = set(colour[nb].tolist())
        c = 0
        while c in used:
            c += 1
        colour[x] = c
    return colour[rows]


def default_order(W: sp.csr_matrix, interior_ids: np.ndarray) -> np.ndarray:
    """Interior ids grouped by colour class (stable within a class)."""
    col = greedy_coloring(W, interior_ids)
    return interior_ids[np.argsort(col, kind="stable")]


def independent_runs(W: sp.csr_matrix, order) -> list:
    """Split ``order`` into maximal consecutive runs with no coupling inside a run.

    Updating a run at once equals visiting its points sequentially.
    """
    runs, current, blocked = [], [], set()
    for x in order:
        x = int(x)
        if x in blocked:
            runs.append(np.array(current))
            current, blocked = [], set()
        current.append(x)
        blocked.update(W.indices[W.indptr[x]:W.indptr[x + 1]].tolist())
    if current:
        runs.append(np.array(current))
    return runs


# -- solve ------------------------------------------------------------------

def _update_block(tgt, ball, values, block, config):
    """New values for ``block`` given the current ``values``; returns (new, n_proj)."""
    old = values[block.rows]
    b, n_proj = _barycenters(tgt, ball, values, block, config.barycenter_max_iter, config.barycenter_tol)
    f_old = block.objective(tgt, old, values)
    f_b = block.objective(tgt, b, values)
    new = np.where((f_b <= f_old)[:, None], b, old)
    if config.relaxation > 1.0:
        cand = tgt._exp(old, config.relaxation * tgt._log(old, b))
        ok = ball.contains(cand, slack=0.0) if ball is not None else np.ones(len(old), bool)
        f_c = block.objective(tgt, cand, values)
        take = ok & (f_c <= f_old)
        new = np.where(take[:, None], cand, new)
    return new, n_proj


def solve(u0: MapState, config: SolverConfig, trace=None) -> SolveResult:
    """Sweep the interior points, moving each to its local barycenter.

    Stops when the relative energy decrease drops below ``energy_tol`` and
    the largest move below ``move_tol``, or after ``max_sweeps``.
    """
    if trace is not None and not np.array_equal(np.asarray(trace, dtype=float), u0.boundary_trace):
        raise ValueError("initial map does not match the boundary trace")
    if u0.ball is not None and not np.all(u0.ball.contains(u0.values)):
        raise ValueError("initial map leaves the regular ball")
    dom, tgt, ball = u0.domain, u0.target, u0.ball
    W = coupling_matrix(dom, config.r, config.objective)
    interior = dom.interior_ids
    if config.sweep_order is not None:
        order = np.asarray(config.sweep_order, dtype=np.int64)
        if not np.array_equal(np.sort(order), interior):
            raise ValueError("sweep_order must be a permutation of the interior ids")
    else:
        order = default_order(W, interior)
    if config.method == "jacobi":
        blocks = [_Rows(W, np.sort(order))]
    else:
        blocks = [_Rows(W, run) for run in independent_runs(W, order)]

    values = np.array(u0.values)
    u = u0
    energy = coupled_energy(u0, W)
    result = SolveResult(u0, [], [], False, 0, initial_energy=energy)
    for sweep in range(config.max_sweeps):
        prev = values.copy()
        n_proj = 0
        for block in blocks:
            new, k = _update_block(tgt, ball, values, block, config)
            values[block.rows] = new
            n_proj += k
        u_next = u.with_values(values)
        e_next = coupled_energy(u_next, W)
        move = float(np.max(tgt.distance(prev[interior], values[interior]))) if interior.size else 0.0
        result.energy_trace.append(e_next)
        result.cauchy_trace.append(cauchy_functional(u, u_next).functional)
        result.projections.append(n_proj)
        result.max_moves.append(move)
        result.updates.append(int(interior.size))
        rel = (energy - e_next) / max(abs(energy), 1e-300)
        u, energy = u_next, e_next
        result.sweeps_used = sweep + 1
        if rel < config.energy_tol and move < config.move_tol:
            result.converged = True
            break
    result.map = u
    return result


# -- initialization and diagnostics ----------------------------------------

def geodesic_init(domain: PointCloudSpace, trace, ball: RegularBall, mode: str = "center") -> MapState:
    """Feasible starting map with the given exterior trace.

    ``"center"`` puts every interior point at the ball center; ``"nearest"``
    takes the trace value at the nearest exterior point and moves it toward
    the center in proportion to the distance from the exterior.
    """
    tgt = ball.target
    trace = tgt.point(np.asarray(trace, dtype=float))
    if not np.all(ball.contains(trace)):
        raise ValueError("trace leaves the regular ball")
    vals = np.empty((domain.n, tgt.ambient))
    vals[domain.exterior] = trace
    ii = domain.interior_ids
    if mode == "center":
        vals[ii] = ball.center
    elif mode == "nearest":
        near = domain.nearest_exterior[ii]
        depth = domain.exterior_distance[ii]
        frac = depth / depth.max() if depth.size and depth.max() > 0 else np.zeros(ii.size)
        vals[ii] = tgt.geodesic_point(vals[near], np.broadcast_to(ball.center, (ii.size, tgt.ambient)), frac)
    else:
        raise ValueError(f"unknown init mode {mode!r}")
    return MapState(domain, tgt, vals, ball)


def random_init(domain: PointCloudSpace, trace, ball: RegularBall, seed, perturbation: float) -> MapState:
    """Center init with every interior value moved by a random tangent vector of length <= perturbation."""
    u = geodesic_init(domain, trace, ball, "center")
    tgt = ball.target
    rng = np.random.default_rng(seed)
    ii = domain.interior_ids
    basis = tgt._tangent_basis(ball.center)
    dirs = rng.normal(size=(ii.size, basis.shape[0]))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    lengths = perturbation * rng.uniform(0, 1, size=(ii.size, 1))
    vals = np.array(u.values)
    vals[ii] = tgt._exp(np.broadcast_to(ball.center, (ii.size, tgt.ambient)), lengths * dirs @ basis)
    vals[ii], _ = ball.project(vals[ii])
    return u.with_values(vals)


@dataclass
class MultistartReport:
    results: list
    seeds: list
    pairwise_l2: np.ndarray
    pairwise_cauchy: np.ndarray
    closing_bound_holds: bool
    unconverged: list

    @property
    def max_l2(self) -> float:
        return float(self.pairwise_l2.max()) if self.pairwise_l2.size else 0.0

    @property
    def max_cauchy(self) -> float:
        return float(self.pairwise_cauchy.max()) if self.pairwise_cauchy.size else 0.0


def multistart_uniqueness(domain: PointCloudSpace, trace, ball: RegularBall, config: SolverConfig,
                          n_starts: int, perturbation: float, seeds=None, threads: int = 1) -> MultistartReport:
    """Solve from several random starts and compare the results pairwise.

    Start k uses ``seeds[k]`` (default ``[config.seed, k]``).  Unconverged
    runs are listed but still compared.
    """
    if n_starts < 2:
        raise ValueError("need at least two starts")
    seeds = [[config.seed, k] for k in range(n_starts)] if seeds is None else list(seeds)
    if len(seeds) != n_starts:
        raise ValueError("need one seed per start")

    def run(seed):
        return solve(random_init(domain, trace, ball, seed, perturbation), config)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(run, seeds))
    else:
        results = [run(s) for s in seeds]
    l2 = np.zeros((n_starts, n_starts))
    cf = np.zeros((n_starts, n_starts))
    ok = True
    for i in range(n_starts):
        for j in range(i + 1, n_starts):
            rep = cauchy_functional(results[i].map, results[j].map)
            l2[i, j] = l2[j, i] = rep.l2_distance
            cf[i, j] = cf[j, i] = rep.functional
            ok &= rep.bound_holds
    unconverged = [k for k, r in enumerate(results) if not r.converged]
    return MultistartReport(results, seeds, l2, cf, bool(ok), unconverged)


def dirichlet_poincare_diagnostic(f: MapState, r: float, objective: str = "dirichlet") -> float:
    """sum w f^2 / energy(f): empirical Poincare constant at scale r.

    ``f`` must be real valued and vanish on the exterior.
    """
    vals = f.scalar
    dom = f.domain
    if np.any(vals[dom.exterior] != 0):
        raise ValueError("f must vanish on the exterior")
    num = weighted_total(dom, vals * vals)
    den = solver_energy(f, r, objective)
    if den <= 0:
        if num > 0:
            raise ValueError("zero energy for a nonzero function: interior disconnected at this scale")
        raise ValueError("f is identically zero")
    return num / den
