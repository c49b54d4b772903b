"""Discretized source spaces: finite weighted metric spaces with a region split.

A :class:`PointCloudSpace` carries per-point masses, an interior/exterior
label (interior points discretize the open region, exterior points carry the
boundary data) and one of three metric backends:

* a regular lattice (grid domains), where distances come from integer index
  offsets and ball queries are stencil lookups;
* free coordinates with the Euclidean metric, queried through a k-d tree;
* an explicit dense distance matrix (graph domains).

Ball queries for a fixed radius are materialized once as a CSR
:class:`BallGraph` and cached on the space.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.ndimage import distance_transform_edt
from scipy.sparse.csgraph import connected_components, shortest_path
from scipy.spatial import cKDTree

DENSE_LIMIT = 50_000
AUDIT_TRIPLES = 10_000


@dataclass(frozen=True)
class BallIndex:
    center: int
    radius: float
    members: np.ndarray
    mass: float


@dataclass(frozen=True, eq=False)
class BallGraph:
    """All open balls of one radius, stored row-wise in CSR layout.

    Row ``x`` lists the members of B_r(x) in ascending id order (the center
    included) together with their distances to ``x``.
    """

    radius: float
    indptr: np.ndarray
    indices: np.ndarray
    distances: np.ndarray
    mass: np.ndarray
    inside: np.ndarray

    @property
    def counts(self) -> np.ndarray:
        return np.diff(self.indptr)

    def members(self, x: int) -> np.ndarray:
        return self.indices[self.indptr[x]:self.indptr[x + 1]]

    def row_chunks(self, rows: np.ndarray, max_pairs: int = 2_000_000, positions: bool = False):
        """Yield ``(rows_chunk, centers, members)`` blocks of bounded size.

        With ``positions=True`` a fourth entry holds the CSR positions, for
        looking up ``distances``.
        """
        rows = np.asarray(rows, dtype=np.int64)
        if rows.size == 0:
            return
        sizes = self.counts[rows]
        start = 0
        while start < rows.size:
            csum = np.cumsum(sizes[start:])
            stop = start + max(1, int(np.searchsorted(csum, max_pairs, side="right")))
            chunk = rows[start:stop]
            lo = self.indptr[chunk]
            hi = self.indptr[chunk + 1]
            counts = hi - lo
            centers = np.repeat(chunk, counts)
            offsets = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
            pos = np.repeat(lo, counts) + offsets
            if positions:
                yield chunk, centers, self.indices[pos], pos
            else:
                yield chunk, centers, self.indices[pos]
            start = stop


class _Lattice:
    def __init__(self, shape, spacing, origin):
        self.shape = tuple(int(s) for s in shape)
        self.spacing = np.asarray(spacing, dtype=float)
        self.origin = np.asarray(origin, dtype=float)
        self.n = int(np.prod(self.shape))

    def multi_index(self, idx):
        return np.stack(np.unravel_index(np.asarray(idx), self.shape), axis=-1)

    def coords(self):
        return self.origin + self.multi_index(np.arange(self.n)) * self.spacing

    def pair_distance(self, i, j):
        diff = (self.multi_index(i) - self.multi_index(j)) * self.spacing
        return np.sqrt(np.sum(diff * diff, axis=-1))

    def row(self, i):
        return self.pair_distance(np.full(self.n, i), np.arange(self.n))

    def pairs_within(self, r):
        reach = np.floor(r / self.spacing).astype(int)
        ranges = [np.arange(-k, k + 1) for k in reach]
        offsets = np.array(list(itertools.product(*ranges)), dtype=np.int64)
        lengths = np.sqrt(np.sum((offsets * self.spacing) ** 2, axis=1))
        keep = lengths < r
        offsets, lengths = offsets[keep], lengths[keep]
        grid = self.multi_index(np.arange(self.n))
        centers, members, dists = [], [], []
        strides = np.array([int(np.prod(self.shape[k + 1:])) for k in range(len(self.shape))])
        for off, length in zip(offsets, lengths):
            nb = grid + off
            ok = np.all((nb >= 0) & (nb < np.array(self.shape)), axis=1)
            c = np.nonzero(ok)[0]
            centers.append(c)
            members.append(c + int(off @ strides))
            dists.append(np.full(c.size, length))
        return np.concatenate(centers), np.concatenate(members), np.concatenate(dists)

    def nearest_index(self, target_mask):
        # exact Euclidean distance transform; distances are re-measured by the caller
        field_ = (~target_mask).reshape(self.shape)
        _, inds = distance_transform_edt(field_, sampling=self.spacing, return_indices=True)
        return np.ravel_multi_index(tuple(ix.ravel() for ix in inds), self.shape)


class _Coordinates:
    def __init__(self, coords):
        self.points = np.asarray(coords, dtype=float)
        self.n = self.points.shape[0]
        self._tree = None

    @property
    def tree(self):
        if self._tree is None:
            self._tree = cKDTree(self.points)
        return self._tree

    def coords(self):
        return self.points

    def pair_distance(self, i, j):
        return np.linalg.norm(self.points[np.asarray(i)] - self.points[np.asarray(j)], axis=-1)

    def row(self, i):
        return np.linalg.norm(self.points - self.points[i], axis=-1)

    def pairs_within(self, r):
        pairs = self.tree.query_pairs(r * (1 + 1e-9) + 1e-300, output_type="ndarray")
        i, j = pairs[:, 0].astype(np.int64), pairs[:, 1].astype(np.int64)
        d = self.pair_distance(i, j)
        keep = d < r
        i, j, d = i[keep], j[keep], d[keep]
        diag = np.arange(self.n)
        return (np.concatenate([diag, i, j]), np.concatenate([diag, j, i]),
                np.concatenate([np.zeros(self.n), d, d]))

    def nearest_index(self, target_mask):
        tgt = np.nonzero(target_mask)[0]
        _, k = cKDTree(self.points[tgt]).query(self.points)
        return tgt[k]


class _Dense:
    def __init__(self, matrix):
        self.matrix = np.asarray(matrix, dtype=float)
        self.n = self.matrix.shape[0]

    def coords(self):
        return None

    def pair_distance(self, i, j):
        return self.matrix[np.asarray(i), np.asarray(j)]

    def row(self, i):
        return self.matrix[i]

    def pairs_within(self, r):
        i, j = np.nonzero(self.matrix < r)
        return i.astype(np.int64), j.astype(np.int64), self.matrix[i, j]

    def nearest_index(self, target_mask):
        tgt = np.nonzero(target_mask)[0]
        return tgt[np.argmin(self.matrix[:, tgt], axis=1)]


@dataclass(frozen=True, eq=False)
class PointCloudSpace:
    """Finite metric measure space with an interior/exterior partition.

    Construct through :func:`build_grid_domain`, :func:`build_graph_domain`,
    :func:`build_coordinate_domain` or :func:`from_matrix`.  Instances are
    immutable; ball graphs are cached per radius.
    """

    weights: np.ndarray
    interior: np.ndarray
    _metric: object = field(repr=False)
    ids: tuple = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        mask = np.asarray(self.interior, dtype=bool)
        if w.ndim != 1 or w.shape != mask.shape or w.size != self._metric.n:
            raise ValueError("weights, labels and metric disagree in size")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("all weights must be positive and finite")
        if mask.all():
            raise ValueError("exterior set must be nonempty")
        w.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "interior", mask)
        ids = tuple(range(w.size)) if self.ids is None else tuple(self.ids)
        if len(ids) != w.size or len(set(ids)) != len(ids):
            raise ValueError("point ids must be unique, one per point")
        object.__setattr__(self, "ids", ids)

    @property
    def n(self) -> int:
        return self.weights.size

    @property
    def exterior(self) -> np.ndarray:
        return ~self.interior

    @property
    def interior_ids(self) -> np.ndarray:
        return np.nonzero(self.interior)[0]

    @property
    def exterior_ids(self) -> np.ndarray:
        return np.nonzero(~self.interior)[0]

    @property
    def kind(self) -> str:
        return {_Lattice: "grid", _Coordinates: "coordinates", _Dense: "matrix"}[type(self._metric)]

    @property
    def coordinates(self) -> np.ndarray | None:
        return self._metric.coords()

    @property
    def lattice(self):
        """``(shape, spacing, origin)`` for grid domains, else ``None``."""
        m = self._metric
        if isinstance(m, _Lattice):
            return m.shape, m.spacing, m.origin
        return None

    def index(self, point_id) -> int:
        return self.ids.index(point_id)

    def distance(self, i, j):
        return self._metric.pair_distance(i, j)

    def distances_from(self, i: int) -> np.ndarray:
        return self._metric.row(i)

    def dense_metric(self) -> np.ndarray:
        if isinstance(self._metric, _Dense):
            return self._metric.matrix
        if self.n > DENSE_LIMIT:
            raise MemoryError(f"refusing to materialize a {self.n}x{self.n} metric")
        return np.vstack([self._metric.row(i) for i in range(self.n)])

    @property
    def exterior_distance(self) -> np.ndarray:
        """Distance from every point to its nearest exterior point."""
        if "ext" not in self._cache:
            near = self.nearest_exterior
            self._cache["ext"] = self._metric.pair_distance(np.arange(self.n), near)
        return self._cache["ext"]

    @property
    def nearest_exterior(self) -> np.ndarray:
        """Index of a nearest exterior point for every point (ties broken by the backend)."""
        if "near" not in self._cache:
            self._cache["near"] = self._metric.nearest_index(self.exterior)
        return self._cache["near"]

    def ball_graph(self, r: float) -> BallGraph:
        r = float(r)
        if not r > 0:
            raise ValueError("ball radius must be positive")
        key = ("balls", r)
        if key not in self._cache:
            self._cache[key] = self._build_ball_graph(r)
        return self._cache[key]

    def _build_ball_graph(self, r: float) -> BallGraph:
        c, m, d = self._metric.pairs_within(r)
        order = np.lexsort((m, c))
        c, m, d = c[order], m[order], d[order]
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(np.bincount(c, minlength=self.n), out=indptr[1:])
        mass = np.add.reduceat(self.weights[m], indptr[:-1])
        inside_members = np.logical_and.reduceat(self.interior[m], indptr[:-1])
        inside = self.interior & inside_members & (self.exterior_distance >= r)
        return BallGraph(r, indptr, m.astype(np.int64), d, mass, inside)

    def ball(self, x: int, r: float) -> BallIndex:
        """Open ball B_r(x) (strict inequality on the radius)."""
        if not r > 0:
            raise ValueError("ball radius must be positive")
        key = ("balls", float(r))
        if key in self._cache:
            g = self._cache[key]
            members = g.members(x).copy()
        else:
            members = np.nonzero(self._metric.row(x) < r)[0]
        return BallIndex(int(x), float(r), members, float(np.sum(self.weights[members])))

    def ball_inside_interior(self, x: int, r: float) -> bool:
        """Discrete version of "B_r(x) is contained in the open region".

        True iff every ball member is interior and the nearest exterior point
        sits at distance >= r.
        """
        if not r > 0:
            raise ValueError("ball radius must be positive")
        if not self.interior[x]:
            return False
        members = self.ball(x, r).members
        return bool(self.interior[members].all() and self.exterior_distance[x] >= r)

    def bulk_mask(self, margin: float) -> np.ndarray:
        """Interior points farther than ``margin`` from the exterior."""
        return self.interior & (self.exterior_distance > margin)

    def with_weights(self, weights) -> PointCloudSpace:
        return PointCloudSpace(np.asarray(weights, dtype=float), self.interior, self._metric, self.ids)

    def permuted(self, perm) -> PointCloudSpace:
        """Relabel points: new point k is old point ``perm[k]`` (dense copy)."""
        perm = np.asarray(perm)
        dense = self.dense_metric()[np.ix_(perm, perm)]
        return PointCloudSpace(self.weights[perm], self.interior[perm], _Dense(dense),
                               tuple(self.ids[p] for p in perm))

    def audit_metric(self, n_triples: int = AUDIT_TRIPLES, seed: int = 0, rtol: float = 1e-12) -> int:
        """Count symmetry / zero-diagonal / triangle violations on random triples."""
        rng = np.random.default_rng(seed)
        i, j, k = rng.integers(0, self.n, size=(3, n_triples))
        dij = self.distance(i, j)
        dji = self.distance(j, i)
        dik = self.distance(i, k)
        dkj = self.distance(k, j)
        scale = max(float(np.max(np.abs(np.concatenate([dij, dik, dkj])), initial=0.0)), 1.0)
        tol = rtol * scale
        bad = (dij > dik + dkj + tol) | (np.abs(dij - dji) > tol) | (dij < 0)
        diag = self.distance(np.arange(min(self.n, n_triples)), np.arange(min(self.n, n_triples)))
        return int(np.count_nonzero(bad) + np.count_nonzero(diag != 0))


def _finish(space: PointCloudSpace, audit: bool) -> PointCloudSpace:
    if audit:
        bad = space.audit_metric()
        if bad:
            raise ValueError(f"metric audit failed: {bad} violations")
    return space


def build_grid_domain(dimension: int, n_per_side: int, interior_box, collar: float,
                      audit: bool = True) -> PointCloudSpace:
    """Vertex grid on ``interior_box`` extended by lattice points within ``collar``.

    ``interior_box`` is ``[lo, hi]`` (1D) or a sequence of per-axis ``(lo, hi)``
    pairs.  The spacing along each axis is ``(hi - lo) / (n_per_side - 1)``;
    every point gets the cell volume as weight and points inside the closed
    box are interior.
    """
    if dimension not in (1, 2, 3):
        raise ValueError("dimension must be 1, 2 or 3")
    if n_per_side < 2:
        raise ValueError("need at least 2 points per side")
    if not collar > 0:
        raise ValueError("collar must be positive")
    box = np.asarray(interior_box, dtype=float)
    if box.ndim == 1:
        box = np.tile(box, (dimension, 1))
    if box.shape != (dimension, 2):
        raise ValueError("interior_box must give (lo, hi) per axis")
    lo, hi = box[:, 0], box[:, 1]
    if np.any(hi - lo <= 0):
        raise ValueError("interior box has zero volume")
    h = (hi - lo) / (n_per_side - 1)
    layers = np.floor(collar / h * (1 + 1e-12)).astype(int)
    shape = tuple(int(n_per_side + 2 * k) for k in layers)
    origin = lo - layers * h
    lattice = _Lattice(shape, h, origin)
    idx = lattice.multi_index(np.arange(lattice.n))
    interior = np.all((idx >= layers) & (idx < layers + n_per_side), axis=1)
    weights = np.full(lattice.n, float(np.prod(h)))
    return _finish(PointCloudSpace(weights, interior, lattice), audit)


def build_graph_domain(edges, interior_ids, weights, ids=None, audit: bool = True) -> PointCloudSpace:
    """Shortest-path metric of a weighted undirected graph.

    ``edges`` is an iterable of ``(a, b, length)``; ``weights`` maps every id
    (or is a sequence aligned with ``ids``) to its mass.
    """
    edges = list(edges)
    if ids is None:
        if isinstance(weights, dict):
            ids = list(weights)
        else:
            seen = {}
            for a, b, _ in edges:
                seen.setdefault(a, None)
                seen.setdefault(b, None)
            ids = list(seen)
    ids = list(ids)
    pos = {p: k for k, p in enumerate(ids)}
    n = len(ids)
    rows, cols, vals = [], [], []
    for a, b, length in edges:
        length = float(length)
        if not length > 0:
            raise ValueError("edge lengths must be positive")
        rows.append(pos[a])
        cols.append(pos[b])
        vals.append(length)
    graph = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    ncomp, _ = connected_components(graph, directed=False)
    if ncomp != 1:
        raise ValueError("graph is disconnected; distances would be infinite")
    matrix = shortest_path(graph, method="D", directed=False)
    if isinstance(weights, dict):
        w = np.array([weights[p] for p in ids], dtype=float)
    else:
        w = np.asarray(weights, dtype=float)
    interior_set = set(interior_ids)
    mask = np.array([p in interior_set for p in ids])
    return _finish(PointCloudSpace(w, mask, _Dense(matrix), tuple(ids)), audit)


def build_coordinate_domain(coords, weights, interior, ids=None, audit: bool = True) -> PointCloudSpace:
    """Euclidean point cloud (e.g. read from CSV)."""
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    return _finish(PointCloudSpace(np.asarray(weights, dtype=float), np.asarray(interior, dtype=bool),
                                   _Coordinates(coords), ids), audit)


def from_matrix(matrix, weights, interior, ids=None, audit: bool = True) -> PointCloudSpace:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError("metric matrix must be square")
    return _finish(PointCloudSpace(np.asarray(weights, dtype=float), np.asarray(interior, dtype=bool),
                                   _Dense(matrix), ids), audit)


def from_lattice(shape, spacing, origin, weights, interior, audit: bool = True) -> PointCloudSpace:
    return _finish(PointCloudSpace(np.asarray(weights, dtype=float), np.asarray(interior, dtype=bool),
                                   _Lattice(shape, spacing, origin)), audit)
