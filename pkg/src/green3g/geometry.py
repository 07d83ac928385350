"""Geometric machinery: inner-uniform curves, corkscrew points, the reference
sets around a pair, Harnack chains, and relatively connected annuli.

Corkscrew and reference-set constructions use the ambient parent metric; the
inequalities defining inner-uniform curves are certified with true intrinsic
distances, never with along-path surrogates.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components, dijkstra

from .mmgraph import DomainError, DomainView, MetricMeasureGraph

#: default clearance/length trade-off weights for the curve sweep
CURVE_WEIGHTS = (0.0,) + tuple(np.logspace(-1.0, 1.0, 8))


# ---------------------------------------------------------------------------
# inner-uniform curves


@dataclass
class CurveRecord:
    """A candidate curve with its certified constants.

    ``c`` is the clearance constant: min over curve vertices of
    ``delta(v) / min(d_i(x, v), d_i(v, y))`` (endpoints excluded, where the
    constraint is vacuous).  ``C`` is the stretch ``length / d_i(x, y)``.
    """

    x: int
    y: int
    vertices: np.ndarray
    length: float
    c: float
    C: float

    def verify(self, dom: DomainView, tol: float = 1e-12) -> bool:
        """Re-check both defining inequalities against stored constants."""
        if self.x == self.y:
            return True
        di_xy = dom.intrinsic_distance(self.x, self.y)
        if self.length > self.C * di_xy * (1 + tol):
            return False
        from_x = dom.intrinsic_row(self.x)[dom.local_index[self.vertices]]
        from_y = dom.intrinsic_row(self.y)[dom.local_index[self.vertices]]
        near = np.minimum(from_x, from_y)
        delta = dom.delta[dom.local_index[self.vertices]]
        ok = near <= 0
        ok |= delta >= self.c * near * (1 - tol)
        return bool(np.all(ok))


def _path_from_predecessors(pred: np.ndarray, target: int) -> list[int]:
    path = [target]
    while pred[path[-1]] >= 0:
        path.append(int(pred[path[-1]]))
    return path[::-1]


def find_inner_uniform_curve(dom: DomainView, x: int, y: int,
                             weights=CURVE_WEIGHTS) -> CurveRecord:
    """Search for a curve from x to y maximizing the clearance constant.

    Candidates come from shortest paths under edge costs penalized by
    ``(delta_max / min(delta(u), delta(v)))**w`` for a sweep of trade-off
    weights ``w`` (w = 0 is the plain intrinsic geodesic).  The returned
    record carries the best achieved ``c`` among candidates, with its ``C``.
    """
    lx = dom.require_interior(x)
    ly = dom.require_interior(y)
    if x == y:
        return CurveRecord(x, y, np.array([x]), 0.0, np.inf, 1.0)

    parent = dom.parent
    base = dom._interior_weights().tocoo()
    delta = dom.delta
    dmax = float(delta.max())
    clearance = np.minimum(delta[base.row], delta[base.col]) / dmax

    di_xy = dom.intrinsic_distance(x, y)
    from_x = dom.intrinsic_row(x)
    from_y = dom.intrinsic_row(y)

    best: CurveRecord | None = None
    seen = set()
    for w in weights:
        cost = base.data * clearance ** (-float(w))
        import scipy.sparse as sp
        wgraph = sp.csr_matrix((cost, (base.row, base.col)),
                               shape=(dom.size, dom.size))
        _, pred = dijkstra(wgraph, directed=False, indices=lx,
                           return_predecessors=True)
        locs = _path_from_predecessors(pred, ly)
        key = tuple(locs)
        if key in seen:
            continue
        seen.add(key)
        verts = dom.interior[locs]
        length = float(base.data[0] * 0 + sum(
            parent.distance(int(a), int(b)) if parent.metric_mode == "euclidean"
            else parent.mesh
            for a, b in zip(verts[:-1], verts[1:])))
        near = np.minimum(from_x[locs], from_y[locs])
        mask = near > 0
        c = float((delta[locs][mask] / near[mask]).min()) if mask.any() else np.inf
        C = length / di_xy
        rec = CurveRecord(x, y, verts, length, c, C)
        if best is None or (rec.c, -rec.C) > (best.c, -best.C):
            best = rec
    return best


@dataclass
class InnerUniformCertificate:
    """Worst achieved curve constants over a sampled set of pairs."""

    c: float
    C: float
    worst_c_pair: tuple[int, int]
    worst_C_pair: tuple[int, int]
    records: list[CurveRecord]
    n_pairs: int
    seed: int


def certify_inner_uniformity(dom: DomainView, n_samples: int, seed: int,
                             weights=CURVE_WEIGHTS) -> InnerUniformCertificate:
    """Sample interior pairs and record the worst certified (c, C)."""
    if n_samples < 1:
        raise ValueError("need at least one sampled pair")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, dom.size, size=(n_samples, 2))
    idx = idx[idx[:, 0] != idx[:, 1]]
    records = []
    worst_c, worst_C = np.inf, 1.0
    pc = pC = (int(dom.interior[0]), int(dom.interior[0]))
    for lx, ly in idx:
        rec = find_inner_uniform_curve(dom, int(dom.interior[lx]),
                                       int(dom.interior[ly]), weights)
        records.append(rec)
        if rec.c < worst_c:
            worst_c, pc = rec.c, (rec.x, rec.y)
        if rec.C > worst_C:
            worst_C, pC = rec.C, (rec.x, rec.y)
    return InnerUniformCertificate(worst_c, worst_C, pc, pC, records,
                                   len(records), seed)


# ---------------------------------------------------------------------------
# corkscrew points


@dataclass
class CorkscrewResult:
    """Outcome of the exhaustive corkscrew search at (xi, r, M).

    ``vertex`` is the interior vertex of maximal boundary distance within the
    ambient ball around ``xi``; success means it clears ``r / M``.  ``granular``
    flags radii below twice the mesh, where the lattice cannot resolve the
    condition meaningfully.
    """

    xi: int
    r: float
    M: float
    vertex: int | None
    delta: float
    found: bool
    granular: bool
    n_candidates: int


def corkscrew_point(dom: DomainView, xi: int, r: float, M: float
                    ) -> CorkscrewResult:
    """Exhaustively search ``{v in D : d(v, xi) < r}`` for ``delta(v) > r/M``."""
    if xi not in set(dom.boundary.tolist()):
        raise DomainError(f"vertex {xi} is not a boundary vertex")
    if r <= 0 or M <= 0:
        raise ValueError("need r > 0 and M > 0")
    d = dom.parent.distance_row(xi)[dom.interior]
    cand = np.flatnonzero(d < r)
    granular = r < 2 * dom.parent.mesh
    if cand.size == 0:
        return CorkscrewResult(xi, r, M, None, 0.0, False, granular, 0)
    deltas = dom.delta[cand]
    k = int(np.argmax(deltas))
    best = float(deltas[k])
    return CorkscrewResult(xi, r, M, int(dom.interior[cand[k]]), best,
                           best > r / M, granular, int(cand.size))


def corkscrew_set(dom: DomainView, xi: int, rho: float, M: float) -> np.ndarray:
    """All interior vertices with ``d(v, xi) < rho`` and ``delta(v) > rho/M``."""
    d = dom.parent.distance_row(xi)[dom.interior]
    mask = (d < rho) & (dom.delta > rho / M)
    return dom.interior[mask]


# ---------------------------------------------------------------------------
# reference sets around a pair


@dataclass
class BSet:
    """Reference vertices near a pair and away from the boundary.

    For ``r(x,y) < eps`` these are the interior vertices with
    ``delta > r(x,y)/M`` within ``5 r(x,y)`` of both points; otherwise the
    set collapses to the basepoint.  Emptiness of the fine branch is a
    lattice-granularity artifact and is flagged, not raised.
    """

    x: int
    y: int
    r: float
    branch: str           # "fine" or "basepoint"
    vertices: np.ndarray
    flagged_empty: bool


def b_set(dom: DomainView, x: int, y: int, M: float, eps: float) -> BSet:
    r = dom.rxy(x, y)
    if r >= eps:
        return BSet(x, y, r, "basepoint",
                    np.array([dom.basepoint], dtype=np.int64), False)
    dx = dom.parent.distance_row(x)[dom.interior]
    dy = dom.parent.distance_row(y)[dom.interior]
    mask = (dom.delta > r / M) & (dx < 5 * r) & (dy < 5 * r)
    verts = dom.interior[mask]
    return BSet(x, y, r, "fine", verts, verts.size == 0)


# ---------------------------------------------------------------------------
# Harnack chains


@dataclass
class HarnackChain:
    """A chain of interior balls (center, radius) joining x to y.

    The canonical family has one ball per interior vertex with radius
    ``delta(v)/2``.  ``x`` lies in the M-shrink of the first ball, ``y`` in
    that of the last, and consecutive shrunken balls overlap in the metric
    sense ``d(u, v) < (rad_u + rad_v)/M``.
    """

    x: int
    y: int
    M: float
    centers: np.ndarray
    radii: np.ndarray

    @property
    def length(self) -> int:
        return int(self.centers.size)

    def verify(self, dom: DomainView, tol: float = 1e-12) -> bool:
        parent = dom.parent
        loc = dom.local_index[self.centers]
        if np.any(loc < 0):
            return False
        if np.any(np.abs(self.radii - dom.delta[loc] / 2.0) > tol):
            return False
        # every ball inside the domain
        for c, rad in zip(self.centers, self.radii):
            ball = parent.ball(int(c), rad)
            if not np.all(dom._inside[ball]):
                return False
        if parent.distance(self.x, int(self.centers[0])) >= self.radii[0] / self.M:
            return False
        if parent.distance(self.y, int(self.centers[-1])) >= self.radii[-1] / self.M:
            return False
        for (a, ra), (b, rb) in zip(zip(self.centers[:-1], self.radii[:-1]),
                                    zip(self.centers[1:], self.radii[1:])):
            if parent.distance(int(a), int(b)) >= (ra + rb) / self.M:
                return False
        return True


def harnack_chain(dom: DomainView, x: int, y: int, M: float) -> HarnackChain:
    """Shortest chain over the canonical ball family, by breadth-first search."""
    if M <= 1:
        raise ValueError("chain parameter M must exceed 1")
    lx = dom.require_interior(x)
    ly = dom.require_interior(y)
    radii = dom.delta / 2.0

    dx = dom.parent.distance_row(x)[dom.interior]
    dy = dom.parent.distance_row(y)[dom.interior]
    starts = np.flatnonzero(dx < radii / M)
    goals = dy < radii / M
    if starts.size == 0:      # x's own ball always qualifies at distance 0
        starts = np.array([lx])
    prev = np.full(dom.size, -2, dtype=np.int64)
    prev[starts] = -1
    queue = deque(int(s) for s in starts)
    end = -1
    if goals[starts].any():
        end = int(starts[np.argmax(goals[starts])])
    while queue and end < 0:
        u = queue.popleft()
        du = dom.parent.distance_row(int(dom.interior[u]))[dom.interior]
        nbrs = np.flatnonzero((du < (radii[u] + radii) / M) & (prev == -2))
        for v in nbrs:
            prev[v] = u
            if goals[v]:
                end = int(v)
                break
            queue.append(int(v))
    if end < 0:
        raise DomainError("no Harnack chain found; domain disconnected?")
    locs = []
    v = end
    while v >= 0:
        locs.append(v)
        v = int(prev[v])
    locs = locs[::-1]
    centers = dom.interior[locs]
    return HarnackChain(x, y, M, centers, radii[locs])


def chain_length_samples(dom: DomainView, n_pairs: int, M: float, seed: int
                         ) -> tuple[np.ndarray, np.ndarray]:
    """Chain lengths and the matching log terms for sampled interior pairs.

    Returns ``(N, t)`` with ``t = log(d_i(x, y) / min(delta) + 1)``, the
    regressor for the logarithmic chain-length law.
    """
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, dom.size, size=(n_pairs, 2))
    lengths, terms = [], []
    for lx, ly in idx:
        x, y = int(dom.interior[lx]), int(dom.interior[ly])
        chain = harnack_chain(dom, x, y, M)
        di = dom.intrinsic_row(x)[ly]
        dmin = min(dom.delta[lx], dom.delta[ly])
        lengths.append(chain.length)
        terms.append(np.log(di / dmin + 1.0))
    return np.asarray(lengths, dtype=float), np.asarray(terms)


def regression_r2(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """Least-squares fit y = a x + b; returns (slope, intercept, R^2)."""
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(((y - pred) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


# ---------------------------------------------------------------------------
# relatively connected annuli


@dataclass
class RcaResult:
    connected: bool
    outer_count: int
    component_labels: np.ndarray
    annulus_vertices: np.ndarray


def check_rca(graph: MetricMeasureGraph, o: int, R: float, kappa: float
              ) -> RcaResult:
    """Test whether the annulus ``R/2 < d(o, .) < R`` sits inside a single
    connected component of the thickened annulus ``R/kappa < d(o, .) < R``."""
    if kappa < 2:
        raise ValueError("need kappa >= 2")
    d = graph.distance_row(o)
    outer = (d > R / 2.0) & (d < R)
    wide = (d > R / kappa) & (d < R)
    if not outer.any():
        raise ValueError("empty annulus")
    verts = np.flatnonzero(wide)
    sub = graph.adjacency[verts][:, verts]
    _, labels = connected_components(sub, directed=False)
    outer_local = labels[np.isin(verts, np.flatnonzero(outer))]
    return RcaResult(bool(np.unique(outer_local).size == 1),
                     int(outer.sum()), labels, verts)
