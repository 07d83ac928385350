"""Discrete metric measure spaces and domains inside them.

A :class:`MetricMeasureGraph` is a finite weighted graph together with a
positive vertex measure and a metric.  Two metric modes are supported:

* ``"geodesic"`` -- hop distance on the graph scaled by the mesh width ``h``;
  an exact metric (distances are integer multiples of ``h``).
* ``"euclidean"`` -- straight-line distance between vertex coordinates.

A :class:`DomainView` singles out a connected interior vertex set ``D`` with a
designated boundary trace, and carries the derived quantities used throughout:
the boundary distance ``delta``, the intrinsic (inside-``D``) metric, and the
canonical basepoint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, dijkstra

GEODESIC = "geodesic"
EUCLIDEAN = "euclidean"

#: Dense all-pairs distance matrices are cached only below this vertex count.
DENSE_DISTANCE_BUDGET = 5000


class GraphFormatError(ValueError):
    """Raised when an edge-list file does not match the expected layout."""


class DomainError(ValueError):
    """Raised for vertices outside the domain or invalid domain geometry."""


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


class MetricMeasureGraph:
    """Connected weighted graph with vertex measure and a metric.

    Parameters
    ----------
    edges : (m, 2) int array-like
        Undirected edges, each listed once.
    conductances : (m,) positive floats, one per edge.
    measure : (n,) positive floats, the vertex measure ``mu``.
    mesh : float
        Length of one edge step when the metric mode is geodesic.
    metric_mode : ``"geodesic"`` or ``"euclidean"``.
    coordinates : optional (n, k) float array of vertex positions.
    """

    def __init__(self, edges, conductances, measure, mesh=1.0,
                 metric_mode=GEODESIC, coordinates=None):
        measure = np.asarray(measure, dtype=float)
        if measure.ndim != 1 or measure.size == 0:
            raise ValueError("measure must be a nonempty 1-d array")
        if np.any(measure <= 0):
            raise ValueError("all vertex measures must be positive")
        n = measure.size

        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        conductances = np.asarray(conductances, dtype=float).reshape(-1)
        if edges.shape[0] != conductances.size:
            raise ValueError("edges and conductances length mismatch")
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise ValueError("edge endpoint out of range")
        if np.any(edges[:, 0] == edges[:, 1]):
            raise ValueError("self-loops are not allowed")
        if np.any(conductances <= 0):
            raise ValueError("all conductances must be positive")
        if mesh <= 0:
            raise ValueError("mesh must be positive")
        if metric_mode not in (GEODESIC, EUCLIDEAN):
            raise ValueError(f"unknown metric mode {metric_mode!r}")

        if coordinates is not None:
            coordinates = np.asarray(coordinates, dtype=float)
            if coordinates.ndim == 1:
                coordinates = coordinates[:, None]
            if coordinates.shape[0] != n:
                raise ValueError("coordinates row count must equal vertex count")
        if metric_mode == EUCLIDEAN:
            if coordinates is None:
                raise ValueError("euclidean metric mode requires coordinates")
            # identity of indiscernibles: coinciding points break the metric
            uniq = np.unique(coordinates, axis=0)
            if uniq.shape[0] != n:
                raise ValueError("euclidean mode requires pairwise distinct coordinates")

        self.vertex_count = n
        self.edges = edges
        self.conductance_values = conductances
        self.measure = measure
        self.mesh = float(mesh)
        self.metric_mode = metric_mode
        self.coordinates = coordinates

        i, j = edges[:, 0], edges[:, 1]
        data = np.concatenate([conductances, conductances])
        rows = np.concatenate([i, j])
        cols = np.concatenate([j, i])
        self.adjacency = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
        self.adjacency.sum_duplicates()
        if n > 1:
            ncomp, _ = connected_components(self.adjacency, directed=False)
            if ncomp != 1:
                raise ValueError("graph must be connected")

        self._hops = sp.csr_matrix(
            (np.ones(2 * len(edges)), (rows, cols)), shape=(n, n))
        self._dist_rows: dict[int, np.ndarray] = {}
        self._dist_matrix: np.ndarray | None = None
        self._ball_index: BallIndex | None = None

    # -- basic structure ---------------------------------------------------

    @property
    def degrees(self) -> np.ndarray:
        """Weighted degree (sum of incident conductances) per vertex."""
        return np.asarray(self.adjacency.sum(axis=1)).ravel()

    @property
    def total_measure(self) -> float:
        return float(self.measure.sum())

    def neighbors(self, v: int) -> np.ndarray:
        return self.adjacency.indices[
            self.adjacency.indptr[v]:self.adjacency.indptr[v + 1]]

    # -- the metric --------------------------------------------------------

    def distance_row(self, x: int) -> np.ndarray:
        """Distances from ``x`` to every vertex.

        Geodesic rows are BFS hop counts times the mesh, so repeated queries
        are cached; euclidean rows are recomputed (cheap vector norm).
        """
        if self.metric_mode == EUCLIDEAN:
            diff = self.coordinates - self.coordinates[x]
            return np.sqrt(np.einsum("ij,ij->i", diff, diff))
        row = self._dist_rows.get(x)
        if row is None:
            hops = dijkstra(self._hops, directed=False, unweighted=True,
                            indices=x)
            row = hops * self.mesh
            self._dist_rows[x] = row
        return row

    def distance_matrix(self) -> np.ndarray:
        """All-pairs distances; guarded by :data:`DENSE_DISTANCE_BUDGET`."""
        if self._dist_matrix is None:
            n = self.vertex_count
            if n > DENSE_DISTANCE_BUDGET:
                raise MemoryError(
                    f"all-pairs distance matrix over {n} vertices exceeds the "
                    f"dense budget ({DENSE_DISTANCE_BUDGET})")
            if self.metric_mode == EUCLIDEAN:
                from scipy.spatial.distance import squareform, pdist
                self._dist_matrix = squareform(pdist(self.coordinates))
            else:
                hops = dijkstra(self._hops, directed=False, unweighted=True)
                self._dist_matrix = hops * self.mesh
        return self._dist_matrix

    def distance(self, x: int, y: int) -> float:
        """The metric d(x, y)."""
        if x == y:
            return 0.0
        if self.metric_mode == EUCLIDEAN:
            return float(np.linalg.norm(self.coordinates[x] - self.coordinates[y]))
        return float(self.distance_row(x)[y])

    def diameter(self) -> float:
        return float(self.distance_matrix().max())

    # -- balls and volumes ---------------------------------------------------

    def ball_index(self) -> "BallIndex":
        if self._ball_index is None:
            self._ball_index = BallIndex(self)
        return self._ball_index

    def ball(self, x: int, r: float) -> np.ndarray:
        """Vertices of the open ball ``{y : d(x, y) < r}``."""
        return self.ball_index().ball(x, r)

    def ball_volume(self, x: int, r: float) -> float:
        """``V(x, r)``, the measure of the open ball around ``x``."""
        return self.ball_index().volume(x, r)

    # -- serialization -------------------------------------------------------

    def to_edge_list_text(self) -> str:
        """Plain-text edge-list serialization (17 significant digits).

        Layout: a header ``vertices N mesh H mode {geodesic|euclidean}``,
        one ``v i x1 ... xk m`` line per vertex (coordinates then measure),
        then one ``e i j c`` line per edge.
        """
        lines = [f"vertices {self.vertex_count} mesh {_fmt(self.mesh)} "
                 f"mode {self.metric_mode}"]
        for v in range(self.vertex_count):
            coords = ""
            if self.coordinates is not None:
                coords = " ".join(_fmt(c) for c in self.coordinates[v]) + " "
            lines.append(f"v {v} {coords}{_fmt(self.measure[v])}")
        for (i, j), c in zip(self.edges, self.conductance_values):
            lines.append(f"e {i} {j} {_fmt(c)}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_edge_list_text())

    @classmethod
    def from_edge_list_text(cls, text: str) -> "MetricMeasureGraph":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise GraphFormatError("empty graph file")
        head = lines[0].split()
        if (len(head) != 6 or head[0] != "vertices" or head[2] != "mesh"
                or head[4] != "mode"):
            raise GraphFormatError(f"bad header line: {lines[0]!r}")
        try:
            n = int(head[1])
            mesh = float(head[3])
        except ValueError as exc:
            raise GraphFormatError(f"bad header numbers: {lines[0]!r}") from exc
        mode = head[5]
        if mode not in (GEODESIC, EUCLIDEAN):
            raise GraphFormatError(f"unknown metric mode {mode!r}")

        measure = np.full(n, np.nan)
        coords: list[list[float]] | None = None
        ndim = None
        edges, conds = [], []
        for ln in lines[1:]:
            parts = ln.split()
            if parts[0] == "v":
                idx = int(parts[1])
                vals = [float(t) for t in parts[2:]]
                if not vals:
                    raise GraphFormatError(f"vertex line missing measure: {ln!r}")
                k = len(vals) - 1
                if ndim is None:
                    ndim = k
                    if k:
                        coords = [[0.0] * k for _ in range(n)]
                elif k != ndim:
                    raise GraphFormatError("inconsistent coordinate dimension")
                if not 0 <= idx < n:
                    raise GraphFormatError(f"vertex index out of range: {ln!r}")
                if k:
                    coords[idx] = vals[:-1]
                measure[idx] = vals[-1]
            elif parts[0] == "e":
                if len(parts) != 4:
                    raise GraphFormatError(f"bad edge line: {ln!r}")
                edges.append((int(parts[1]), int(parts[2])))
                conds.append(float(parts[3]))
            else:
                raise GraphFormatError(f"unknown record type: {ln!r}")
        if np.any(np.isnan(measure)):
            raise GraphFormatError("missing vertex lines")
        return cls(np.array(edges), np.array(conds), measure, mesh=mesh,
                   metric_mode=mode,
                   coordinates=None if coords is None else np.array(coords))

    @classmethod
    def load(cls, path) -> "MetricMeasureGraph":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_edge_list_text(fh.read())


class BallIndex:
    """Per-center sorted distance lists for ball membership and volumes.

    For each queried center the distances to all vertices are sorted once;
    ``B(x, r)`` membership and ``V(x, r)`` then reduce to a binary search.
    Balls are open (strict inequality).
    """

    def __init__(self, graph: MetricMeasureGraph):
        self.graph = graph
        self._cache: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    def _entry(self, x: int):
        e = self._cache.get(x)
        if e is None:
            d = self.graph.distance_row(x)
            order = np.argsort(d, kind="stable")
            sorted_d = d[order]
            cum = np.cumsum(self.graph.measure[order])
            e = (order, sorted_d, cum)
            self._cache[x] = e
        return e

    def ball(self, x: int, r: float) -> np.ndarray:
        order, sorted_d, _ = self._entry(x)
        k = int(np.searchsorted(sorted_d, r, side="left"))
        return np.sort(order[:k])

    def volume(self, x: int, r: float) -> float:
        _, sorted_d, cum = self._entry(x)
        k = int(np.searchsorted(sorted_d, r, side="left"))
        return 0.0 if k == 0 else float(cum[k - 1])

    def volumes(self, x: int, radii) -> np.ndarray:
        """Vectorized ``V(x, r)`` for an array of radii."""
        _, sorted_d, cum = self._entry(x)
        k = np.searchsorted(sorted_d, np.asarray(radii, dtype=float),
                            side="left")
        out = np.zeros(k.shape, dtype=float)
        nz = k > 0
        out[nz] = cum[k[nz] - 1]
        return out


class DomainView:
    """A connected interior vertex set with designated boundary trace.

    ``boundary`` defaults to the adjacency trace: all vertices outside the
    interior with an edge into it.  Generators may designate a different
    trace set (e.g. slit faces, or the far faces of a carpet).
    """

    def __init__(self, parent: MetricMeasureGraph, interior,
                 boundary=None):
        self.parent = parent
        interior = np.unique(np.asarray(interior, dtype=np.int64))
        if interior.size == 0:
            raise DomainError("interior must be nonempty")
        if interior.min() < 0 or interior.max() >= parent.vertex_count:
            raise DomainError("interior vertex out of range")

        inside = np.zeros(parent.vertex_count, dtype=bool)
        inside[interior] = True
        if boundary is None:
            adj = parent.adjacency
            touch = np.zeros(parent.vertex_count, dtype=bool)
            for v in interior:
                touch[parent.neighbors(v)] = True
            boundary = np.flatnonzero(touch & ~inside)
        else:
            boundary = np.unique(np.asarray(boundary, dtype=np.int64))
            if np.any(inside[boundary]):
                raise DomainError("boundary overlaps interior")
        if boundary.size == 0:
            raise DomainError("boundary must be nonempty")

        self.interior = interior
        self.boundary = boundary
        self._inside = inside
        self.local_index = np.full(parent.vertex_count, -1, dtype=np.int64)
        self.local_index[interior] = np.arange(interior.size)

        # induced interior subgraph (for the intrinsic metric and chains)
        sub = parent.adjacency[interior][:, interior].tocsr()
        self._interior_adj = sub
        if interior.size > 1:
            ncomp, _ = connected_components(sub, directed=False)
            if ncomp != 1:
                raise DomainError("interior must be connected through its own edges")

        self.delta = self._boundary_distances()
        if np.any(self.delta <= 0):
            raise DomainError("boundary distance must be positive on the interior")
        best = np.argmax(self.delta)  # ties: argmax returns the lowest index
        self.basepoint = int(interior[best])
        self._di_rows: dict[int, np.ndarray] = {}
        self._di_matrix: np.ndarray | None = None

    # -- membership ----------------------------------------------------------

    @property
    def size(self) -> int:
        return int(self.interior.size)

    def contains(self, v: int) -> bool:
        return bool(self._inside[v])

    def require_interior(self, v: int) -> int:
        if not self.contains(v):
            raise DomainError(f"vertex {v} is not in the domain interior")
        return int(self.local_index[v])

    @property
    def interior_measure(self) -> np.ndarray:
        return self.parent.measure[self.interior]

    # -- boundary distance ----------------------------------------------------

    def _boundary_distances(self) -> np.ndarray:
        parent = self.parent
        if parent.metric_mode == EUCLIDEAN:
            bc = parent.coordinates[self.boundary]
            ic = parent.coordinates[self.interior]
            d2 = ((ic[:, None, :] - bc[None, :, :]) ** 2).sum(axis=2)
            return np.sqrt(d2.min(axis=1))
        hops = dijkstra(parent._hops, directed=False, unweighted=True,
                        indices=self.boundary, min_only=True)
        return hops[self.interior] * parent.mesh

    def boundary_distance(self, x: int) -> float:
        """``delta(x) = d(x, boundary)`` for interior ``x``."""
        return float(self.delta[self.require_interior(x)])

    # -- intrinsic metric ------------------------------------------------------

    def _interior_weights(self) -> sp.csr_matrix:
        parent = self.parent
        sub = self._interior_adj.tocoo()
        if parent.metric_mode == EUCLIDEAN:
            pts = parent.coordinates[self.interior]
            w = np.linalg.norm(pts[sub.row] - pts[sub.col], axis=1)
        else:
            w = np.full(sub.data.shape, parent.mesh)
        return sp.csr_matrix((w, (sub.row, sub.col)),
                             shape=self._interior_adj.shape)

    def intrinsic_row(self, x: int) -> np.ndarray:
        """Intrinsic distances from interior ``x`` to every interior vertex."""
        lx = self.require_interior(x)
        row = self._di_rows.get(lx)
        if row is None:
            row = dijkstra(self._interior_weights(), directed=False, indices=lx)
            self._di_rows[lx] = row
        return row

    def intrinsic_matrix(self) -> np.ndarray:
        if self._di_matrix is None:
            if self.size > DENSE_DISTANCE_BUDGET:
                raise MemoryError("intrinsic distance matrix exceeds dense budget")
            self._di_matrix = dijkstra(self._interior_weights(), directed=False)
        return self._di_matrix

    def intrinsic_distance(self, x: int, y: int) -> float:
        """Shortest-path distance between x and y through interior edges only."""
        ly = self.require_interior(y)
        return float(self.intrinsic_row(x)[ly])

    # -- derived quantities ------------------------------------------------

    def rxy(self, x: int, y: int) -> float:
        """max(delta(x), delta(y), d(x, y)) -- the joint scale of the pair."""
        dx = self.boundary_distance(x)
        dy = self.boundary_distance(y)
        return max(dx, dy, self.parent.distance(x, y))

    def half_ball_split(self, y: int) -> tuple[np.ndarray, np.ndarray]:
        """Partition the interior into ``B(y) = B(y, delta(y)/2)`` and its complement."""
        r = self.boundary_distance(y) / 2.0
        d = self.parent.distance_row(y)[self.interior]
        near = d < r
        return self.interior[near], self.interior[~near]

    # -- serialization -------------------------------------------------------

    def to_text(self) -> str:
        lines = [f"domain interior {self.size} boundary {self.boundary.size}"]
        lines += [f"i {v}" for v in self.interior]
        lines += [f"b {v}" for v in self.boundary]
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())

    @classmethod
    def from_text(cls, parent: MetricMeasureGraph, text: str) -> "DomainView":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("domain "):
            raise GraphFormatError("bad domain file header")
        interior = [int(ln.split()[1]) for ln in lines[1:] if ln.startswith("i ")]
        boundary = [int(ln.split()[1]) for ln in lines[1:] if ln.startswith("b ")]
        return cls(parent, interior, boundary)

    @classmethod
    def load(cls, parent: MetricMeasureGraph, path) -> "DomainView":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_text(parent, fh.read())


# ---------------------------------------------------------------------------
# operation-style wrappers


def distance(g: MetricMeasureGraph, x: int, y: int) -> float:
    return g.distance(x, y)


def ball_volume(g: MetricMeasureGraph, x: int, r: float) -> float:
    if r <= 0:
        raise ValueError("ball radius must be positive")
    return g.ball_volume(x, r)


def boundary_distance(dom: DomainView, x: int) -> float:
    return dom.boundary_distance(x)


def intrinsic_distance(dom: DomainView, x: int, y: int) -> float:
    return dom.intrinsic_distance(x, y)


def rxy(dom: DomainView, x: int, y: int) -> float:
    return dom.rxy(x, y)


def half_ball_split(dom: DomainView, y: int) -> tuple[np.ndarray, np.ndarray]:
    return dom.half_ball_split(y)
