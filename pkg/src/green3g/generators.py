"""Construction of the example spaces: grids, slit square, cusp corridor,
Sierpinski-carpet pre-fractals, and the classical ball Green's function.

All generated graphs use the geodesic metric (hop distance scaled by the
mesh), unit conductances, and the measure natural to the construction:
``h**n`` per lattice cell on grids, the self-similar cell measure on carpets.
"""

from __future__ import annotations

import math

import numpy as np

from .mmgraph import GEODESIC, DomainView, MetricMeasureGraph

DEFAULT_VERTEX_BUDGET = 200_000


class BudgetError(RuntimeError):
    """Raised when a construction would exceed the configured vertex budget."""


def _check_budget(count: int, budget: int) -> None:
    if count > budget:
        raise BudgetError(f"construction needs {count} vertices, "
                          f"budget is {budget}")


def _lattice_edges(coords_int: np.ndarray) -> np.ndarray:
    """Edges between integer points differing by +1 in one coordinate."""
    index = {tuple(c): i for i, c in enumerate(coords_int)}
    edges = []
    dim = coords_int.shape[1]
    for i, c in enumerate(coords_int):
        for ax in range(dim):
            nb = list(c)
            nb[ax] += 1
            j = index.get(tuple(nb))
            if j is not None:
                edges.append((i, j))
    return np.array(edges, dtype=np.int64).reshape(-1, 2)


# ---------------------------------------------------------------------------
# cube grids


def gen_cube_grid(n: int, m: int, budget: int = DEFAULT_VERTEX_BUDGET
                  ) -> tuple[MetricMeasureGraph, DomainView]:
    """Lattice discretization of the unit cube ``[0, 1]**n``.

    ``(m+1)**n`` vertices at spacing ``h = 1/m``, unit conductances and
    measure ``h**n`` per vertex.  The domain interior is the strict interior
    of the cube; the boundary trace is the outer shell.
    """
    if n < 1 or m < 2:
        raise ValueError("need n >= 1 and m >= 2")
    _check_budget((m + 1) ** n, budget)
    axes = [np.arange(m + 1)] * n
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    h = 1.0 / m
    edges = _lattice_edges(grid)
    g = MetricMeasureGraph(edges, np.ones(len(edges)),
                           np.full(len(grid), h ** n), mesh=h,
                           metric_mode=GEODESIC, coordinates=grid * h)
    on_shell = np.any((grid == 0) | (grid == m), axis=1)
    interior = np.flatnonzero(~on_shell)
    dom = DomainView(g, interior, boundary=np.flatnonzero(on_shell))
    return g, dom


# ---------------------------------------------------------------------------
# slit square


def gen_slit_square(m: int, budget: int = DEFAULT_VERTEX_BUDGET
                    ) -> tuple[MetricMeasureGraph, DomainView]:
    """Unit square with a horizontal half-open slit from the left edge to the
    center: ``{(x, 1/2) : 0 <= x < 1/2}``.

    The slit vertices are kept in the parent graph with all their grid edges
    and designated as boundary trace.  The ambient metric therefore still
    crosses the slit (two straddling points are ``2h`` apart) while the
    intrinsic metric must go around the tip, which is what makes the domain
    inner uniform but not uniform.  Both slit faces are absorbed by the same
    trace vertices.
    """
    if m < 4 or m % 2:
        raise ValueError("need even m >= 4")
    _check_budget((m + 1) ** 2, budget)
    g, _ = gen_cube_grid(2, m, budget=budget)
    grid = np.rint(g.coordinates * m).astype(int)
    on_shell = np.any((grid == 0) | (grid == m), axis=1)
    on_slit = (grid[:, 1] == m // 2) & (grid[:, 0] < m // 2)
    interior = np.flatnonzero(~on_shell & ~on_slit)
    boundary = np.flatnonzero(on_shell | on_slit)
    dom = DomainView(g, interior, boundary=boundary)
    return g, dom


# ---------------------------------------------------------------------------
# cusp corridor


def gen_cusp_corridor(m: int, p: float, budget: int = DEFAULT_VERTEX_BUDGET
                      ) -> tuple[MetricMeasureGraph, DomainView]:
    """Power-cusp corridor ``{0 < x < 1, |y| < x**p}`` on the ``h = 1/m`` lattice.

    For ``p > 1`` the corridor pinches at the origin faster than linearly,
    which defeats the corkscrew condition there at small scales.  The parent
    graph is the corridor plus its adjacency trace.
    """
    if p < 1:
        raise ValueError("need exponent p >= 1")
    if m < 4:
        raise ValueError("need m >= 4")
    h = 1.0 / m
    jmax = m + 1

    def inside(i: int, j: int) -> bool:
        x = i * h
        return 0 < x < 1 and abs(j * h) < x ** p

    cells = {}
    for i in range(1, m):
        for j in range(-jmax, jmax + 1):
            if inside(i, j):
                cells[(i, j)] = True
    # adjacency trace around the corridor
    trace = set()
    for (i, j) in cells:
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nb = (i + di, j + dj)
            if nb not in cells:
                trace.add(nb)
    points = sorted(cells) + sorted(trace)
    _check_budget(len(points), budget)
    coords_int = np.array(points, dtype=np.int64)
    edges = _lattice_edges(coords_int)
    g = MetricMeasureGraph(edges, np.ones(len(edges)),
                           np.full(len(points), h ** 2), mesh=h,
                           metric_mode=GEODESIC, coordinates=coords_int * h)
    interior = np.arange(len(cells))
    boundary = np.arange(len(cells), len(points))
    dom = DomainView(g, interior, boundary=boundary)
    return g, dom


# ---------------------------------------------------------------------------
# Sierpinski carpets


def hausdorff_dimension(n: int) -> float:
    """Hausdorff dimension ``log(3**n - 1)/log 3`` of the n-dimensional carpet."""
    if n < 2:
        raise ValueError("carpet dimension needs n >= 2")
    return math.log(3 ** n - 1) / math.log(3)


def carpet_cells(n: int, level: int) -> np.ndarray:
    """Integer coordinates of the retained side-``3**-level`` cells.

    Subdivide the cube into ``3**n`` sub-cells per stage and drop the central
    one; a level-``level`` cell survives iff none of its base-3 digit tuples
    is all ones.
    """
    cells = np.zeros((1, n), dtype=np.int64)
    digits = np.stack(np.meshgrid(*([np.arange(3)] * n), indexing="ij"),
                      axis=-1).reshape(-1, n)
    digits = digits[~np.all(digits == 1, axis=1)]
    for _ in range(level):
        cells = (3 * cells[:, None, :] + digits[None, :, :]).reshape(-1, n)
    order = np.lexsort(cells.T[::-1])
    return cells[order]


def gen_carpet(n: int, level: int, subdivide: int = 1,
               budget: int = DEFAULT_VERTEX_BUDGET
               ) -> tuple[MetricMeasureGraph, DomainView]:
    """Cell-adjacency graph of the level-``level`` carpet pre-fractal.

    One vertex per retained cell (optionally subdivided ``subdivide**n``-fold
    for metric resolution), edges between face-adjacent cells, self-similar
    measure ``(3**n - 1)**-level`` split evenly over subdivisions.  The domain
    is the carpet minus the trace set ``E`` of cells meeting a far face
    ``x_j = 1``; those cells are the designated boundary.
    """
    if n not in (2, 3):
        raise ValueError("carpet generator supports n in {2, 3}")
    if level < 0 or subdivide < 1:
        raise ValueError("need level >= 0 and subdivide >= 1")
    count = (3 ** n - 1) ** level * subdivide ** n
    _check_budget(count, budget)

    coarse = carpet_cells(n, level)
    if subdivide == 1:
        cells = coarse
    else:
        offs = np.stack(np.meshgrid(*([np.arange(subdivide)] * n),
                                    indexing="ij"), axis=-1).reshape(-1, n)
        cells = (subdivide * coarse[:, None, :] + offs[None, :, :]).reshape(-1, n)
        order = np.lexsort(cells.T[::-1])
        cells = cells[order]

    side = 3 ** level * subdivide
    h = 1.0 / side
    mu = (3 ** n - 1.0) ** (-level) / subdivide ** n
    edges = _lattice_edges(cells)
    g = MetricMeasureGraph(edges, np.ones(len(edges)),
                           np.full(len(cells), mu), mesh=h,
                           metric_mode=GEODESIC,
                           coordinates=(cells + 0.5) * h)
    on_trace = np.any(cells == side - 1, axis=1)
    interior = np.flatnonzero(~on_trace)
    dom = DomainView(g, interior, boundary=np.flatnonzero(on_trace))
    return g, dom


def gen_carpet_ninth(n: int, level: int, budget: int = DEFAULT_VERTEX_BUDGET
                     ) -> tuple[MetricMeasureGraph, DomainView]:
    """The 1/9-scale copy of the carpet domain inside the level ``level + 2``
    pre-fractal.

    The parent is the full carpet two levels deeper; the domain interior is
    the corner copy ``(1/9) (F minus E)``, whose graph boundary picks up both
    the scaled trace faces and the surrounding carpet cells.
    """
    g, _ = gen_carpet(n, level + 2, budget=budget)
    side_fine = 3 ** (level + 2)
    side_copy = 3 ** level
    cells = np.rint(g.coordinates * side_fine - 0.5).astype(np.int64)
    in_copy = np.all(cells < side_copy, axis=1)
    on_copy_trace = in_copy & np.any(cells == side_copy - 1, axis=1)
    interior = np.flatnonzero(in_copy & ~on_copy_trace)
    dom = DomainView(g, interior)  # boundary = adjacency trace
    return g, dom


# ---------------------------------------------------------------------------
# classical ball Green's function


def unit_ball_volume(n: int) -> float:
    """Volume of the unit ball in R^n."""
    return math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0)


def analytic_ball_green(n: int, x, y):
    """Classical Green's function of the open unit ball in R^n, n >= 3.

    ``G(x, y) = c_n (|x-y|**(2-n) - (|y| |x - y/|y|^2|)**(2-n))`` with
    ``c_n = 1/(n (n-2) alpha(n))``, and the radial branch
    ``G(x, 0) = c_n (|x|**(2-n) - 1)``.  Accepts single points or batches
    (rows of an array); raises if a point lies outside the closed ball or if
    ``x == y``.
    """
    if n < 3:
        raise ValueError("classical kernel needs n >= 3")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    single = x.ndim == 1 and y.ndim == 1
    x = np.atleast_2d(x)
    y = np.atleast_2d(y)
    if x.shape[1] != n or y.shape[1] != n:
        raise ValueError("points must have dimension n")
    x, y = np.broadcast_arrays(x, y)

    nx = np.linalg.norm(x, axis=1)
    ny = np.linalg.norm(y, axis=1)
    if np.any(nx > 1 + 1e-12) or np.any(ny > 1 + 1e-12):
        raise ValueError("points must lie in the closed unit ball")
    diff = np.linalg.norm(x - y, axis=1)
    if np.any(diff == 0):
        raise ValueError("Green's function diverges at x == y")

    c_n = 1.0 / (n * (n - 2) * unit_ball_volume(n))
    out = np.empty(x.shape[0])
    origin = ny == 0
    if np.any(origin):
        out[origin] = c_n * (nx[origin] ** (2 - n) - 1.0)
    rest = ~origin
    if np.any(rest):
        yr = y[rest]
        nyr = ny[rest]
        kelvin = np.linalg.norm(x[rest] - yr / (nyr ** 2)[:, None], axis=1)
        out[rest] = c_n * (diff[rest] ** (2 - n) - (nyr * kelvin) ** (2 - n))
    return float(out[0]) if single else out


def sample_ball_points(n: int, count: int, rng, radius: float = 1.0
                       ) -> np.ndarray:
    """Uniform sample of ``count`` points from the open ball of given radius."""
    pts = rng.standard_normal((count, n))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    u = rng.random(count) ** (1.0 / n)
    return radius * pts * u[:, None]
