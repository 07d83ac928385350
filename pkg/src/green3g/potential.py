"""Dirichlet forms, Green tables, heat kernels, capacities and scale profiles.

The generator acting on functions is ``(L f)(x) = mu(x)**-1 sum_y c_xy
(f(x) - f(y))``; its Dirichlet restriction to a domain interior is the
stiffness matrix ``S`` (full weighted degrees on the diagonal, minus the
interior adjacency).  The Green table is the inverse of ``S``: column ``y``
solves ``L u = 1_{x=y}/mu(y)`` with zero boundary data, which makes the table
symmetric without any post-processing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mmgraph import DomainView, MetricMeasureGraph

DENSE_SOLVE_BUDGET = 2000
DENSE_HEAT_BUDGET = 2500


class SolverError(RuntimeError):
    """Raised when a linear solve fails to reach its tolerance."""


class IndefiniteError(RuntimeError):
    """Raised when a Schrodinger operator is not positive definite."""


class DirichletForm:
    """Energy form E(f, f) = sum_edges c_xy (f(x) - f(y))**2 on a graph."""

    def __init__(self, graph: MetricMeasureGraph):
        self.graph = graph
        n = graph.vertex_count
        self.stiffness = (sp.diags(graph.degrees) - graph.adjacency).tocsr()

    def energy(self, f) -> float:
        f = np.asarray(f, dtype=float)
        return float(f @ (self.stiffness @ f))

    def apply_generator(self, f) -> np.ndarray:
        """(L f)(x) with respect to the vertex measure."""
        return (self.stiffness @ np.asarray(f, dtype=float)) / self.graph.measure


def dirichlet_stiffness(dom: DomainView) -> sp.csr_matrix:
    """Stiffness matrix over the interior with absorbing boundary.

    Diagonal entries keep the full weighted degree (edges to the boundary act
    as absorption); off-diagonal entries couple interior vertices only.
    """
    parent = dom.parent
    deg = parent.degrees[dom.interior]
    sub = parent.adjacency[dom.interior][:, dom.interior]
    return (sp.diags(deg) - sub).tocsr()


def _solve_inverse(S: sp.csr_matrix, tol: float, dense_budget: int
                   ) -> tuple[np.ndarray, float, str]:
    """Invert an SPD stiffness matrix; returns (inverse, worst residual, method)."""
    n = S.shape[0]
    if n <= dense_budget:
        dense = S.toarray()
        try:
            cho = sla.cho_factor(dense)
        except sla.LinAlgError as exc:
            raise IndefiniteError("stiffness matrix is not positive definite") from exc
        G = sla.cho_solve(cho, np.eye(n))
        method = "dense-cholesky"
    else:
        diag = S.diagonal()
        M = sp.diags(1.0 / diag)
        G = np.empty((n, n))
        e = np.zeros(n)
        for col in range(n):
            e[col] = 1.0
            u, info = spla.cg(S, e, rtol=tol, atol=0.0, M=M, maxiter=20 * n)
            if info != 0:
                raise SolverError(f"CG failed on column {col} (info={info})")
            G[:, col] = u
            e[col] = 0.0
        method = "jacobi-cg"
    resid = S @ G - np.eye(n)
    worst = float(np.abs(resid).max())
    if worst > max(tol * 100, 1e-8):
        raise SolverError(f"worst column residual {worst:.3e} exceeds tolerance")
    return G, worst, method


@dataclass
class GreenTable:
    """Green's function values over a domain interior.

    ``raw`` is the solver output (inverse of the Dirichlet stiffness matrix);
    ``values`` is the normalized table scaled so the basepoint diagonal entry
    is exactly 1, which pins the benchmark ``g(o) = 1`` and makes every
    benchmarked ratio invariant under global rescaling of the input table.
    """

    domain: DomainView
    raw: np.ndarray
    tol: float
    residual: float
    method: str
    scale: float = field(init=False)
    values: np.ndarray = field(init=False)
    g: np.ndarray = field(init=False)
    o_local: int = field(init=False)

    def __post_init__(self):
        self.o_local = self.domain.require_interior(self.domain.basepoint)
        goo = self.raw[self.o_local, self.o_local]
        if goo <= 0:
            raise SolverError("Green table is not positive at the basepoint")
        self.scale = 1.0 / goo
        self.values = self.raw * self.scale
        self.g = np.minimum(1.0, self.values[:, self.o_local])

    @property
    def basepoint(self) -> int:
        return self.domain.basepoint

    @property
    def size(self) -> int:
        return self.raw.shape[0]

    def normalized(self) -> np.ndarray:
        """G~(x,y) = G(x,y)/(g(x) g(y)); diagonal bears no meaning."""
        return self.values / np.outer(self.g, self.g)

    def symmetry_defect(self) -> float:
        return float(np.abs(self.raw - self.raw.T).max() / self.raw.max())

    def to_text(self) -> str:
        head = (f"green {self.size} {self.o_local} "
                f"{format(self.scale, '.17g')} {format(self.tol, '.17g')}")
        rows = [" ".join(format(v, ".17g") for v in row) for row in self.values]
        return head + "\n" + "\n".join(rows) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())


def green_table(dom: DomainView, tol: float = 1e-10,
                dense_budget: int = DENSE_SOLVE_BUDGET) -> GreenTable:
    """Solve for the domain Green's function.

    Every column satisfies the generator equation to relative residual
    ``tol``; the assembled table is checked for positivity (connected
    domains) and mu-symmetry (defect at most ``10 * tol``).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    S = dirichlet_stiffness(dom)
    G, resid, method = _solve_inverse(S, tol, dense_budget)
    table = GreenTable(dom, G, tol, resid, method)
    if table.raw.min() <= 0:
        raise SolverError("Green table has nonpositive entries; "
                          "domain may be disconnected")
    if table.symmetry_defect() > 10 * max(tol, 1e-14):
        raise SolverError("Green table symmetry defect exceeds tolerance")
    return table


def schrodinger_green(dom: DomainView, W, tol: float = 1e-10,
                      dense_budget: int = DENSE_SOLVE_BUDGET) -> np.ndarray:
    """Green table of the perturbed operator L + W with absorbing boundary.

    ``W`` is a per-interior-vertex potential (signed).  The perturbed
    stiffness is ``S + diag(W * mu)``; positive definiteness is verified via
    the smallest eigenvalue before solving, and an :class:`IndefiniteError`
    reports the gauge-explosion regime.  With ``W = None`` or all zeros the
    result is exactly the unperturbed raw table.
    """
    S = dirichlet_stiffness(dom)
    if W is not None:
        W = np.asarray(W, dtype=float)
        if W.shape != (dom.size,):
            raise ValueError("potential must have one value per interior vertex")
        if np.any(W != 0.0):
            S = (S + sp.diags(W * dom.interior_measure)).tocsr()
            lam_min = _smallest_eigenvalue(S)
            if lam_min <= 0:
                raise IndefiniteError(
                    f"perturbed operator has smallest eigenvalue {lam_min:.3e}")
    G, _, _ = _solve_inverse(S, tol, dense_budget)
    return G


def _smallest_eigenvalue(S: sp.csr_matrix) -> float:
    n = S.shape[0]
    if n <= DENSE_SOLVE_BUDGET:
        return float(sla.eigh(S.toarray(), eigvals_only=True,
                              subset_by_index=[0, 0])[0])
    vals = spla.eigsh(S, k=1, which="SA", return_eigenvectors=False,
                      tol=1e-8)
    return float(vals[0])


# ---------------------------------------------------------------------------
# heat kernels


@dataclass
class HeatKernelTable:
    """Kernel of the semigroup exp(-tL) with respect to the vertex measure."""

    times: np.ndarray
    eigenvalues: np.ndarray
    modes: np.ndarray          # columns v_k with sum_x v_k(x)^2 mu(x) = 1
    measure: np.ndarray

    def at(self, t: float) -> np.ndarray:
        """Matrix p(t, x, y); symmetric, nonnegative up to roundoff."""
        w = np.exp(-self.eigenvalues * t)
        return (self.modes * w) @ self.modes.T

    def tables(self) -> np.ndarray:
        return np.stack([self.at(t) for t in self.times])

    def compose(self, t: float, s: float) -> np.ndarray:
        """Chapman-Kolmogorov composition p(t) o p(s) through the measure."""
        return self.at(t) @ np.diag(self.measure) @ self.at(s)


def heat_kernel(dom_or_graph, times, dense_budget: int = DENSE_HEAT_BUDGET
                ) -> HeatKernelTable:
    """Heat kernel table for a domain (absorbing boundary) or a whole graph.

    Computed by a dense eigendecomposition of the measure-symmetrized
    generator, so it is restricted to graphs below ``dense_budget`` vertices.
    """
    times = np.asarray(times, dtype=float)
    if np.any(times <= 0) or np.any(np.diff(times) < 0):
        raise ValueError("times must be positive and sorted")
    if isinstance(dom_or_graph, DomainView):
        S = dirichlet_stiffness(dom_or_graph).toarray()
        mu = dom_or_graph.interior_measure
    else:
        g = dom_or_graph
        S = (sp.diags(g.degrees) - g.adjacency).toarray()
        mu = g.measure
    n = S.shape[0]
    if n > dense_budget:
        raise MemoryError(f"heat kernel needs a dense eigensolve on {n} "
                          f"vertices; budget is {dense_budget}")
    root = np.sqrt(mu)
    sym = S / root[:, None] / root[None, :]
    w, Q = sla.eigh(sym)
    modes = Q / root[:, None]
    return HeatKernelTable(times, w, modes, mu)


@dataclass
class HeatGreenResult:
    values: np.ndarray
    tail_bound: float
    t_max: float
    panels: int


def heat_green_integral(dom: DomainView, tail_tol: float = 1e-8,
                        points_per_panel: int = 8,
                        panels_per_decade: int = 4) -> HeatGreenResult:
    """Green table recovered as the time integral of the absorbing heat kernel.

    The integral over ``[0, t_max]`` is done with Gauss-Legendre panels laid
    out geometrically in time; the remainder beyond ``t_max`` is bounded by
    ``exp(-lam_min t_max) / (lam_min * mu_min)`` via spectral completeness,
    and ``t_max`` is chosen so that bound is below ``tail_tol``.
    """
    kern = heat_kernel(dom, [1.0])
    lam = kern.eigenvalues
    lam_min = float(lam[0])
    if lam_min <= 0:
        raise SolverError("absorbing generator must be positive definite")
    mu_min = float(dom.interior_measure.min())
    t_max = float(np.log(1.0 / (lam_min * mu_min * tail_tol)) / lam_min)
    if t_max <= 0:
        t_max = 1.0 / lam_min
    tail_bound = float(np.exp(-lam_min * t_max) / (lam_min * mu_min))
    if tail_bound > tail_tol * 1.0001:
        raise SolverError("tail bound not achievable within time horizon")

    lam_max = float(lam[-1])
    t_lo = min(1e-6 / lam_max, t_max / 10)
    decades = np.log10(t_max / t_lo)
    n_panels = max(4, int(np.ceil(decades * panels_per_decade)))
    cuts = np.concatenate([[0.0],
                           np.geomspace(t_lo, t_max, n_panels)])
    nodes, weights = np.polynomial.legendre.leggauss(points_per_panel)
    acc = np.zeros_like(lam)
    for a, b in zip(cuts[:-1], cuts[1:]):
        half = (b - a) / 2.0
        mid = (b + a) / 2.0
        for xi, wi in zip(nodes, weights):
            acc += wi * half * np.exp(-lam * (mid + half * xi))
    values = (kern.modes * acc) @ kern.modes.T
    return HeatGreenResult(values, tail_bound, t_max, n_panels)


# ---------------------------------------------------------------------------
# capacity and scale profiles


def capacity(graph: MetricMeasureGraph, B, shell) -> float:
    """Capacity of ``B`` relative to ``shell``: the energy of the equilibrium
    potential that is 1 on ``B``, harmonic on ``shell - B`` and 0 outside."""
    B = np.unique(np.asarray(B, dtype=np.int64))
    shell = np.unique(np.asarray(shell, dtype=np.int64))
    n = graph.vertex_count
    if B.size == 0:
        raise ValueError("B must be nonempty")
    if not np.all(np.isin(B, shell)):
        raise ValueError("B must be contained in the shell")
    if shell.size == n:
        raise ValueError("degenerate configuration: shell covers the whole graph")
    free = np.setdiff1d(shell, B)
    if free.size == 0:
        raise ValueError("degenerate configuration: B touches the shell boundary")

    form = DirichletForm(graph)
    S = form.stiffness
    u = np.zeros(n)
    u[B] = 1.0
    rhs = -np.asarray(S[free][:, B].sum(axis=1)).ravel()
    sub = S[free][:, free].tocsc()
    u[free] = spla.spsolve(sub, rhs)
    return form.energy(u)


@dataclass
class ScaleData:
    """Per-(center, radius) scale samples (exit times or Poincare constants)."""

    centers: np.ndarray
    radii: np.ndarray
    values: np.ndarray        # shape (len(centers), len(radii)); nan = skipped

    def pooled(self) -> tuple[np.ndarray, np.ndarray]:
        """Finite (radius, value) pairs pooled over centers."""
        r = np.broadcast_to(self.radii, self.values.shape)
        ok = np.isfinite(self.values) & (self.values > 0)
        return r[ok], self.values[ok]

    def fitted_exponent(self) -> float:
        """Least-squares slope of log value against log radius."""
        r, v = self.pooled()
        if r.size < 2:
            raise ValueError("need at least two scale samples to fit")
        slope, _ = np.polyfit(np.log(r), np.log(v), 1)
        return float(slope)


def exit_time_profile(graph: MetricMeasureGraph, centers, radii) -> ScaleData:
    """Mean exit times from open balls, one absorbing solve per (center, radius).

    Solves ``L u = 1`` on the ball with absorption outside; the recorded value
    is ``u(center)``.
    """
    centers = np.asarray(centers, dtype=np.int64)
    radii = np.asarray(radii, dtype=float)
    deg = graph.degrees
    values = np.full((centers.size, radii.size), np.nan)
    for ic, c in enumerate(centers):
        for ir, r in enumerate(radii):
            ball = graph.ball(c, r)
            if ball.size == 0:
                continue
            sub = (sp.diags(deg[ball])
                   - graph.adjacency[ball][:, ball]).tocsc()
            u = spla.spsolve(sub, graph.measure[ball])
            values[ic, ir] = u[np.searchsorted(ball, c)]
    return ScaleData(centers, radii, values)


def poincare_profile(graph: MetricMeasureGraph, centers, radii,
                     dense_budget: int = DENSE_HEAT_BUDGET) -> ScaleData:
    """Best Poincare constants of balls from their Neumann spectral gap.

    For each ball the recorded value is 1/lambda_1 of the generalized problem
    ``S_ball f = lambda M_ball f`` on the induced subgraph; disconnected balls
    are skipped (their constant is infinite).
    """
    centers = np.asarray(centers, dtype=np.int64)
    radii = np.asarray(radii, dtype=float)
    values = np.full((centers.size, radii.size), np.nan)
    from scipy.sparse.csgraph import connected_components
    for ic, c in enumerate(centers):
        for ir, r in enumerate(radii):
            ball = graph.ball(c, r)
            if ball.size < 2:
                continue
            if ball.size > dense_budget:
                raise MemoryError("ball exceeds the dense eigensolve budget")
            adj = graph.adjacency[ball][:, ball]
            ncomp, _ = connected_components(adj, directed=False)
            if ncomp != 1:
                values[ic, ir] = np.inf
                continue
            deg_in = np.asarray(adj.sum(axis=1)).ravel()
            S = np.diag(deg_in) - adj.toarray()
            M = np.diag(graph.measure[ball])
            w = sla.eigh(S, M, eigvals_only=True, subset_by_index=[1, 1])
            values[ic, ir] = 1.0 / w[0]
    return ScaleData(centers, radii, values)


# ---------------------------------------------------------------------------
# scale-function transforms


def power_psi(beta: float):
    """The power scale function r -> r**beta."""
    if beta <= 1:
        raise ValueError("scale exponent must exceed 1")

    def psi(r):
        return np.asarray(r, dtype=float) ** beta

    psi.beta = beta
    return psi


def phi_from_psi(psi, s: float, r_range=(1e-8, 1e8), grid: int = 400,
                 max_refinements: int = 60, rel_tol: float = 1e-13) -> float:
    """Legendre-type transform ``sup_r (s/r - 1/psi(r))`` by grid refinement.

    The supremum is located on a log-spaced grid and the bracket around the
    maximizer is zoomed until the value stabilizes; failure to stabilize or a
    maximizer pinned to the range edge raises.
    """
    if s <= 0:
        raise ValueError("argument s must be positive")
    lo, hi = r_range
    prev = -np.inf
    for _ in range(max_refinements):
        r = np.geomspace(lo, hi, grid)
        vals = s / r - 1.0 / np.asarray(psi(r), dtype=float)
        k = int(np.argmax(vals))
        best = float(vals[k])
        if k == 0 or k == grid - 1:
            # expand the range toward the pinned side
            lo = lo / 100 if k == 0 else lo
            hi = hi * 100 if k == grid - 1 else hi
            continue
        if np.isfinite(prev) and abs(best - prev) <= rel_tol * max(1.0, abs(best)):
            return best
        prev = best
        lo, hi = r[k - 1], r[k + 1]
    raise SolverError("refinement of the scale transform did not converge")
