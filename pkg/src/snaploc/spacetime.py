"""Space-time solver for the adjoint elliptic reformulation and time adaptivity.

Eliminating state and control from the optimality system yields a problem in
the adjoint alone, second order in time and fourth order in space::

    -p_tt + lap^2 p - B P(-B* p / alpha) = f - yd_t + lap yd
    p(T) = 0,   p_t(0) + lap p(0) = yd(0) - y0,   p = 0, lap p = yd on the boundary

It is discretised by P1 Galerkin in time and second differences in space on a
coarse grid. Only the resulting time grid and control forecast are used
downstream, so the spatial resolution may be very coarse.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import quad_vec

from .discretization import InvalidGridError, SpatialGrid, TimeGrid, bisect
from .parabolic import ControlTrajectory, Trajectory
from .problems import ProblemSpec

_GAUSS4_X, _GAUSS4_W = np.polynomial.legendre.leggauss(4)
_GAUSS4_X = 0.5 * (_GAUSS4_X + 1.0)
_GAUSS4_W = 0.5 * _GAUSS4_W


class FixedPointError(RuntimeError):
    """The frozen-clamp iteration did not converge; carries the last iterate."""

    def __init__(self, message: str, last: "SpaceTimeSolution"):
        super().__init__(message)
        self.last = last


@dataclass(frozen=True)
class SpaceTimeSolution:
    tgrid: TimeGrid
    sgrid: SpatialGrid
    p: Trajectory  # interior coarse values, last row identically zero
    iterations: int = 0


@dataclass(frozen=True)
class EtaReport:
    interior: np.ndarray  # per-interval squared contributions
    boundary: np.ndarray

    @property
    def per_interval(self) -> np.ndarray:
        return self.interior + self.boundary

    @property
    def eta_interior(self) -> float:
        return float(np.sqrt(self.interior.sum()))

    @property
    def eta_boundary(self) -> float:
        return float(np.sqrt(self.boundary.sum()))

    @property
    def eta(self) -> float:
        return float(np.sqrt(self.per_interval.sum()))


# ------------------------------------------------------------------ operators

class _CoarseOperators:
    """Spatial finite-difference operators and cached time integrals of data."""

    def __init__(self, spec: ProblemSpec, sgrid: SpatialGrid):
        if sgrid.n_x < 4:
            raise InvalidGridError("the space-time solver needs n_x >= 4")
        self.spec = spec
        self.sgrid = sgrid
        self.x = sgrid.interior
        self.dx = sgrid.h
        n = self.x.size
        lap = sp.diags([np.ones(n - 1), -2.0 * np.ones(n), np.ones(n - 1)], [-1, 0, 1])
        self.lap = (lap / self.dx**2).tocsr()
        self.bilap = (self.lap @ self.lap).tocsr()
        self.chi = np.stack([np.broadcast_to(c(self.x), self.x.shape) for c in spec.shapes],
                            axis=1).astype(float)
        self.b = self.dx * self.chi  # coarse B*
        self.nlin = self.chi @ self.b.T / spec.alpha
        self._cache: dict[tuple[float, float], tuple] = {}
        self._points = np.asarray(spec.breakpoints, dtype=float)

    # data residual d(t) at the interior nodes
    def data(self, t: float) -> np.ndarray:
        s, x = self.spec, self.x
        d = s.f(x, t) - s.yd_t(x, t) + s.yd_xx(x, t)
        d = np.array(np.broadcast_to(d, x.shape), dtype=float)
        d[0] -= s.yd(0.0, t) / self.dx**2
        d[-1] -= s.yd(1.0, t) / self.dx**2
        return d

    def boundary_data(self, t: float) -> np.ndarray:
        return np.array([self.spec.yd(0.0, t), self.spec.yd(1.0, t)], dtype=float)

    def nonlinear_correction(self, p: np.ndarray, t) -> np.ndarray:
        """N(p) - N_lin p for p of shape (k, N) at times t (k,)."""
        v = -(p @ self.b) / self.spec.alpha
        return -(self.spec.clamp(v, np.asarray(t)) - v) @ self.chi.T

    def integrals(self, a: float, b: float) -> tuple:
        """Per-interval integrals of the data against the two hat functions.

        Returns (int d phi_a, int d phi_b, int dx |d|^2, int g^2, int g phi_a,
        int g phi_b) where g are the boundary values of yd. Adaptive quadrature
        is needed because the data carry layers much thinner than any interval.
        """
        key = (float(a), float(b))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        h = b - a
        pts = [float(s) for s in self._points if a < s < b] or None
        # a positive floor lets identically zero data terminate
        opts = dict(epsabs=1e-300, epsrel=1e-10, limit=20000, points=pts)

        def loads(t):
            d = self.data(t)
            s = (t - a) / h
            return np.concatenate([d * (1.0 - s), d * s])

        def energy(t):
            return np.array([self.dx * np.sum(self.data(t) ** 2)])

        def bnd(t):
            g = self.boundary_data(t)
            s = (t - a) / h
            return np.concatenate([g**2, g * (1.0 - s), g * s])

        ld, _ = quad_vec(loads, a, b, norm="max", **opts)
        en, _ = quad_vec(energy, a, b, **opts)
        bd, _ = quad_vec(bnd, a, b, norm="max", **opts)
        n = self.x.size
        out = (ld[:n], ld[n:], float(en[0]), bd[:2], bd[2:4], bd[4:6])
        self._cache[key] = out
        return out


@lru_cache(maxsize=16)
def _operators(spec: ProblemSpec, sgrid: SpatialGrid) -> _CoarseOperators:
    return _CoarseOperators(spec, sgrid)


# -------------------------------------------------------------------- solving

class _System:
    def __init__(self, ops: _CoarseOperators, tgrid: TimeGrid):
        self.ops = ops
        self.tgrid = tgrid
        n, N = tgrid.n, ops.x.size
        dt = tgrid.dt
        # P1 time stiffness/mass on nodes 0..n, then drop the pinned node n
        Kt = sp.lil_matrix((n + 1, n + 1))
        Mt = sp.lil_matrix((n + 1, n + 1))
        for j, h in enumerate(dt):
            idx = [j, j + 1]
            Kt[np.ix_(idx, idx)] += np.array([[1.0, -1.0], [-1.0, 1.0]]) / h
            Mt[np.ix_(idx, idx)] += np.array([[2.0, 1.0], [1.0, 2.0]]) * h / 6.0
        Kt = Kt.tocsr()[:n, :n]
        Mt = Mt.tocsr()[:n, :n]
        E00 = sp.csr_matrix(([1.0], ([0], [0])), shape=(n, n))
        space = ops.bilap + sp.csr_matrix(ops.nlin)
        I = sp.identity(N, format="csr")
        self.matrix = (sp.kron(Kt, I) + sp.kron(Mt, space) + sp.kron(E00, -ops.lap)).tocsc()
        self.lu = spla.splu(self.matrix)
        self.load = self._linear_load()

    def _linear_load(self) -> np.ndarray:
        ops, t = self.ops, self.tgrid.nodes
        n, N = self.tgrid.n, ops.x.size
        rhs = np.zeros((n + 1, N))
        for j in range(n):
            la, lb, *_ = ops.integrals(t[j], t[j + 1])
            rhs[j] += la
            rhs[j + 1] += lb
        s = ops.spec
        rhs[0] -= np.broadcast_to(s.yd(ops.x, 0.0) - s.y0(ops.x), ops.x.shape)
        return rhs[:n]

    def correction_load(self, P: np.ndarray) -> np.ndarray:
        """Hat-function moments of N(p) - N_lin p for the full nodal array P."""
        ops, t = self.ops, self.tgrid.nodes
        n = self.tgrid.n
        out = np.zeros_like(P)
        for j in range(n):
            h = t[j + 1] - t[j]
            s = _GAUSS4_X
            pg = np.outer(1.0 - s, P[j]) + np.outer(s, P[j + 1])
            c = ops.nonlinear_correction(pg, t[j] + h * s)
            wc = (h * _GAUSS4_W)[:, None] * c
            out[j] += ((1.0 - s)[:, None] * wc).sum(axis=0)
            out[j + 1] += (s[:, None] * wc).sum(axis=0)
        return out[:n]

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        n, N = self.tgrid.n, self.ops.x.size
        P = np.zeros((n + 1, N))
        P[:n] = self.lu.solve(rhs.ravel()).reshape(n, N)
        return P


def _l2(tgrid: TimeGrid, dx: float, P: np.ndarray) -> float:
    return float(np.sqrt(dx * np.sum(tgrid.weights[:, None] * P**2)))


def assemble_and_solve(spec: ProblemSpec, sgrid: SpatialGrid, tgrid: TimeGrid, *,
                       tol: float = 1e-10, max_iter: int = 50,
                       damping: float = 1.0) -> SpaceTimeSolution:
    """Solve on the coarse grid; box-constrained problems use the fixed point."""
    ops = _operators(spec, sgrid)
    system = _System(ops, tgrid)
    P = system.solve(system.load)
    if not spec.constrained:
        return SpaceTimeSolution(tgrid, sgrid, Trajectory(tgrid, P), 0)
    return _fixed_point(system, P, tol, max_iter, damping)


def _fixed_point(system: _System, P: np.ndarray, tol: float, max_iter: int,
                 damping: float) -> SpaceTimeSolution:
    tgrid, ops = system.tgrid, system.ops
    for k in range(1, max_iter + 1):
        new = system.solve(system.load - system.correction_load(P))
        new = (1.0 - damping) * P + damping * new
        change = _l2(tgrid, ops.dx, new - P)
        P = new
        if change < tol:
            return SpaceTimeSolution(tgrid, ops.sgrid, Trajectory(tgrid, P), k)
    last = SpaceTimeSolution(tgrid, ops.sgrid, Trajectory(tgrid, P), max_iter)
    raise FixedPointError(f"fixed point not converged after {max_iter} iterations "
                          f"(last change {change:.3e})", last)


def fixed_point_constrained(spec: ProblemSpec, sgrid: SpatialGrid, tgrid: TimeGrid, *,
                            tol: float = 1e-10, max_iter: int = 50,
                            damping: float = 1.0) -> SpaceTimeSolution:
    """Freeze the clamp at the previous iterate; start from the unconstrained solve."""
    ops = _operators(spec, sgrid)
    system = _System(ops, tgrid)
    return _fixed_point(system, system.solve(system.load), tol, max_iter, damping)


# ------------------------------------------------------------------ estimator

def _quad_linear(a, b, h):
    """Integral of |a (1-s) + b s|^2 over an interval of length h (a, b vectors)."""
    return h / 3.0 * (np.dot(a, a) + np.dot(a, b) + np.dot(b, b))


def eta_indicator(sol: SpaceTimeSolution, spec: ProblemSpec) -> EtaReport:
    """Temporal residual estimator, split into interior and boundary parts."""
    ops = _operators(spec, sol.sgrid)
    t = sol.tgrid.nodes
    P = sol.p.values
    dx = ops.dx
    Q = (ops.bilap @ P.T).T + P @ ops.nlin.T
    # one-sided second difference for lap p at x=0 and x=1 (p vanishes there)
    lap0 = (-5.0 * P[:, 0] + 4.0 * P[:, 1] - P[:, 2]) / dx**2
    lap1 = (-5.0 * P[:, -1] + 4.0 * P[:, -2] - P[:, -3]) / dx**2
    lapb = np.stack([lap0, lap1], axis=1)
    n = sol.tgrid.n
    interior = np.zeros(n)
    boundary = np.zeros(n)
    for j in range(n):
        a, b = t[j], t[j + 1]
        h = b - a
        da, db, dd, g2, ga, gb = ops.integrals(a, b)
        qa, qb = Q[j], Q[j + 1]
        r2 = dd - 2.0 * dx * (qa @ da + qb @ db) + dx * _quad_linear(qa, qb, h)
        if spec.constrained:
            s = _GAUSS4_X
            tg = a + h * s
            pg = np.outer(1.0 - s, P[j]) + np.outer(s, P[j + 1])
            c = ops.nonlinear_correction(pg, tg)
            lin = np.stack([ops.data(ti) for ti in tg]) - (np.outer(1.0 - s, qa) + np.outer(s, qb))
            w = h * _GAUSS4_W
            r2 += dx * np.sum(w * np.sum(-2.0 * lin * c + c**2, axis=1))
        interior[j] = h**2 * max(r2, 0.0)
        la, lb = lapb[j], lapb[j + 1]
        b2 = np.sum(g2) - 2.0 * (la @ ga + lb @ gb) + _quad_linear(la, lb, h)
        boundary[j] = max(b2, 0.0)
    return EtaReport(interior, boundary)


# ------------------------------------------------------------------ adaptivity

@dataclass(frozen=True)
class AdaptResult:
    grid: TimeGrid
    solution: SpaceTimeSolution
    report: EtaReport
    budget_reached: bool

    def __iter__(self):
        # unpacks as (grid, solution)
        return iter((self.grid, self.solution))


INITIAL_INTERVALS = 4


def mark(indicators: np.ndarray, theta: float, limit: int) -> list[int]:
    """Max-marking; at most ``limit`` intervals, largest first, ties to lowest index.

    Returns 1-based interval indices.
    """
    eta = np.sqrt(indicators)
    peak = eta.max()
    if limit <= 0 or peak <= 0.0:
        return []
    marked = np.flatnonzero(eta >= theta * peak)
    if marked.size > limit:
        order = np.argsort(-eta[marked], kind="stable")
        marked = np.sort(marked[order[:limit]])
    return [int(j) + 1 for j in marked]


def adapt(spec: ProblemSpec, sgrid: SpatialGrid, dof_budget: int, *,
          theta: float = 0.5, **solver_opts) -> AdaptResult:
    """Bisect marked intervals until the grid has ``dof_budget`` nodes."""
    if dof_budget < INITIAL_INTERVALS + 1:
        raise ValueError(f"dof budget must be at least {INITIAL_INTERVALS + 1}")
    grid = TimeGrid.uniform(INITIAL_INTERVALS, spec.T)
    sol = assemble_and_solve(spec, sgrid, grid, **solver_opts)
    report = eta_indicator(sol, spec)
    if dof_budget == grid.dof:
        warnings.warn("dof budget does not exceed the initial grid; no refinement done",
                      RuntimeWarning, stacklevel=2)
        return AdaptResult(grid, sol, report, False)
    while grid.dof < dof_budget:
        marked = mark(report.per_interval, theta, dof_budget - grid.dof)
        if not marked:
            # vanishing estimator: refine uniformly from the left
            marked = list(range(1, min(grid.n, dof_budget - grid.dof) + 1))
        grid = bisect(grid, marked)
        sol = assemble_and_solve(spec, sgrid, grid, **solver_opts)
        report = eta_indicator(sol, spec)
    return AdaptResult(grid, sol, report, True)


def extract_control(sol: SpaceTimeSolution, spec: ProblemSpec) -> ControlTrajectory:
    """u = P(-B* p / alpha) at every time node with the coarse B*."""
    ops = _operators(spec, sol.sgrid)
    v = -(sol.p.values @ ops.b) / spec.alpha
    return ControlTrajectory(sol.tgrid, spec.clamp(v, sol.tgrid.nodes))
