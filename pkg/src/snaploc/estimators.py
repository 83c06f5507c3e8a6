"""A-posteriori quantities: control error via perturbation, state estimate terms,
the combined adjoint bound and the state-driven grid post-refinement.

Unknown constants are set to one throughout, so all values are indicators
rather than certified bounds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .discretization import SpatialGrid, TimeGrid, bisect
from .parabolic import ControlTrajectory, Trajectory, full_model, solve_state, time_derivative_values
from .pod import PODBasis, project
from .problems import ProblemSpec


# ------------------------------------------------------------------------ zeta

@dataclass(frozen=True)
class ZetaReport:
    zeta: ControlTrajectory
    norm: float    # trapezoidal U-norm of zeta
    alpha: float

    @property
    def bound(self) -> float:
        """Upper bound for the distance of the control to the optimum."""
        return self.norm / self.alpha


def zeta_field(g: np.ndarray, u: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Perturbation making ``<g + zeta, v - u> >= 0`` hold for every admissible v."""
    at_lower = u <= lower
    at_upper = u >= upper
    z = -g.copy()
    z[at_lower] = np.maximum(0.0, -g[at_lower])
    z[at_upper] = -np.maximum(0.0, g[at_upper])
    # a degenerate box (lower == upper) admits only u, any zeta works
    z[at_lower & at_upper] = 0.0
    return z


def zeta(spec: ProblemSpec, sgrid: SpatialGrid, u_p: ControlTrajectory,
         p: Trajectory) -> ZetaReport:
    """Perturbation for ``u_p`` given the adjoint ``p = p(u_p)`` on the fine grid."""
    t = u_p.grid.nodes
    lo, hi = spec.bounds(t)
    u = u_p.values
    if np.any(u < lo - 1e-12) or np.any(u > hi + 1e-12):
        raise ValueError("control violates the bounds")
    g = spec.alpha * u + p.values @ full_model(spec, sgrid).B
    z = zeta_field(g, u, lo, hi)
    norm = float(np.sqrt(np.sum(u_p.grid.weights * np.sum(z**2, axis=1))))
    return ZetaReport(ControlTrajectory(u_p.grid, z), norm, spec.alpha)


# --------------------------------------------------------------- state terms

def second_derivative_values(t: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Three-point second differences on a nonuniform grid; ends copy neighbours."""
    v = np.asarray(v, dtype=float)
    out = np.zeros_like(v)
    if t.size < 3:
        return out
    shape = (-1,) + (1,) * (v.ndim - 1)
    h1 = (t[1:-1] - t[:-2]).reshape(shape)
    h2 = (t[2:] - t[1:-1]).reshape(shape)
    out[1:-1] = 2.0 * ((v[2:] - v[1:-1]) / h2 - (v[1:-1] - v[:-2]) / h1) / (h1 + h2)
    out[0] = out[1]
    out[-1] = out[-2]
    return out


def _interval_integrals(t: np.ndarray, nodal: np.ndarray) -> np.ndarray:
    """Trapezoid integral of a nodal scalar over each interval."""
    return 0.5 * np.diff(t) * (nodal[:-1] + nodal[1:])


def _sq_norms(op, v: np.ndarray) -> np.ndarray:
    return np.einsum("jk,jk->j", v, op.matvec(v.T).T)


def derivative_indicators(spec: ProblemSpec, sgrid: SpatialGrid, t: np.ndarray,
                          y: np.ndarray, c_p: float = 1.0) -> np.ndarray:
    """dt_j^2 * integral over I_j of ((1 + c_p^2)|y_tt|_H^2 + |y_t|_V^2)."""
    fom = full_model(spec, sgrid)
    yt = time_derivative_values(t, y)
    ytt = second_derivative_values(t, y)
    dens = (1.0 + c_p**2) * _sq_norms(fom.M, ytt) + _sq_norms(fom.A, yt)
    return np.diff(t) ** 2 * _interval_integrals(t, dens)


@dataclass(frozen=True)
class StateErrorReport:
    term_a: np.ndarray   # per interval
    term_b: float
    term_c: float
    note: str = "constants C_y = c_p = 1"

    @property
    def total(self) -> float:
        return float(self.term_a.sum() + self.term_b + self.term_c)


def state_estimate(spec: ProblemSpec, sgrid: SpatialGrid, tgrid: TimeGrid, y: Trajectory,
                   basis: PODBasis, y0: np.ndarray | None = None) -> StateErrorReport:
    """Terms of the a-posteriori estimate for the POD state error.

    ``y0`` defaults to the nodal initial state on ``sgrid``; the neglected
    initial moments are evaluated as the projection residual of ``y0``.
    """
    if y0 is None:
        y0 = full_model(spec, sgrid).y0
    a = derivative_indicators(spec, sgrid, tgrid.nodes, y.values)
    r = y0 - basis.modes @ project(basis, y0)
    init = max(float(r @ basis.gram @ r), 0.0)
    tail = basis.tail
    b = tgrid.n * (init + tail)
    c = tail * float(np.sum(tgrid.dt ** -2.0))
    return StateErrorReport(a, b, c)


def eta_pod_refine(spec: ProblemSpec, sgrid: SpatialGrid, tgrid: TimeGrid, y: Trajectory,
                   n_refine: int, *, control: ControlTrajectory | None = None) -> TimeGrid:
    """Bisect the interval with the largest state indicator ``n_refine`` times.

    Indicators are recomputed from ``y`` interpolated linearly in time; with
    ``control`` given the state is re-solved on every refined grid instead.
    """
    if n_refine < 0:
        raise ValueError("n_refine must be non-negative")
    grid = tgrid
    values = y.values
    for _ in range(n_refine):
        ind = derivative_indicators(spec, sgrid, grid.nodes, values, c_p=0.0)
        grid = bisect(grid, [int(np.argmax(ind)) + 1])
        if control is not None:
            values = solve_state(spec, sgrid, grid, control.interpolate(grid)).values
        else:
            values = _interp_rows(grid.nodes, tgrid.nodes, y.values)
    return grid


def _interp_rows(t_new: np.ndarray, t_old: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.stack([np.interp(t_new, t_old, v[:, i]) for i in range(v.shape[1])], axis=1)


# ----------------------------------------------------------- combined bound

@dataclass(frozen=True)
class CombinedBound:
    eta: float
    zeta_sum: float
    alpha: float
    tail: float
    state_diff: float

    @property
    def eta_term(self) -> float:
        return self.eta

    @property
    def zeta_term(self) -> float:
        return self.zeta_sum / self.alpha

    @property
    def pod_term(self) -> float:
        return float(np.sqrt(self.tail + self.state_diff**2))

    @property
    def total(self) -> float:
        return self.eta_term + self.zeta_term + self.pod_term


def combined_bound(eta: float, zeta_k: ZetaReport | float, zeta_kl: ZetaReport | float,
                   alpha: float, basis: PODBasis | float, state_diff: float) -> CombinedBound:
    zk = zeta_k.norm if isinstance(zeta_k, ZetaReport) else float(zeta_k)
    zl = zeta_kl.norm if isinstance(zeta_kl, ZetaReport) else float(zeta_kl)
    tail = basis.tail if isinstance(basis, PODBasis) else float(basis)
    return CombinedBound(float(eta), zk + zl, float(alpha), tail, float(state_diff))
