"""End-to-end adaptive snapshot selection and POD optimal control.

Stages of :func:`run`:

1. adaptive time grid from the space-time adjoint solver at spacing ``dx``
2. control forecast from that adjoint
3. coarse state for the forecast control
4. optional state-driven post-refinement of the time grid
5. snapshots at spacing ``h`` on the final grid
6. POD basis and reduced model
7. projected gradient on the reduced problem
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Literal

import numpy as np

from . import estimators, ocp, pod, spacetime
from .discretization import SpatialGrid, TimeGrid
from .parabolic import ControlTrajectory, Trajectory, full_model, generate_snapshots, solve_state
from .problems import ProblemSpec, get_problem


class StageError(RuntimeError):
    """A numerical failure tagged with the pipeline stage it came from."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class PipelineConfig:
    problem: int = 1
    dx: float = 0.2
    h: float = 0.01
    dof: int = 21
    ell: int | None = 1
    pod_tol: float | None = None
    n_refine: int = 0
    ip: str = "l2"
    grid: Literal["uniform", "adaptive"] = "adaptive"
    snapshot_control: Literal["zero", "forecast"] = "zero"
    tau_r: float = 1e-3
    tau_a: float = 1e-10
    max_iter: int = 500
    estimators: bool = False
    seed: int = 0  # reserved

    def __post_init__(self):
        if self.dof < 5:
            raise ValueError("dof must be at least 5")
        if self.ell is not None and self.ell < 1:
            raise ValueError("ell must be at least 1")
        if (self.ell is None) == (self.pod_tol is None):
            raise ValueError("give exactly one of ell and pod_tol")
        if self.grid not in ("uniform", "adaptive"):
            raise ValueError(f"unknown grid mode {self.grid!r}")
        if self.snapshot_control not in ("zero", "forecast"):
            raise ValueError(f"unknown snapshot control {self.snapshot_control!r}")
        if self.n_refine < 0:
            raise ValueError("n_refine must be non-negative")


@dataclass(frozen=True)
class ErrorReport:
    eps_y: float
    eps_u: float
    eps_p: float
    J: float


@dataclass
class PipelineResult:
    config: PipelineConfig
    grid: TimeGrid
    grid_new: TimeGrid
    forecast: ControlTrajectory | None
    snapshot_control: ControlTrajectory
    basis: pod.PODBasis
    solve: ocp.SolveReport
    errors: ErrorReport | None
    eta: spacetime.EtaReport | None = None
    fixed_point_iterations: int = 0
    estimates: dict = field(default_factory=dict)


def error_norms(spec: ProblemSpec, sgrid: SpatialGrid, y: Trajectory, u: ControlTrajectory,
                p: Trajectory, J: float) -> ErrorReport:
    """Trapezoid-in-time, mass-in-space distances to the analytic optimum."""
    sol = spec.require_analytic()
    fom = full_model(spec, sgrid)
    t = y.grid.nodes
    w = y.grid.weights

    def dist(values, exact):
        e = values - fom.interpolate(exact, t)
        return float(np.sqrt(np.sum(w * np.einsum("jk,jk->j", e, fom.M.matvec(e.T).T))))

    du = u.values - np.reshape(sol.u(t), u.values.shape)
    eps_u = float(np.sqrt(np.sum(w * np.sum(du**2, axis=1))))
    return ErrorReport(dist(y.values, sol.y), eps_u, dist(p.values, sol.p), J)


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (ArithmeticError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
        if isinstance(exc, StageError):
            raise
        raise StageError(name, exc) from exc


def uniform_grid(dof: int, T: float = 1.0) -> TimeGrid:
    return TimeGrid.uniform(dof - 1, T)


def run(config: PipelineConfig) -> PipelineResult:
    spec = get_problem(config.problem)
    coarse = _stage("grid", SpatialGrid.from_spacing, config.dx)
    fine = _stage("grid", SpatialGrid.from_spacing, config.h)
    eta = None
    iterations = 0
    forecast = None
    if config.grid == "adaptive":
        res = _stage("adapt", spacetime.adapt, spec, coarse, config.dof)
        grid, eta, iterations = res.grid, res.report, res.solution.iterations
        forecast = spacetime.extract_control(res.solution, spec)
        grid_new = grid
        if config.n_refine:
            y_coarse = _stage("coarse state", solve_state, spec, coarse, grid, forecast)
            grid_new = _stage("refine", estimators.eta_pod_refine, spec, coarse, grid,
                              y_coarse, config.n_refine)
    else:
        grid = grid_new = uniform_grid(config.dof, spec.T)

    if config.snapshot_control == "forecast" and forecast is not None:
        u_snap = forecast.interpolate(grid_new)
    else:
        u_snap = ControlTrajectory.zeros(grid_new, spec.m)
    snaps = _stage("snapshots", generate_snapshots, spec, fine, grid_new, u_snap)
    basis = _stage("pod", pod.compute_basis, snaps, fine, config.ip,
                   ell=config.ell, tol=config.pod_tol)
    rom = pod.assemble_reduced(basis, spec, fine)
    prob = ocp.reduced_problem(rom, grid_new)
    report = _stage("optimize", ocp.projected_gradient, prob, None, tau_r=config.tau_r,
                    tau_a=config.tau_a, max_iter=config.max_iter)
    errors = None
    if spec.analytic is not None:
        errors = error_norms(spec, fine, report.state, report.control, report.adjoint, report.J)
    result = PipelineResult(config, grid, grid_new, forecast, u_snap, basis, report, errors,
                            eta, iterations)
    if config.estimators:
        result.estimates = _stage("estimators", _estimates, spec, fine, result)
    return result


def _estimates(spec: ProblemSpec, fine: SpatialGrid, result: PipelineResult) -> dict:
    """Components of the combined adjoint bound, computed with full-order solves.

    The time-discrete reference control is the one whose adjoint produced the
    snapshots; the POD control gives the second perturbation.
    """
    tg = result.grid_new
    full = ocp.full_problem(spec, fine, tg)

    def zeta_for(u: ControlTrajectory):
        x = full.state(u.values)
        return estimators.zeta(spec, fine, u, Trajectory(tg, full.adjoint(x))), x

    z_l, x_l = zeta_for(result.solve.control)
    z_k, _ = zeta_for(result.snapshot_control)
    # full-order state for the POD control vs the lifted POD state
    diff = x_l - result.solve.state.values
    fom = full_model(spec, fine)
    state_diff = float(np.sqrt(np.sum(tg.weights * np.einsum("jk,jk->j", diff,
                                                             fom.M.matvec(diff.T).T))))
    eta = result.eta.eta if result.eta is not None else float("nan")
    bound = estimators.combined_bound(eta, z_k, z_l, spec.alpha, result.basis, state_diff)
    out = {
        "eta_i": result.eta.eta_interior if result.eta is not None else float("nan"),
        "eta_b": result.eta.eta_boundary if result.eta is not None else float("nan"),
        "zeta_ref": z_k.norm,
        "zeta_pod": z_l.norm,
        "zeta_sum": bound.zeta_sum,
        "lambda_tail": bound.tail,
        "state_diff": state_diff,
        "bound": bound,
    }
    return out


def sweep(configs: Iterable[PipelineConfig], workers: int = 1) -> list[PipelineResult]:
    """Run configs, optionally in threads; results keep the input order."""
    configs = list(configs)
    if workers <= 1 or len(configs) <= 1:
        return [run(c) for c in configs]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(run, configs))


def table_configs(test: int, table: int) -> list[PipelineConfig]:
    """Configurations reproducing one of the benchmark tables."""
    base = PipelineConfig(problem=test)
    if test == 1 and table in (1, 2, 3):
        pairs = [(20, 21), (42, 43), (61, 62), (114, 115)]
        uni = [replace(base, grid="uniform", dof=n + 1, ell=1) for n, _ in pairs]
        ada = [replace(base, grid="adaptive", dof=d, ell=1, estimators=table == 2)
               for _, d in pairs]
        return ada if table == 2 else uni + ada
    if test == 1 and table == 4:
        return [replace(base, dof=43, ell=1, n_refine=r) for r in (0, 5, 10, 20, 30)]
    if test in (2, 3) and table in (5, 6, 7, 8):
        ell = 1 if table == 7 else 4
        pairs = [(20, 21), (40, 41), (68, 69), (134, 135)]
        uni = [replace(base, grid="uniform", dof=n + 1, ell=ell) for n, _ in pairs]
        ada = [replace(base, grid="adaptive", dof=d, ell=ell) for _, d in pairs]
        return uni + ada
    raise ValueError(f"no table {table} for test {test}")
