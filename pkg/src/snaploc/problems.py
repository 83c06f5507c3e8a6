"""Benchmark optimal control problems with known optimal triples.

All closures broadcast over numpy arrays: space-time fields take ``(x, t)``,
initial data ``x``, bounds and controls ``t`` (returning a trailing axis of
length ``m``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

#: Sentinel for a missing bound; clamping against it is exact.
UNBOUNDED = np.inf

Field = Callable[[np.ndarray, np.ndarray], np.ndarray]


class UnsupportedProblemError(ValueError):
    """Raised when an operation needs data a problem does not provide."""


def _const(value: float) -> Callable[[np.ndarray], np.ndarray]:
    def bound(t):
        return np.full(np.shape(t), float(value))

    return bound


@dataclass(frozen=True)
class AnalyticSolution:
    y: Field
    p: Field
    u: Callable[[np.ndarray], np.ndarray]
    J_opt: Optional[float] = None


@dataclass(frozen=True)
class ProblemSpec:
    """Linear-quadratic parabolic control problem on (0, 1) x (0, T).

    ``yd_t`` and ``yd_xx`` are the analytic derivatives of the desired state;
    they feed the space-time reformulation and its residual estimator.
    """

    name: str
    alpha: float
    shapes: Sequence[Callable[[np.ndarray], np.ndarray]]
    f: Field
    yd: Field
    yd_t: Field
    yd_xx: Field
    y0: Callable[[np.ndarray], np.ndarray]
    lower: Sequence[Callable[[np.ndarray], np.ndarray]] = ()
    upper: Sequence[Callable[[np.ndarray], np.ndarray]] = ()
    T: float = 1.0
    analytic: Optional[AnalyticSolution] = None
    #: time instants where the data vary rapidly (quadrature hints)
    breakpoints: Sequence[float] = field(default=())

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        m = len(self.shapes)
        if not self.lower:
            object.__setattr__(self, "lower", tuple(_const(-UNBOUNDED) for _ in range(m)))
        if not self.upper:
            object.__setattr__(self, "upper", tuple(_const(UNBOUNDED) for _ in range(m)))
        if len(self.lower) != m or len(self.upper) != m:
            raise ValueError("one lower and one upper bound per control intensity")
        ts = np.linspace(0.0, self.T, 101)
        if np.any(self.bounds(ts)[0] > self.bounds(ts)[1]):
            raise ValueError("lower bound exceeds upper bound")

    @property
    def m(self) -> int:
        return len(self.shapes)

    @cached_property
    def constrained(self) -> bool:
        ts = np.linspace(0.0, self.T, 101)
        lo, hi = self.bounds(ts)
        return bool(np.any(np.isfinite(lo)) or np.any(np.isfinite(hi)))

    def bounds(self, t) -> tuple[np.ndarray, np.ndarray]:
        """Lower and upper bounds at times ``t``, shape ``t.shape + (m,)``."""
        t = np.asarray(t, dtype=float)
        lo = np.stack([np.broadcast_to(b(t), t.shape) for b in self.lower], axis=-1)
        hi = np.stack([np.broadcast_to(b(t), t.shape) for b in self.upper], axis=-1)
        return lo, hi

    def clamp(self, u, t) -> np.ndarray:
        """Project control values (shape ``t.shape + (m,)``) onto the box."""
        lo, hi = self.bounds(t)
        return np.minimum(np.maximum(u, lo), hi)

    def require_analytic(self) -> AnalyticSolution:
        if self.analytic is None:
            raise UnsupportedProblemError(f"problem {self.name!r} has no analytic solution")
        return self.analytic


# --------------------------------------------------------------------- test 1

def test1(eps: float = 1e-4) -> ProblemSpec:
    """Adjoint with a boundary layer of width ``eps`` at t = T = 1."""
    alpha = 1.0 / 30.0
    pi = np.pi
    denom = -np.expm1(-1.0 / eps)

    def E(t):
        return (np.exp((t - 1.0) / eps) - np.exp(-1.0 / eps)) / denom

    def dE(t):
        return np.exp((t - 1.0) / eps) / eps / denom

    def ddE(t):
        return np.exp((t - 1.0) / eps) / eps**2 / denom

    def g(t):
        return t - E(t)

    def chi(x):
        return x * (x - 1.0)

    def y(x, t):
        return np.sin(pi * x) * np.sin(pi * t)

    def p(x, t):
        return chi(x) * g(t)

    def u(t):
        return -g(np.asarray(t, dtype=float))[..., None]

    def f(x, t):
        return pi * np.sin(pi * x) * (np.cos(pi * t) + pi * np.sin(pi * t)) + chi(x) * g(t)

    def yd(x, t):
        return y(x, t) + chi(x) * (1.0 - dE(t)) + 2.0 * g(t)

    def yd_t(x, t):
        return pi * np.sin(pi * x) * np.cos(pi * t) - chi(x) * ddE(t) + 2.0 * (1.0 - dE(t))

    def yd_xx(x, t):
        return -pi**2 * y(x, t) + 2.0 * (1.0 - dE(t))

    spec = ProblemSpec(
        name="test1", alpha=alpha, shapes=(chi,), f=f, yd=yd, yd_t=yd_t, yd_xx=yd_xx,
        y0=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        analytic=AnalyticSolution(y=y, p=p, u=u),
        breakpoints=layer_points(1.0, eps),
    )
    return _with_cost(spec)


# ------------------------------------------------------------- tests 2 and 3

_BUMP_FACTOR = 32.0 / np.pi**3 - 8.0 / np.pi**2


def _bump(center: float):
    def chi(x):
        return np.maximum(0.0, 1.0 - 16.0 * (np.asarray(x, dtype=float) - center) ** 2)

    return chi


def _test2_family(name: str, eps: float, lower=(), upper=()) -> ProblemSpec:
    alpha = 1.0
    pi = np.pi

    def a(t):
        return np.arctan((t - 0.5) / eps)

    def da(t):
        s = (t - 0.5) / eps
        return 1.0 / (eps * (1.0 + s * s))

    def dda(t):
        s = (t - 0.5) / eps
        return -2.0 * s / (eps**2 * (1.0 + s * s) ** 2)

    def G(t):
        return a(t) * (t - 1.0)

    def dG(t):
        return da(t) * (t - 1.0) + a(t)

    def ddG(t):
        return dda(t) * (t - 1.0) + 2.0 * da(t)

    chis = (_bump(0.25), _bump(0.75))

    def q(x):
        return x**4 - x**3

    def y(x, t):
        return q(x) * t

    def p(x, t):
        return np.sin(pi * x) * G(t)

    def u_free(t):
        t = np.asarray(t, dtype=float)
        v = -_BUMP_FACTOR * G(t) / alpha
        return np.stack([v, v], axis=-1)

    provisional = ProblemSpec(
        name=name, alpha=alpha, shapes=chis, f=lambda x, t: 0.0 * x,
        yd=lambda x, t: 0.0 * x, yd_t=lambda x, t: 0.0 * x, yd_xx=lambda x, t: 0.0 * x,
        y0=lambda x: 0.0 * x, lower=lower, upper=upper,
    )

    def u(t):
        return provisional.clamp(u_free(t), np.asarray(t, dtype=float))

    def f(x, t):
        x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
        uu = u(t)
        bu = chis[0](x) * uu[..., 0] + chis[1](x) * uu[..., 1]
        return q(x) - (12.0 * x**2 - 6.0 * x) * t - bu

    def yd(x, t):
        return y(x, t) + np.sin(pi * x) * (dG(t) - pi**2 * G(t))

    def yd_t(x, t):
        return q(x) + np.sin(pi * x) * (ddG(t) - pi**2 * dG(t))

    def yd_xx(x, t):
        return (12.0 * x**2 - 6.0 * x) * t - pi**2 * np.sin(pi * x) * (dG(t) - pi**2 * G(t))

    spec = ProblemSpec(
        name=name, alpha=alpha, shapes=chis, f=f, yd=yd, yd_t=yd_t, yd_xx=yd_xx,
        y0=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        lower=provisional.lower, upper=provisional.upper,
        analytic=AnalyticSolution(y=y, p=p, u=u),
        breakpoints=layer_points(0.5, eps),
    )
    return _with_cost(spec)


def test2(eps: float = 1e-4) -> ProblemSpec:
    """Adjoint with an interior layer at t = 1/2; two bump-shaped controls."""
    return _test2_family("test2", eps)


def test3(eps: float = 1e-4) -> ProblemSpec:
    """Test 2 with box constraints on both control intensities.

    The source term uses the clamped optimal control so that the analytic
    state and adjoint remain the optimal pair of the constrained problem.
    """
    return _test2_family(
        "test3", eps,
        lower=(_const(-100.0), _const(-0.2)),
        upper=(_const(0.1), _const(0.0)),
    )


PROBLEMS = {1: test1, 2: test2, 3: test3}


def get_problem(test_id: int) -> ProblemSpec:
    try:
        return PROBLEMS[int(test_id)]()
    except KeyError:
        raise ValueError(f"unknown test id {test_id!r}; choose 1, 2 or 3") from None


# ------------------------------------------------------------- quadrature

def _space_rule(n: int = 24) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre on [0, 1/4, 1/2, 3/4, 1]; the bumps only kink there."""
    g, w = np.polynomial.legendre.leggauss(n)
    xs, ws = [], []
    for a, b in [(0.0, 0.25), (0.25, 0.5), (0.5, 0.75), (0.75, 1.0)]:
        xs.append(a + (b - a) * (g + 1.0) / 2.0)
        ws.append((b - a) / 2.0 * w)
    return np.concatenate(xs), np.concatenate(ws)


def shape_pairing(spec: ProblemSpec, field: Field, t) -> np.ndarray:
    """<chi_i, field(., t)> for each shape, shape ``t.shape + (m,)``."""
    xq, wq = _space_rule()
    t = np.asarray(t, dtype=float)
    vals = field(xq[:, None], t.reshape(1, -1))
    out = [np.sum((wq * chi(xq))[:, None] * vals, axis=0) for chi in spec.shapes]
    return np.stack(out, axis=-1).reshape(t.shape + (spec.m,))


def check_analytic_consistency(spec: ProblemSpec, samples: int = 101) -> float:
    """Max deviation of u from clamp(-<chi, p>/alpha) at sample times."""
    sol = spec.require_analytic()
    ts = np.linspace(0.0, spec.T, samples)
    target = spec.clamp(-shape_pairing(spec, sol.p, ts) / spec.alpha, ts)
    return float(np.max(np.abs(sol.u(ts) - target)))


def layer_points(center: float, eps: float, T: float = 1.0, levels: int = 12) -> tuple:
    """Geometric cluster of quadrature breakpoints around a layer of width eps."""
    pts = {center}
    for k in range(levels + 1):
        d = eps * 2.0 ** (k - 4)
        pts.update((center - d, center + d))
    return tuple(sorted(s for s in pts if 0.0 <= s <= T))


def _time_points(spec: ProblemSpec) -> list[float]:
    return [s for s in spec.breakpoints if 0.0 < s < spec.T]


def exact_cost(spec: ProblemSpec) -> float:
    """J at the analytic optimum by adaptive quadrature in time."""
    sol = spec.require_analytic()
    xq, wq = _space_rule()

    def density(t):
        diff = sol.y(xq, t) - spec.yd(xq, t)
        uu = sol.u(np.asarray(t))
        return 0.5 * np.sum(wq * diff**2) + 0.5 * spec.alpha * float(np.sum(uu**2))

    val, _ = integrate.quad(density, 0.0, spec.T, points=_time_points(spec) or None,
                            limit=2000, epsabs=1e-10, epsrel=1e-12)
    return float(val)


def _with_cost(spec: ProblemSpec) -> ProblemSpec:
    sol = spec.analytic
    J = exact_cost(spec)
    return _replace_analytic(spec, AnalyticSolution(sol.y, sol.p, sol.u, J))


def _replace_analytic(spec: ProblemSpec, analytic: AnalyticSolution) -> ProblemSpec:
    kwargs = {k: getattr(spec, k) for k in spec.__dataclass_fields__}
    kwargs["analytic"] = analytic
    return ProblemSpec(**kwargs)
