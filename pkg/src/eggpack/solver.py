"""Augmented Lagrangian local solver and multistart driver.

The local solver minimises

    L(x) = f(x) + y.c(x) + rho/2 |c(x)|^2
           + 1/(2 rho) sum(max(0, z - rho g(x))^2 - z^2)

over the variable box, for equalities ``c(x) = 0`` and inequalities
``g(x) >= 0``, with a bound-constrained limited-memory quasi-Newton inner
loop.  Multipliers are updated when the violation has dropped enough,
otherwise the penalty grows.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .model import NlpProblem, initial_point

__all__ = ["SolverConfig", "SolveOutcome", "SmoothProblem", "MultistartResult", "solve_local", "multistart"]

log = logging.getLogger(__name__)

OPTIMAL = "optimal-local"
FEASIBLE = "feasible-suboptimal"
INFEASIBLE = "infeasible"
DIVERGED = "diverged"
MULTIPLIER_CAP = 1e6
PENALTY_MAX = 1e9
STIFF_PENALTY = 1e6


@dataclass(frozen=True)
class SolverConfig:
    feas_tol: float = 1e-8
    opt_tol: float = 1e-6
    max_outer: int = 200
    max_inner: int = 500
    starts: int = 50
    seed: int = 0
    penalty_init: float = 10.0
    penalty_growth: float = 10.0
    verify_tol: float = 1e-6

    def __post_init__(self):
        for name in ("feas_tol", "opt_tol", "verify_tol", "penalty_init"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.penalty_growth <= 1:
            raise ValueError("penalty_growth must exceed 1")
        for name in ("max_outer", "max_inner", "starts"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class SolveOutcome:
    point: np.ndarray
    status: str
    objective: float
    max_violation: float
    stationarity: float
    iterations: int
    wall_time: float
    seed: int | None = None
    certificate: object = None
    merit_log: list = field(default_factory=list, repr=False)

    @property
    def feasible(self) -> bool:
        return self.status in (OPTIMAL, FEASIBLE)

    @property
    def certified(self) -> bool:
        return self.feasible and self.certificate is not None and self.certificate.passed


@dataclass
class _DenseEvaluation:
    eq: np.ndarray
    ineq: np.ndarray
    jeq: np.ndarray | None = None
    jineq: np.ndarray | None = None


class SmoothProblem:
    """A small dense NLP ``min f(x)  s.t.  c(x) = 0,  g(x) >= 0,  lower <= x <= upper``.

    ``f`` returns ``(value, gradient)``; ``eq`` and ``ineq`` return
    ``(residuals, jacobian)`` and may be omitted.
    """

    def __init__(self, f, lower, upper, eq=None, ineq=None):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self._f, self._eq, self._ineq = f, eq, ineq
        x0 = self.clip(np.zeros_like(self.lower))
        self.n_eq = len(eq(x0)[0]) if eq else 0
        self.n_ineq = len(ineq(x0)[0]) if ineq else 0
        self.row_scales = (np.ones(self.n_eq), np.ones(self.n_ineq))

    @property
    def n_var(self) -> int:
        return self.lower.size

    def objective(self, x) -> float:
        return float(self._f(x)[0])

    def objective_grad(self, x) -> np.ndarray:
        return np.asarray(self._f(x)[1], dtype=float)

    def _part(self, fun, x, size):
        if fun is None:
            return np.zeros(0), np.zeros((0, self.n_var))
        c, J = fun(x)
        return np.asarray(c, dtype=float).reshape(size), np.asarray(J, dtype=float).reshape(size, self.n_var)

    def evaluate(self, x, jac: bool = True) -> _DenseEvaluation:
        c, Jc = self._part(self._eq, x, self.n_eq)
        g, Jg = self._part(self._ineq, x, self.n_ineq)
        return _DenseEvaluation(c, g, Jc, Jg)

    def jac_transpose_dot(self, ev, w_eq, w_ineq) -> np.ndarray:
        return ev.jeq.T @ w_eq + ev.jineq.T @ w_ineq

    def clip(self, x) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)

    def max_violation(self, x) -> float:
        ev = self.evaluate(x, jac=False)
        v = _violation(ev)
        return max(v, float(np.max(self.lower - x, initial=0.0)), float(np.max(x - self.upper, initial=0.0)))


def _stationarity(problem, x, y, z) -> float:
    """Projected-gradient norm of the Lagrangian ``f + y.c - z.g`` (scaled rows)."""
    se, si = problem.row_scales
    ev = problem.evaluate(x)
    grad = problem.objective_grad(x) + problem.jac_transpose_dot(ev, se * y, -si * z)
    pg = x - np.clip(x - grad, problem.lower, problem.upper)
    return float(np.max(np.abs(pg))) if pg.size else 0.0


def _violation(ev) -> float:
    v = 0.0
    if ev.eq.size:
        v = float(np.max(np.abs(ev.eq)))
    if ev.ineq.size:
        v = max(v, float(np.max(-ev.ineq)))
    return v


def _scaled_evaluate(problem, x, jac=True):
    se, si = problem.row_scales
    ev = problem.evaluate(x, jac=jac)
    return ev, ev.eq * se, ev.ineq * si


def _augmented_lagrangian(problem, y, z, rho):
    se, si = problem.row_scales

    def fun(x):
        ev, c, g = _scaled_evaluate(problem, x)
        s = np.maximum(0.0, z - rho * g)
        val = problem.objective(x) + y @ c + 0.5 * rho * (c @ c) + (s @ s - z @ z) / (2 * rho)
        grad = problem.objective_grad(x) + problem.jac_transpose_dot(ev, se * (y + rho * c), -si * s)
        return val, grad

    return fun


def solve_local(problem, start, config: SolverConfig = SolverConfig()) -> SolveOutcome:
    """One augmented Lagrangian run from ``start``.

    ``problem`` is an :class:`~eggpack.model.NlpProblem` or any object with
    the same evaluation interface, e.g. :class:`SmoothProblem`.  Optional
    ``normalize(x)`` and ``polish(x)`` hooks are applied after inner solves
    and near convergence; the better of the iterate and its polished version
    is returned.

    Never raises on numerical trouble: non-finite values give status
    ``diverged``, as does exhausting ``max_outer`` without reaching
    feasibility.
    """
    t0 = time.perf_counter()
    lower, upper = problem.lower, problem.upper
    bounds = list(zip(np.where(np.isfinite(lower), lower, None), np.where(np.isfinite(upper), upper, None)))
    x = problem.clip(np.asarray(start, dtype=float))
    y = np.zeros(problem.n_eq)
    z = np.zeros(problem.n_ineq)
    rho = config.penalty_init
    omega = 1e-2
    viol = _violation(problem.evaluate(x, jac=False))
    target = max(0.25 * viol, config.feas_tol)
    near = 100 * config.feas_tol
    merit_log = []
    history = []
    total_iter = 0
    status = None
    stat = math.inf
    polished = None
    exhausted = True
    for outer in range(config.max_outer):
        fun = _augmented_lagrangian(problem, y, z, rho)
        with np.errstate(all="ignore"):
            start_val = fun(x)[0]
            res = minimize(
                fun,
                x,
                jac=True,
                method="L-BFGS-B",
                bounds=bounds,
                options={"maxiter": config.max_inner, "gtol": omega, "ftol": 0.0, "maxcor": 20},
            )
        total_iter += int(res.nit)
        if not np.all(np.isfinite(res.x)) or not np.isfinite(res.fun):
            status = DIVERGED
            break
        merit_log.append((outer, float(start_val), float(res.fun), rho))
        x = problem.normalize(res.x) if hasattr(problem, "normalize") else res.x
        ev, c, g = _scaled_evaluate(problem, x, jac=False)
        viol = _violation(ev)
        # first-order multiplier estimates implied by the inner minimiser
        stat = _stationarity(problem, x, y + rho * c, np.maximum(0.0, z - rho * g))
        history.append(float(x[0]))
        log.debug("outer %d: viol=%.3e stat=%.3e rho=%.1e d=%.9f", outer, viol, stat, rho, x[0])
        if viol <= config.feas_tol and stat <= config.opt_tol:
            exhausted = False
            break
        stalled = len(history) > 3 and max(history[-4:]) - min(history[-4:]) <= 1e-8
        if viol <= near and (stat <= config.opt_tol or stalled or rho >= STIFF_PENALTY):
            polished = _try_polish(problem, x)
            if polished is not None and polished[1] <= config.feas_tol:
                exhausted = False
                break
        if viol <= target:
            y = np.clip(y + rho * c, -MULTIPLIER_CAP, MULTIPLIER_CAP)
            z = np.clip(z - rho * g, 0.0, MULTIPLIER_CAP)
            target = max(0.25 * viol, config.feas_tol)
            omega = max(omega * 0.1, config.opt_tol * 0.1)
        else:
            rho *= config.penalty_growth
            omega = max(min(omega, 1.0 / rho), config.opt_tol * 0.1)
        if rho > PENALTY_MAX:
            exhausted = False
            break

    if status != DIVERGED:
        candidates = [(x, viol)]
        if polished is None or polished[0] is None:
            polished = _try_polish(problem, x)
        if polished is not None:
            candidates.append(polished)
        feas = [c for c in candidates if c[1] <= config.feas_tol]
        if feas:
            x, viol = min(feas, key=lambda c: (c[0][0], c[1]))
        else:
            x, viol = min(candidates, key=lambda c: c[1])
        if viol <= config.feas_tol:
            status = OPTIMAL if stat <= config.opt_tol else FEASIBLE
        else:
            status = DIVERGED if exhausted else INFEASIBLE
    return SolveOutcome(
        point=x,
        status=status,
        objective=float(x[0]),
        max_violation=float(viol),
        stationarity=float(stat),
        iterations=total_iter,
        wall_time=time.perf_counter() - t0,
        merit_log=merit_log,
    )


def _try_polish(problem, x):
    if not hasattr(problem, "polish"):
        return None
    try:
        with np.errstate(all="ignore"):
            xp = problem.polish(x)
            vp = problem.max_violation(xp)
    except Exception as exc:  # polishing is best effort
        log.debug("polish failed: %s", exc)
        return None
    return (xp, vp) if np.isfinite(vp) else None


@dataclass
class MultistartResult:
    best: SolveOutcome
    outcomes: list
    status: str

    @property
    def certified(self) -> bool:
        return self.best is not None and self.best.certified


def multistart(problem: NlpProblem, instance=None, config: SolverConfig = SolverConfig(), certify=True) -> MultistartResult:
    """Run :func:`solve_local` from ``initial_point(seed + s)`` for ``s = 1..starts``.

    The best outcome is the feasible one with the smallest objective that
    also passes the oracle verifier (``certify=True``); outcomes are only
    verified when they would improve on the current best.  Returns status
    ``infeasible`` when no start is certified.
    """
    from .verification import verify

    instance = instance if instance is not None else problem.instance
    outcomes = []
    best = None
    for s in range(1, config.starts + 1):
        seed = config.seed + s
        try:
            with np.errstate(all="ignore"):
                x0 = initial_point(problem, seed)
            out = solve_local(problem, x0, config)
        except Exception as exc:  # a broken start must not end the run
            log.warning("start %d failed: %s", seed, exc)
            out = SolveOutcome(np.full(problem.n_var, np.nan), DIVERGED, math.nan, math.inf, math.inf, 0, 0.0)
        out.seed = seed
        outcomes.append(out)
        log.info("start %d: %s d=%.6f viol=%.2e", seed, out.status, out.objective, out.max_violation)
        if not out.feasible or (best is not None and out.objective >= best.objective):
            continue
        if certify:
            out.certificate = verify(
                instance, problem.layout.poses(out.point), out.objective, tol=config.verify_tol
            )
            if not out.certificate.passed:
                log.info("start %d rejected by verifier: %s", seed, out.certificate.failures())
                continue
        best = out
    status = best.status if best is not None else INFEASIBLE
    return MultistartResult(best, outcomes, status)
