"""Augmented Lagrangian solver for box-constrained nonlinear programs.

Problems are duck-typed: anything with ``n_vars``, ``lower``, ``upper`` and
``objective`` works.  Optional attributes ``eq_residuals`` /
``ineq_residuals`` (vector functions, ``h(x) = 0`` and ``c(x) <= 0``) add
constraints, and ``objective_grad``, ``eq_jacobian``, ``ineq_jacobian``
supply derivatives; missing derivatives are replaced by central differences.

Each outer iteration minimizes the augmented Lagrangian over the box with a
projected quasi-Newton method, then updates the multipliers and, when
feasibility stalls, the penalty parameter.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from collections import deque
from typing import Callable, NamedTuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve

logger = logging.getLogger(__name__)

MULTIPLIER_CLIP = 1.0e8
PENALTY_CAP = 1.0e10
# accepted outer iterates may lose at most this factor of feasibility
REJECT_GROWTH = 1.1


class NonFiniteObjectiveError(FloatingPointError):
    pass


@dataclass(frozen=True)
class SolveOptions:
    x0: np.ndarray | None = None
    tol_step: float = 1.0e-9
    tol_obj: float = 1.0e-9
    tol_feas: float = 1.0e-8
    max_outer: int = 50
    max_inner: int = 500
    penalty_init: float = 10.0
    penalty_growth: float = 10.0
    fd_step: float = 1.0e-6
    trace: bool = False

    def __post_init__(self):
        for name in ("tol_step", "tol_obj", "tol_feas", "penalty_init", "fd_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.penalty_growth > 1:
            raise ValueError("penalty_growth must exceed one")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration limits must be positive")


@dataclass
class NlpProblem:
    """A plain container satisfying the solver's problem protocol."""

    objective: Callable
    n_vars: int
    eq_residuals: Callable | None = None
    ineq_residuals: Callable | None = None
    lower: np.ndarray | float = -np.inf
    upper: np.ndarray | float = np.inf
    objective_grad: Callable | None = None
    eq_jacobian: Callable | None = None
    ineq_jacobian: Callable | None = None


@dataclass
class NlpResult:
    x: np.ndarray
    fun: float
    max_eq: float
    max_ineq: float
    converged: bool
    outer_iterations: int
    inner_iterations: int
    message: str
    trace: list = field(default_factory=list)

    @property
    def feasibility(self) -> float:
        return max(self.max_eq, self.max_ineq)


def _steps(x: np.ndarray, fd_step: float) -> np.ndarray:
    return fd_step * (1.0 + np.abs(x))


def gradient(fun: Callable, x, fd_step: float = 1.0e-6) -> np.ndarray:
    """Central-difference gradient with step ``fd_step * (1 + |x_i|)``."""
    x = np.asarray(x, dtype=float)
    h = _steps(x, fd_step)
    grad = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h[i]
        xm[i] -= h[i]
        fp, fm = fun(xp), fun(xm)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteObjectiveError(f"non-finite value probing coordinate {i}")
        grad[i] = (fp - fm) / (xp[i] - xm[i])
    return grad


def jacobian(fun: Callable, x, fd_step: float = 1.0e-6) -> np.ndarray:
    """Central-difference Jacobian of a vector function, one column per coordinate."""
    x = np.asarray(x, dtype=float)
    h = _steps(x, fd_step)
    columns = []
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h[i]
        xm[i] -= h[i]
        diff = np.asarray(fun(xp), dtype=float) - np.asarray(fun(xm), dtype=float)
        if not np.all(np.isfinite(diff)):
            raise NonFiniteObjectiveError(f"non-finite value probing coordinate {i}")
        columns.append(diff / (xp[i] - xm[i]))
    return np.column_stack(columns) if columns else np.zeros((0, 0))


class _Callbacks:
    """Uniform access to a problem's values and derivatives."""

    def __init__(self, problem, fd_step: float):
        self.problem = problem
        self.fd_step = fd_step
        self.n = int(problem.n_vars)
        self.lower = np.broadcast_to(np.asarray(problem.lower, dtype=float), (self.n,))
        self.upper = np.broadcast_to(np.asarray(problem.upper, dtype=float), (self.n,))
        self.eq = getattr(problem, "eq_residuals", None)
        self.ineq = getattr(problem, "ineq_residuals", None)

    def objective(self, x) -> float:
        value = float(self.problem.objective(x))
        if not np.isfinite(value):
            raise NonFiniteObjectiveError("objective returned a non-finite value")
        return value

    def objective_grad(self, x):
        grad = getattr(self.problem, "objective_grad", None)
        if grad is not None:
            return np.asarray(grad(x), dtype=float)
        return gradient(self.objective, x, self.fd_step)

    def _residuals(self, fun, x):
        if fun is None:
            return np.zeros(0)
        return np.atleast_1d(np.asarray(fun(x), dtype=float))

    def eq_values(self, x):
        return self._residuals(self.eq, x)

    def ineq_values(self, x):
        return self._residuals(self.ineq, x)

    def _jacobian(self, fun, name, x, size):
        if fun is None or size == 0:
            return np.zeros((0, self.n))
        jac = getattr(self.problem, name, None)
        if jac is not None:
            return np.asarray(jac(x), dtype=float)
        return jacobian(fun, x, self.fd_step)

    def eq_jac(self, x, size):
        return self._jacobian(self.eq, "eq_jacobian", x, size)

    def ineq_jac(self, x, size):
        return self._jacobian(self.ineq, "ineq_jacobian", x, size)


def _violations(h: np.ndarray, c: np.ndarray):
    max_eq = float(np.max(np.abs(h))) if h.size else 0.0
    max_ineq = float(np.max(np.maximum(c, 0.0))) if c.size else 0.0
    return max_eq, max_ineq


def _project(x, lower, upper):
    return np.minimum(np.maximum(x, lower), upper)


def _bfgs_matrix(pairs, n: int, gamma: float) -> np.ndarray:
    """Dense BFGS matrix built from ``gamma * I`` and the stored pairs."""
    b = gamma * np.eye(n)
    for s, y in pairs:
        bs = b @ s
        b += np.outer(y, y) / np.dot(y, s) - np.outer(bs, bs) / np.dot(s, bs)
    return b


class _Inner(NamedTuple):
    x: np.ndarray
    iterations: int
    pg_norm: float


def _projected_quasi_newton(merit, merit_value, x, lower, upper, max_iter, gtol,
                            memory=10):
    """Minimize a merit function over a box.

    ``merit(x)`` returns ``(value, gradient, gn)`` where ``gn`` is the known
    positive semidefinite part of the Hessian (the Gauss-Newton matrix of the
    penalty).  The rest of the curvature is learned from limited-memory BFGS
    pairs.  Variables held at a bound by the gradient are fixed for the step;
    the others take a quasi-Newton step, followed by a projected Armijo
    backtracking search.
    """
    n = x.size
    f, g, gn = merit(x)
    pairs = deque(maxlen=memory)
    gamma = 1.0
    pg_norm = np.inf

    it = 0
    for it in range(1, max_iter + 1):
        pg = x - _project(x - g, lower, upper)
        pg_norm = float(np.max(np.abs(pg))) if n else 0.0
        if pg_norm <= gtol:
            it -= 1
            break

        eps = min(1.0e-8, pg_norm)
        held = ((x <= lower + eps) & (g > 0)) | ((x >= upper - eps) & (g < 0))
        free = ~held

        d = -g.copy()
        if free.any():
            b = gn + _bfgs_matrix(pairs, n, gamma)
            bff = b[np.ix_(free, free)]
            bff[np.diag_indices_from(bff)] += 1.0e-12 * max(1.0, float(np.max(np.diag(bff))))
            try:
                d[free] = -cho_solve(cho_factor(bff), g[free])
            except np.linalg.LinAlgError:
                d[free] = -g[free]
            if np.dot(g[free], d[free]) >= 0:
                d[free] = -g[free]

        t = 1.0
        for _ in range(60):
            x_t = _project(x + t * d, lower, upper)
            step = x_t - x
            f_t = merit_value(x_t)
            if f_t <= f + 1.0e-4 * np.dot(g, step):
                break
            t *= 0.5
        else:
            break

        f_new, g_new, gn_new = merit(x_t)
        s = x_t - x
        y = g_new - g - gn @ s
        sy = np.dot(s, y)
        if sy > 1.0e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            pairs.append((s, y))
            gamma = float(np.dot(y, y) / sy)

        small_change = abs(f - f_new) <= 1.0e-15 * max(1.0, abs(f))
        x, f, g, gn = x_t, f_new, g_new, gn_new
        if small_change and np.linalg.norm(s) <= 1.0e-14 * max(1.0, np.linalg.norm(x)):
            break

    return _Inner(x, it, pg_norm)


def solve(problem, opts: SolveOptions | None = None) -> NlpResult:
    """Minimize ``problem.objective`` subject to its residuals and box.

    Stops once the iterate is feasible to ``tol_feas`` and either the step
    between outer iterates is below ``tol_step`` or the objective change is
    below ``tol_obj``.  Hitting ``max_outer`` returns the last iterate with
    ``converged=False``.
    """
    opts = opts or SolveOptions()
    cb = _Callbacks(problem, opts.fd_step)

    x = np.ones(cb.n) if opts.x0 is None else np.asarray(opts.x0, dtype=float).copy()
    if x.shape != (cb.n,):
        raise ValueError(f"x0 has shape {x.shape}, expected ({cb.n},)")
    x = _project(x, cb.lower, cb.upper)

    h = cb.eq_values(x)
    c = cb.ineq_values(x)
    state = {"lam_eq": np.zeros(h.size), "lam_in": np.zeros(c.size),
             "mu": opts.penalty_init}

    def merit_value(z):
        lam_eq, lam_in, mu = state["lam_eq"], state["lam_in"], state["mu"]
        f = cb.objective(z)
        if lam_eq.size:
            hz = cb.eq_values(z)
            f += float(np.dot(lam_eq, hz) + 0.5 * mu * np.dot(hz, hz))
        if lam_in.size:
            active = np.maximum(lam_in + mu * cb.ineq_values(z), 0.0)
            f += float(np.dot(active, active) - np.dot(lam_in, lam_in)) / (2.0 * mu)
        return f

    def merit(z):
        lam_eq, lam_in, mu = state["lam_eq"], state["lam_in"], state["mu"]
        f = cb.objective(z)
        g = cb.objective_grad(z)
        gn = np.zeros((cb.n, cb.n))
        if lam_eq.size:
            hz = cb.eq_values(z)
            jac = cb.eq_jac(z, hz.size)
            f += float(np.dot(lam_eq, hz) + 0.5 * mu * np.dot(hz, hz))
            g = g + jac.T @ (lam_eq + mu * hz)
            gn += mu * (jac.T @ jac)
        if lam_in.size:
            cz = cb.ineq_values(z)
            jac = cb.ineq_jac(z, cz.size)
            active = np.maximum(lam_in + mu * cz, 0.0)
            f += float(np.dot(active, active) - np.dot(lam_in, lam_in)) / (2.0 * mu)
            g = g + jac.T @ active
            rows = jac[active > 0]
            gn += mu * (rows.T @ rows)
        return f, g, gn

    fun = cb.objective(x)
    max_eq, max_ineq = _violations(h, c)
    trace = []
    inner_total = 0
    converged = False
    message = "maximum number of outer iterations reached"

    outer = 0
    for outer in range(1, opts.max_outer + 1):
        inner = _projected_quasi_newton(
            merit, merit_value, x, cb.lower, cb.upper, opts.max_inner, gtol=1.0e-11
        )
        x_new = _project(inner.x, cb.lower, cb.upper)
        inner_total += inner.iterations

        h_new = cb.eq_values(x_new)
        c_new = cb.ineq_values(x_new)
        prev_feas = max(max_eq, max_ineq)
        new_eq, new_ineq = _violations(h_new, c_new)
        feas = max(new_eq, new_ineq)

        # an outer step that loses feasibility means the penalty is too weak
        # against negative curvature of the objective: retry from the
        # previous iterate with a stiffer penalty instead of accepting it
        if (feas > REJECT_GROWTH * prev_feas and feas > opts.tol_feas
                and state["mu"] < PENALTY_CAP):
            state["mu"] = min(state["mu"] * opts.penalty_growth, PENALTY_CAP)
            logger.debug("outer %d rejected: feasibility %.3e > %.3e", outer, feas, prev_feas)
            continue

        h, c = h_new, c_new
        max_eq, max_ineq = new_eq, new_ineq
        fun_new = cb.objective(x_new)
        step = float(np.linalg.norm(x_new - x))
        change = abs(fun_new - fun)
        x, fun = x_new, fun_new

        trace.append((outer, inner.iterations, fun, max_eq, step))
        logger.debug(
            "outer %d: inner %d J %.12g feas %.3e step %.3e mu %.1e",
            outer, inner.iterations, fun, feas, step, state["mu"],
        )

        if feas <= opts.tol_feas and (step < opts.tol_step or change < opts.tol_obj):
            converged = True
            message = "converged"
            break

        mu = state["mu"]
        if h.size:
            state["lam_eq"] = np.clip(state["lam_eq"] + mu * h, -MULTIPLIER_CLIP, MULTIPLIER_CLIP)
        if c.size:
            state["lam_in"] = np.clip(state["lam_in"] + mu * c, 0.0, MULTIPLIER_CLIP)
        if feas > opts.tol_feas and feas > 0.25 * prev_feas:
            state["mu"] = min(mu * opts.penalty_growth, PENALTY_CAP)

    return NlpResult(
        x=x,
        fun=fun,
        max_eq=max_eq,
        max_ineq=max_ineq,
        converged=converged,
        outer_iterations=outer,
        inner_iterations=inner_total,
        message=message,
        trace=trace if opts.trace else [],
    )
