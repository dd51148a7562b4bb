"""Periodic fractional optimal control: model, transcription and solution.

The decision vector stacks the node values of every state and then every
control, ``[y1(t_0..t_{N-1}), ..., yn(...), u1(...), ...]``.  Dynamics
defects are ordered the same way, state-major.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from fgps import nlp
from fgps.exprdsl import EvalEnv, EvaluationError, Expr, evaluate, parse
from fgps.fourier import FourierGrid
from fgps.fracderiv import FgpsFim, FractionalOrder, build_fim
from fgps.gegenbauer import QuadratureRule

logger = logging.getLogger(__name__)


class ProblemError(ValueError):
    pass


@dataclass(frozen=True)
class OcpProblem:
    """``min (1/T) int_0^T g  s.t.  D^alpha x = f(x, u, t),  c(x, u, t) <= 0`` plus boxes."""

    period: float
    order: FractionalOrder
    g: Expr
    f: tuple
    c: tuple = ()
    state_bounds: tuple = ()
    control_bounds: tuple = ()
    name: str = ""

    def __post_init__(self):
        n_x, n_u = self.g.n_x, self.g.n_u
        if len(self.f) != n_x:
            raise ProblemError(f"{len(self.f)} dynamics expressions for {n_x} states")
        for expr in (*self.f, *self.c):
            if (expr.n_x, expr.n_u) != (n_x, n_u):
                raise ProblemError(f"arity mismatch in expression {expr.source!r}")
        if len(self.state_bounds) != n_x or len(self.control_bounds) != n_u:
            raise ProblemError("one (lower, upper) pair is needed per state and control")
        for lo, hi in (*self.state_bounds, *self.control_bounds):
            if lo > hi:
                raise ProblemError(f"empty bound interval [{lo}, {hi}]")
        if not self.period > 0:
            raise ProblemError("period must be positive")

    @property
    def n_x(self) -> int:
        return self.g.n_x

    @property
    def n_u(self) -> int:
        return self.g.n_u

    @property
    def p(self) -> int:
        return len(self.c)

    def with_order(self, alpha: float, memory: float | None = None) -> OcpProblem:
        memory = self.order.memory if memory is None else memory
        return replace(self, order=FractionalOrder(alpha, memory))


def _pair(bound) -> tuple:
    lo, hi = (float(v) for v in bound)
    return lo, hi


def problem_from_dict(data: dict, name: str = "") -> OcpProblem:
    """Build a problem from the JSON schema used by the command line."""
    try:
        f_src = list(data["f"])
        n_x = len(f_src)
        control_bounds = [_pair(b) for b in data["control_bounds"]]
        n_u = len(control_bounds)
        state_bounds = [_pair(b) for b in data["state_bounds"]]
        order = FractionalOrder(float(data["alpha"]), float(data["memory"]))
        return OcpProblem(
            period=float(data["period"]),
            order=order,
            g=parse(data["g"], n_x, n_u),
            f=tuple(parse(s, n_x, n_u) for s in f_src),
            c=tuple(parse(s, n_x, n_u) for s in data.get("c", [])),
            state_bounds=tuple(state_bounds),
            control_bounds=tuple(control_bounds),
            name=name,
        )
    except KeyError as exc:
        raise ProblemError(f"missing field {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ProblemError):
            raise
        raise ProblemError(str(exc)) from exc


def load_problem(path) -> OcpProblem:
    """Read a problem file; malformed JSON is reported with its line and column."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ProblemError(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(data, dict):
        raise ProblemError(f"{path}: expected a JSON object at the top level")
    try:
        return problem_from_dict(data, name=path.stem)
    except ProblemError as exc:
        raise ProblemError(f"{path}: {exc}") from exc


def benchmark_problem(alpha: float = 0.99999, memory: float = 30.0) -> OcpProblem:
    """Two-state oscillator with a proper periodic optimum, period pi."""
    n_x, n_u = 2, 1
    return OcpProblem(
        period=np.pi,
        order=FractionalOrder(alpha, memory),
        g=parse("u1^2 - y1^2", n_x, n_u),
        f=(parse("y2", n_x, n_u), parse("-4*y1 - 0.3*y2 + u1", n_x, n_u)),
        state_bounds=((-5.0, 5.0), (-5.0, 5.0)),
        control_bounds=((-1.0, 1.0),),
        name="gaitsgory-proper-periodic",
    )


REGISTRY = {"gaitsgory-proper-periodic": benchmark_problem}


def registered_problem(name: str, alpha: float = 0.99999, memory: float = 30.0):
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise ProblemError(
            f"unknown problem {name!r}; registered: {', '.join(sorted(REGISTRY))}"
        ) from None
    return factory(alpha, memory)


class TranscribedNlp:
    """Finite-dimensional image of an :class:`OcpProblem` on ``N`` nodes.

    Pointwise expressions only couple the variables of one node, so their
    derivatives are taken by central differences that perturb one variable
    at every node at once.  The fractional derivative term is linear and
    differentiated exactly.
    """

    def __init__(self, problem: OcpProblem, n: int, rule: QuadratureRule,
                 fd_step: float = 1.0e-6, fim: FgpsFim | None = None):
        self.problem = problem
        self.grid = FourierGrid(problem.period, n)
        self.rule = rule
        self.fim = fim if fim is not None else build_fim(self.grid, rule, problem.order)
        self.fd_step = fd_step
        self.n = n
        self.n_x, self.n_u, self.p = problem.n_x, problem.n_u, problem.p
        self.n_vars = n * (self.n_x + self.n_u)
        self.n_eq = n * self.n_x
        self.n_ineq = n * self.p

        bounds = np.array([*problem.state_bounds, *problem.control_bounds], dtype=float)
        self.lower = np.repeat(bounds[:, 0], n)
        self.upper = np.repeat(bounds[:, 1], n)
        self._operator = self.fim.matrix
        self._t = self.grid.nodes

    # layout helpers

    def split(self, x):
        """``(states, controls)`` with shapes ``(n_x, N)`` and ``(n_u, N)``."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_vars,):
            raise ValueError(f"decision vector has shape {x.shape}, expected ({self.n_vars},)")
        states = x[: self.n_eq].reshape(self.n_x, self.n)
        controls = x[self.n_eq:].reshape(self.n_u, self.n)
        return states, controls

    def join(self, states, controls) -> np.ndarray:
        return np.concatenate([np.ravel(states), np.ravel(controls)])

    def _blocks(self, x):
        x = np.asarray(x, dtype=float)
        return x.reshape(self.n_x + self.n_u, self.n)

    def _pointwise(self, exprs, blocks, label):
        env = EvalEnv(self._t, blocks[: self.n_x], blocks[self.n_x:])
        out = np.empty((len(exprs), self.n))
        for i, expr in enumerate(exprs):
            try:
                out[i] = np.broadcast_to(evaluate(expr, env), (self.n,))
            except EvaluationError as exc:
                raise nlp.NonFiniteObjectiveError(f"{label}[{i}] = {expr.source!r}: {exc}") from exc
        return out

    def _pointwise_jac(self, exprs, x, label):
        """``d expr_i(node l) / d var_v(node l)`` with shape ``(len(exprs), n_vars_per_node, N)``."""
        blocks = self._blocks(x)
        h = self.fd_step * (1.0 + np.abs(blocks))
        jac = np.empty((len(exprs), blocks.shape[0], self.n))
        for v in range(blocks.shape[0]):
            plus = blocks.copy()
            minus = blocks.copy()
            plus[v] += h[v]
            minus[v] -= h[v]
            jac[:, v, :] = (
                self._pointwise(exprs, plus, label) - self._pointwise(exprs, minus, label)
            ) / (plus[v] - minus[v])
        return jac

    # objective

    def objective(self, x) -> float:
        """Node mean of the running cost, the periodic rectangle rule for ``(1/T) int g``."""
        return float(np.mean(self._pointwise([self.problem.g], self._blocks(x), "g")))

    def objective_grad(self, x) -> np.ndarray:
        jac = self._pointwise_jac([self.problem.g], x, "g")[0]
        return jac.ravel() / self.n

    # dynamics defects

    def eq_residuals(self, x) -> np.ndarray:
        blocks = self._blocks(x)
        deriv = blocks[: self.n_x] @ self._operator.T
        return (deriv - self._pointwise(self.problem.f, blocks, "f")).ravel()

    def eq_residual(self, x, l: int, j: int) -> float:
        """Defect of state ``j`` (0-based) at node ``l``."""
        return float(self.eq_residuals(x)[j * self.n + l])

    def eq_jacobian(self, x) -> np.ndarray:
        n, n_x = self.n, self.n_x
        jac = np.zeros((self.n_eq, self.n_vars))
        for j in range(n_x):
            jac[j * n:(j + 1) * n, j * n:(j + 1) * n] = self._operator
        local = self._pointwise_jac(self.problem.f, x, "f")
        rows = np.arange(n)
        for j in range(n_x):
            for v in range(n_x + self.n_u):
                jac[j * n + rows, v * n + rows] -= local[j, v]
        return jac

    # path constraints

    def ineq_residuals(self, x) -> np.ndarray | None:
        if not self.p:
            return np.zeros(0)
        return self._pointwise(self.problem.c, self._blocks(x), "c").ravel()

    def ineq_jacobian(self, x) -> np.ndarray:
        n = self.n
        jac = np.zeros((self.n_ineq, self.n_vars))
        if not self.p:
            return jac
        local = self._pointwise_jac(self.problem.c, x, "c")
        rows = np.arange(n)
        for i in range(self.p):
            for v in range(self.n_x + self.n_u):
                jac[i * n + rows, v * n + rows] = local[i, v]
        return jac

    def box_feasible(self, x) -> bool:
        x = np.asarray(x)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))


def transcribe(problem: OcpProblem, n: int, rule: QuadratureRule, **kwargs) -> TranscribedNlp:
    return TranscribedNlp(problem, n, rule, **kwargs)


@dataclass
class OcpSolution:
    states: np.ndarray
    controls: np.ndarray
    objective_value: float
    adfe: np.ndarray
    iterations: int
    converged: bool
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    x: np.ndarray = field(default_factory=lambda: np.zeros(0))
    alpha: float = float("nan")
    message: str = ""
    trace: list = field(default_factory=list)

    @property
    def max_adfe(self) -> float:
        return float(np.max(self.adfe)) if self.adfe.size else 0.0

    def adfe_at_nodes(self) -> np.ndarray:
        """Largest defect over the states at each node."""
        n = self.states.shape[0]
        return self.adfe.reshape(-1, n).max(axis=0)


def adfe(problem: OcpProblem, n: int, rule: QuadratureRule, x) -> np.ndarray:
    """Absolute dynamics defects at the nodes, from a freshly built matrix."""
    grid = FourierGrid(problem.period, n)
    fim = build_fim(grid, rule, problem.order)
    states = np.asarray(x, dtype=float)[: n * problem.n_x].reshape(problem.n_x, n)
    controls = np.asarray(x, dtype=float)[n * problem.n_x:].reshape(problem.n_u, n)
    env = EvalEnv(grid.nodes, states, controls)
    rhs = np.array([np.broadcast_to(evaluate(e, env), (n,)) for e in problem.f])
    return np.abs(fim.scale * (states @ fim.entries.T) - rhs).ravel()


def default_starts(nlp_problem: TranscribedNlp, seed: int = 0) -> list:
    """Seeded perturbation of all ones, then all ones, negated controls and the box midpoint.

    The unperturbed starts are constant in time.  Both the dynamics and the
    circulant derivative commute with shifting the grid, so iterates started
    there stay constant and can stall at a stationary point (for the
    benchmark the saddle with ``J = 0``).  The perturbed start breaks that
    symmetry and comes first.
    """
    ones = np.clip(np.ones(nlp_problem.n_vars), nlp_problem.lower, nlp_problem.upper)
    rng = np.random.default_rng(seed)
    perturbed = np.clip(
        ones + 0.1 * rng.standard_normal(nlp_problem.n_vars),
        nlp_problem.lower, nlp_problem.upper,
    )
    flipped = ones.copy()
    flipped[nlp_problem.n_eq:] *= -1.0
    flipped = np.clip(flipped, nlp_problem.lower, nlp_problem.upper)
    lo, hi = nlp_problem.lower, nlp_problem.upper
    mid = np.where(np.isfinite(lo) & np.isfinite(hi), 0.5 * (lo + hi), 0.0)
    return [perturbed, ones, flipped, mid]


def _better(a: nlp.NlpResult, b: nlp.NlpResult | None, tol_feas: float) -> bool:
    if b is None:
        return True
    a_ok = a.feasibility <= 100.0 * tol_feas
    b_ok = b.feasibility <= 100.0 * tol_feas
    if a_ok != b_ok:
        return a_ok
    if not a_ok:
        return a.feasibility < b.feasibility
    return a.fun < b.fun


def solve(
    problem: OcpProblem,
    n: int,
    rule: QuadratureRule,
    opts: nlp.SolveOptions | None = None,
    restarts: bool = True,
    seed: int = 0,
) -> OcpSolution:
    """Transcribe and solve, keeping the best of several deterministic starts.

    ``opts.x0`` (when given) is tried first; with ``restarts`` the default
    starts from :func:`default_starts` are tried as well.
    """
    opts = opts or nlp.SolveOptions()
    tnlp = transcribe(problem, n, rule, fd_step=opts.fd_step)

    starts = []
    if opts.x0 is not None:
        starts.append(np.asarray(opts.x0, dtype=float))
    if restarts or not starts:
        starts.extend(default_starts(tnlp, seed))
        if opts.x0 is None and not restarts:
            starts = starts[:1]

    best = None
    total_iterations = 0
    for i, x0 in enumerate(starts):
        result = nlp.solve(tnlp, replace(opts, x0=x0))
        total_iterations += result.inner_iterations
        logger.info(
            "start %d: J = %.10g feasibility %.2e converged %s",
            i, result.fun, result.feasibility, result.converged,
        )
        if _better(result, best, opts.tol_feas):
            best = result

    states, controls = tnlp.split(best.x)
    defects = adfe(problem, n, rule, best.x)
    return OcpSolution(
        states=states.T.copy(),
        controls=controls.T.copy(),
        objective_value=best.fun,
        adfe=defects,
        iterations=total_iterations,
        converged=best.converged,
        times=tnlp.grid.nodes,
        x=best.x,
        alpha=problem.order.alpha,
        message=best.message,
        trace=best.trace,
    )


def evolve_alpha(
    problem: OcpProblem,
    alphas,
    n: int,
    rule: QuadratureRule,
    opts: nlp.SolveOptions | None = None,
    warm_start: bool = True,
    seed: int = 0,
):
    """Solve the problem for each order in turn, warm starting from the previous one.

    Returns ``(alpha, solution or exception)`` pairs; a failure at one order
    does not stop the sweep.
    """
    opts = opts or nlp.SolveOptions()
    results = []
    previous = None
    for alpha in alphas:
        try:
            current = problem.with_order(alpha)
            run_opts = opts
            if warm_start and previous is not None:
                run_opts = replace(opts, x0=previous.x)
            solution = solve(current, n, rule, run_opts, seed=seed)
        except (ValueError, FloatingPointError, RuntimeError) as exc:
            logger.warning("alpha = %g failed: %s", alpha, exc)
            results.append((alpha, exc))
            continue
        previous = solution
        results.append((alpha, solution))
    return results
