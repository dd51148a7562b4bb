"""Command line interface: ``fgps <subcommand> [options]``.

Every subcommand writes CSV files into the output directory (``--out``, else
``$FGPS_OUT_DIR``, else the current directory).  Exit status is 0 on
success, 1 when a numerical procedure did not converge and 2 for invalid
input.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from fgps import errorbound, nlp, ocp
from fgps.exprdsl import EvalEnv, ExprError, evaluate, parse
from fgps.fourier import FourierGrid, interpolate
from fgps.fracderiv import (
    FractionalOrder,
    approx_fd_at_nodes,
    build_fim,
    reduced_fd_oracle,
)
from fgps.gegenbauer import ConvergenceError, QuadratureRule
from fgps.svgplot import line_chart

logger = logging.getLogger("fgps")

EXIT_OK = 0
EXIT_NOT_CONVERGED = 1
EXIT_INPUT = 2

NODES_HEADER = ["index", "node", "shifted_node", "weight"]
FRACDERIV_HEADER = ["node_index", "t", "approx", "oracle", "abs_error"]
BOUND_HEADER = ["param", "value", "bound_log10"]
TRACE_HEADER = ["outer", "inner", "J", "max_eq_residual", "step_norm"]
JN_HEADER = ["N", "J_N"]
SWEEP_INDEX_HEADER = ["alpha", "file", "J_N", "max_adfe", "converged"]

# samples used to expand a custom expression in a Fourier series
_SPECTRAL_SAMPLES = 1024


class InputError(ValueError):
    pass


def fmt(value) -> str:
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % value
    return str(value)


def write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    logger.info("wrote %s", path)
    return path


# {{{ run configuration


@dataclass
class RunConfig:
    subcommand: str
    n: list = field(default_factory=list)
    ng: int = 1000
    lam: float = 0.0
    alphas: list = field(default_factory=list)
    memory: float = 30.0
    period: float | None = None
    problem: str | None = None
    out_dir: Path = Path(".")
    svg: bool = False
    seed: int = 0
    jobs: int = 1

    def validate(self):
        for n in self.n:
            if n <= 0 or n % 2:
                raise InputError(f"N must be a positive even integer, got {n}")
        if self.ng < 0:
            raise InputError(f"N_G must be non-negative, got {self.ng}")
        if not self.lam > -0.5:
            raise InputError(f"lambda must exceed -1/2, got {self.lam}")
        if not self.memory > 0:
            raise InputError(f"memory length must be positive, got {self.memory}")
        if self.period is not None and not self.period > 0:
            raise InputError(f"period must be positive, got {self.period}")
        for alpha in self.alphas:
            FractionalOrder(alpha, self.memory)
        if self.jobs < 1:
            raise InputError("--jobs must be at least 1")


def _parse_range(text: str, kind):
    """``"a"`` or an inclusive ``"start:step:stop"`` range."""
    parts = text.split(":")
    try:
        values = [kind(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number or start:step:stop range: {text!r}")
    if len(values) == 1:
        return values
    if len(values) != 3 or values[1] <= 0:
        raise argparse.ArgumentTypeError(f"ranges are start:step:stop with step > 0: {text!r}")
    start, step, stop = values
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    if count < 1:
        raise argparse.ArgumentTypeError(f"empty range {text!r}")
    out = [start + i * step for i in range(count)]
    return [kind(round(v, 12)) if kind is float else kind(v) for v in out]


def _int_list(text):
    return _parse_range(text, int)


def _float_list(text):
    return _parse_range(text, float)


def _flatten(values):
    return [v for group in values or [] for v in group]


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("FGPS_OUT_DIR") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _config(args, subcommand) -> RunConfig:
    n = getattr(args, "n", None)
    if isinstance(n, int):
        n = [n]
    cfg = RunConfig(
        subcommand=subcommand,
        n=_flatten(n) if n and isinstance(n[0], list) else list(n or []),
        ng=getattr(args, "ng", 1000),
        lam=getattr(args, "lam", 0.0),
        alphas=_flatten(getattr(args, "alpha", None)),
        memory=getattr(args, "memory", 30.0),
        period=getattr(args, "period", None),
        problem=getattr(args, "problem", None),
        out_dir=_out_dir(args),
        svg=getattr(args, "svg", False),
        seed=args.seed,
        jobs=getattr(args, "jobs", 1),
    )
    cfg.validate()
    return cfg


def _rule(cfg: RunConfig) -> QuadratureRule:
    return QuadratureRule.build(cfg.ng, cfg.lam)


# }}}


# {{{ nodes


def cmd_nodes(args) -> int:
    cfg = _config(args, "nodes")
    rule = _rule(cfg)
    rows = [
        (i, rule.nodes[i], rule.shifted_nodes[i], rule.weights[i]) for i in range(rule.size)
    ]
    write_csv(cfg.out_dir / "nodes.csv", NODES_HEADER, rows)
    return EXIT_OK


# }}}


# {{{ fractional derivatives


class _SpectralFunction:
    """A smooth periodic function of ``t`` known through a truncated Fourier series."""

    def __init__(self, fun, period: float, samples: int = _SPECTRAL_SAMPLES):
        t = period * np.arange(samples) / samples
        coeffs = np.fft.rfft(fun(t)) / samples
        scale = max(float(np.max(np.abs(coeffs))), 1e-300)
        tail = np.abs(coeffs[3 * len(coeffs) // 4:])
        self.resolved = bool(np.all(tail <= 1e-12 * scale))
        keep = np.nonzero(np.abs(coeffs) > 1e-15 * scale)[0]
        self.k = keep
        self.c = coeffs[keep]
        # the real series counts each positive mode twice, except k = 0 and Nyquist
        self.w = np.where((keep == 0) | (2 * keep == samples), 1.0, 2.0)
        self.omega = 2.0 * np.pi / period

    def derivative(self, m: int):
        factor = self.w * self.c * (1j * self.omega * self.k) ** m

        def fm(t):
            t = np.asarray(t, dtype=float)
            phase = np.exp(1j * self.omega * np.multiply.outer(t, self.k))
            return np.real(phase @ factor)

        return fm


def _target(func: str, period: float):
    """``(samples(t), m-th derivative factory, resolved)`` for a named function or expression."""
    if func == "sin":
        return np.sin, lambda m: (lambda t: np.sin(np.asarray(t) + 0.5 * m * np.pi)), True
    if func == "cos":
        return np.cos, lambda m: (lambda t: np.cos(np.asarray(t) + 0.5 * m * np.pi)), True

    expr = parse(func)

    def values(t):
        t = np.asarray(t, dtype=float)
        return np.broadcast_to(evaluate(expr, EvalEnv(t)), t.shape).astype(float)

    spectral = _SpectralFunction(values, period)
    return values, spectral.derivative, spectral.resolved


def fracderiv_table(func, alpha, memory, n, rule, period, seed=0):
    """Per-node rows and the oracle status for one ``(alpha, N)``."""
    order = FractionalOrder(alpha, memory)
    grid = FourierGrid(period, n)
    values, derivative, resolved = _target(func, period)
    fim = build_fim(grid, rule, order, seed=seed)
    approx = approx_fd_at_nodes(fim, values(grid.nodes))
    oracle = reduced_fd_oracle(derivative(order.m), order, grid.nodes)
    exact = np.asarray(oracle.value)
    errors = np.abs(approx - exact)
    rows = [(i, grid.nodes[i], approx[i], exact[i], errors[i]) for i in range(n)]
    return rows, float(np.max(errors)), oracle.converged and resolved, oracle.delta


def _fracderiv_rows_with_summary(rows, max_error, ok, delta):
    out = list(rows) + [("max_abs_error", "", "", "", max_error)]
    if not ok:
        out.append(("oracle_unconverged", "", "", "", delta))
    return out


def cmd_fracderiv(args) -> int:
    cfg = _config(args, "fracderiv")
    period = cfg.period or 2.0 * np.pi
    alpha = cfg.alphas[-1] if cfg.alphas else 1.5
    n = cfg.n[-1] if cfg.n else 100
    rows, max_error, ok, delta = fracderiv_table(
        args.func, alpha, cfg.memory, n, _rule(cfg), period, cfg.seed
    )
    write_csv(
        cfg.out_dir / "fracderiv.csv",
        FRACDERIV_HEADER,
        _fracderiv_rows_with_summary(rows, max_error, ok, delta),
    )
    print(f"max_abs_error {max_error:.6e}")
    if cfg.svg:
        t = [r[1] for r in rows]
        svg = line_chart(
            [("approx", t, [r[2] for r in rows]), ("oracle", t, [r[3] for r in rows])],
            title=f"D^{alpha:g} {args.func}, N = {n}",
            xlabel="t",
        )
        (cfg.out_dir / "fracderiv.svg").write_text(svg)
    if not ok:
        logger.error("the reference quadrature did not converge (last change %.3e)", delta)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _convergence_row(job):
    func, alpha, memory, sizes, ng, lam, period, seed = job
    rule = QuadratureRule.build(ng, lam)
    errors, ok = [], True
    for n in sizes:
        _, max_error, converged, _ = fracderiv_table(func, alpha, memory, n, rule, period, seed)
        errors.append(max_error)
        ok = ok and converged
    return errors, ok


def cmd_convergence(args) -> int:
    cfg = _config(args, "convergence")
    if not cfg.n:
        raise InputError("convergence needs at least one --n")
    if not cfg.alphas:
        raise InputError("convergence needs at least one --alpha")
    period = cfg.period or 2.0 * np.pi
    jobs = [
        (args.func, a, cfg.memory, cfg.n, cfg.ng, cfg.lam, period, cfg.seed) for a in cfg.alphas
    ]
    results = _map(_convergence_row, jobs, cfg.jobs)
    rows = [(a, *errors) for a, (errors, _) in zip(cfg.alphas, results)]
    write_csv(cfg.out_dir / "convergence.csv", ["alpha", *(f"N={n}" for n in cfg.n)], rows)
    if cfg.svg:
        series = [(f"alpha={a:g}", cfg.n, np.log10(np.maximum(e, 1e-300))) for a, (e, _) in zip(cfg.alphas, results)]
        svg = line_chart(series, title="max node error", xlabel="N", ylabel="log10 error")
        (cfg.out_dir / "convergence.svg").write_text(svg)
    if not all(ok for _, ok in results):
        logger.error("the reference quadrature did not converge for some entries")
        return EXIT_NOT_CONVERGED
    return EXIT_OK


# }}}


# {{{ bound


def cmd_bound(args) -> int:
    cfg = _config(args, "bound")
    rows = errorbound.bound_report(
        memories=args.vary_memory or (10.0, 30.0, 90.0),
        sizes=args.vary_n or (8, 16),
        ceilings=args.vary_m or (1, 2),
        n=cfg.n[-1] if cfg.n else 8,
        memory=cfg.memory,
        offset=args.offset,
        lam=cfg.lam,
        ng=cfg.ng,
        zeta=args.zeta,
    )
    write_csv(cfg.out_dir / "bound.csv", BOUND_HEADER, rows)
    return EXIT_OK


# }}}


# {{{ optimal control


def _solve_options(args) -> nlp.SolveOptions:
    return nlp.SolveOptions(
        tol_step=args.tol_step,
        tol_obj=args.tol_obj,
        tol_feas=args.tol_feas,
        max_outer=args.max_outer,
        max_inner=args.max_inner,
        trace=getattr(args, "trace", False),
    )


def _problem(cfg: RunConfig, alpha: float | None) -> ocp.OcpProblem:
    name = cfg.problem
    if name in ocp.REGISTRY:
        problem = ocp.registered_problem(name, alpha if alpha is not None else 0.99999, cfg.memory)
    elif Path(name).suffix == ".json" or Path(name).exists():
        if not Path(name).is_file():
            raise InputError(f"problem file {name!r} not found")
        problem = ocp.load_problem(name)
        if alpha is not None:
            problem = problem.with_order(alpha)
    else:
        raise InputError(
            f"{name!r} is neither a problem file nor a registered problem "
            f"({', '.join(sorted(ocp.REGISTRY))})"
        )
    if cfg.period is not None:
        problem = replace(problem, period=cfg.period)
    return problem


def solution_rows(problem: ocp.OcpProblem, solution: ocp.OcpSolution):
    header = ["node", "t"]
    header += [f"y{i + 1}" for i in range(problem.n_x)]
    header += [f"u{i + 1}" for i in range(problem.n_u)]
    header.append("adfe_max_at_node")
    if not solution.converged:
        header.append("converged")
    per_node = solution.adfe_at_nodes()
    rows = []
    for l, t in enumerate(solution.times):
        row = [l, t, *solution.states[l], *solution.controls[l], per_node[l]]
        if not solution.converged:
            row.append(0)
        rows.append(row)
    return header, rows


def _plot_solution(problem, solution, path: Path, title: str):
    grid = FourierGrid(problem.period, solution.states.shape[0])
    t = np.linspace(0.0, problem.period, 100)
    series = [
        (f"y{i + 1}", t, interpolate(grid, solution.states[:, i], t)) for i in range(problem.n_x)
    ]
    series += [
        (f"u{i + 1}", t, interpolate(grid, solution.controls[:, i], t)) for i in range(problem.n_u)
    ]
    path.write_text(line_chart(series, title=title, xlabel="t"))


def _report(problem, n, solution):
    print(f"problem {problem.name} alpha {problem.order.alpha:g} N {n}")
    print(f"J_N {solution.objective_value:.12g}")
    print(f"max_adfe {solution.max_adfe:.3e}")
    print(f"converged {solution.converged} ({solution.message}), {solution.iterations} inner iterations")


def cmd_solve(args) -> int:
    cfg = _config(args, "solve")
    alpha = cfg.alphas[-1] if cfg.alphas else None
    problem = _problem(cfg, alpha)
    n = cfg.n[-1] if cfg.n else 100
    opts = _solve_options(args)
    solution = ocp.solve(problem, n, _rule(cfg), opts, seed=cfg.seed)

    header, rows = solution_rows(problem, solution)
    write_csv(cfg.out_dir / "solution.csv", header, rows)
    if opts.trace:
        write_csv(cfg.out_dir / "trace.csv", TRACE_HEADER, solution.trace)
    if cfg.svg:
        _plot_solution(problem, solution, cfg.out_dir / "solution.svg",
                       f"alpha = {problem.order.alpha:g}, N = {n}")
    _report(problem, n, solution)
    return EXIT_OK if solution.converged else EXIT_NOT_CONVERGED


def _solve_job(job):
    problem, n, ng, lam, opts, seed = job
    try:
        return ocp.solve(problem, n, QuadratureRule.build(ng, lam), opts, seed=seed)
    except (ValueError, FloatingPointError, RuntimeError) as exc:
        return exc


def _map(fun, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fun(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fun, jobs))


def cmd_sweep_alpha(args) -> int:
    cfg = _config(args, "sweep-alpha")
    if not cfg.alphas:
        raise InputError("sweep-alpha needs at least one --alpha")
    n = cfg.n[-1] if cfg.n else 100
    opts = _solve_options(args)
    base = _problem(cfg, cfg.alphas[0])

    if args.no_warm_start:
        jobs = [(base.with_order(a), n, cfg.ng, cfg.lam, opts, cfg.seed) for a in cfg.alphas]
        results = list(zip(cfg.alphas, _map(_solve_job, jobs, cfg.jobs)))
    else:
        results = ocp.evolve_alpha(base, cfg.alphas, n, _rule(cfg), opts, seed=cfg.seed)

    index, status = [], EXIT_OK
    plots = []
    for i, (alpha, solution) in enumerate(results):
        name = f"solution_{i:02d}_alpha_{alpha!r}.csv"
        if isinstance(solution, Exception):
            logger.error("alpha = %g: %s", alpha, solution)
            index.append((alpha, "", math.nan, math.nan, 0))
            status = EXIT_NOT_CONVERGED
            continue
        header, rows = solution_rows(base, solution)
        write_csv(cfg.out_dir / name, header, rows)
        index.append((alpha, name, solution.objective_value, solution.max_adfe, int(solution.converged)))
        if not solution.converged:
            status = EXIT_NOT_CONVERGED
        plots.append((alpha, solution))
    write_csv(cfg.out_dir / "sweep_index.csv", SWEEP_INDEX_HEADER, index)

    if cfg.svg and plots:
        grid = FourierGrid(base.period, n)
        t = np.linspace(0.0, base.period, 100)
        for k in range(base.n_x):
            series = [(f"alpha={a:g}", t, interpolate(grid, s.states[:, k], t)) for a, s in plots]
            (cfg.out_dir / f"sweep_y{k + 1}.svg").write_text(line_chart(series, title=f"y{k + 1}", xlabel="t"))
        for k in range(base.n_u):
            series = [(f"alpha={a:g}", t, interpolate(grid, s.controls[:, k], t)) for a, s in plots]
            (cfg.out_dir / f"sweep_u{k + 1}.svg").write_text(line_chart(series, title=f"u{k + 1}", xlabel="t"))
    return status


def cmd_jn_table(args) -> int:
    cfg = _config(args, "jn-table")
    sizes = sorted(set(cfg.n)) if cfg.n else list(range(10, 101, 10))
    alpha = cfg.alphas[-1] if cfg.alphas else None
    problem = _problem(cfg, alpha)
    opts = _solve_options(args)
    jobs = [(problem, n, cfg.ng, cfg.lam, opts, cfg.seed) for n in sizes]
    results = _map(_solve_job, jobs, cfg.jobs)

    ok = [not isinstance(s, Exception) and s.converged for s in results]
    values = [math.nan if isinstance(s, Exception) else s.objective_value for s in results]
    for n, s in zip(sizes, results):
        if isinstance(s, Exception):
            logger.error("N = %d: %s", n, s)
    if all(ok):
        write_csv(cfg.out_dir / "jn_table.csv", JN_HEADER, zip(sizes, values))
    else:
        write_csv(cfg.out_dir / "jn_table.csv", JN_HEADER + ["converged"],
                  zip(sizes, values, map(int, ok)))
    if cfg.svg:
        svg = line_chart([("J_N", sizes, values)], title="performance index", xlabel="N")
        (cfg.out_dir / "jn_table.svg").write_text(svg)
    for n, v in zip(sizes, values):
        print(f"{n} {v:.12g}")
    return EXIT_OK if all(ok) else EXIT_NOT_CONVERGED


# }}}


# {{{ argument parsing


def _add_common(p, *, n_list=False, n_default=None, alpha_list=True):
    if n_list:
        p.add_argument("--n", type=_int_list, action="append",
                       help="grid size; repeatable, accepts start:step:stop")
    else:
        p.add_argument("--n", type=int, default=n_default, help="grid size (even)")
    p.add_argument("--ng", type=int, default=1000, help="Gegenbauer quadrature degree N_G")
    p.add_argument("--lambda", dest="lam", type=float, default=0.0, help="Gegenbauer parameter")
    if alpha_list:
        p.add_argument("--alpha", type=_float_list, action="append",
                       help="fractional order; repeatable, accepts start:step:stop")
    p.add_argument("--memory", type=float, default=30.0, help="memory length L")
    p.add_argument("--period", type=float, default=None, help="period T")
    p.add_argument("--out", default=None, help="output directory (default $FGPS_OUT_DIR or .)")
    p.add_argument("--svg", action="store_true", help="also write SVG plots")
    p.add_argument("--seed", type=int, default=0, help="seed for randomized checks and starts")


def _add_solver(p):
    defaults = nlp.SolveOptions()
    p.add_argument("problem", help="registered problem name or JSON problem file")
    p.add_argument("--tol-step", type=float, default=defaults.tol_step)
    p.add_argument("--tol-obj", type=float, default=defaults.tol_obj)
    p.add_argument("--tol-feas", type=float, default=defaults.tol_feas)
    p.add_argument("--max-outer", type=int, default=defaults.max_outer)
    p.add_argument("--max-inner", type=int, default=defaults.max_inner)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fgps",
        description="Fourier-Gegenbauer pseudospectral fractional derivatives and periodic optimal control.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("nodes", help="Gegenbauer-Gauss nodes and quadrature weights")
    _add_common(p, alpha_list=False)
    p.set_defaults(handler=cmd_nodes)

    p = sub.add_parser("fracderiv", help="fractional derivative at the nodes against a reference")
    p.add_argument("--func", default="sin", help="sin, cos, or an expression in t")
    _add_common(p, n_default=100)
    p.set_defaults(handler=cmd_fracderiv)

    p = sub.add_parser("convergence", help="max node error over a grid of orders and sizes")
    p.add_argument("--func", default="sin", help="sin, cos, or an expression in t")
    _add_common(p, n_list=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(handler=cmd_convergence)

    p = sub.add_parser("bound", help="truncation-error bound while varying L, N and m")
    _add_common(p, n_default=8, alpha_list=False)
    p.set_defaults(ng=100)
    p.add_argument("--offset", type=float, default=0.5, help="alpha = m - offset")
    p.add_argument("--zeta", type=float, default=1.0)
    p.add_argument("--vary-memory", type=float, action="append")
    p.add_argument("--vary-n", type=int, action="append")
    p.add_argument("--vary-m", type=int, action="append")
    p.set_defaults(handler=cmd_bound)

    p = sub.add_parser("solve", help="solve a periodic fractional optimal control problem")
    _add_solver(p)
    _add_common(p, n_default=100)
    p.add_argument("--trace", action="store_true", help="write the outer iteration trace")
    p.set_defaults(handler=cmd_solve)

    p = sub.add_parser("sweep-alpha", help="solve for a list of orders")
    _add_solver(p)
    _add_common(p, n_default=100)
    p.add_argument("--jobs", type=int, default=1, help="parallel solves (needs --no-warm-start)")
    p.add_argument("--no-warm-start", action="store_true")
    p.set_defaults(handler=cmd_sweep_alpha)

    p = sub.add_parser("jn-table", help="optimal performance index against N")
    _add_solver(p)
    _add_common(p, n_list=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(handler=cmd_jn_table)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK

    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.handler(args)
    except (InputError, ocp.ProblemError, ExprError, ValueError, FileNotFoundError) as exc:
        print(f"fgps {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ConvergenceError, FloatingPointError, RuntimeError) as exc:
        print(f"fgps {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED


if __name__ == "__main__":
    sys.exit(main())


# }}}
