import numpy as np
import pytest
from hypothesis import given, strategies as st

from fgps import nlp
from fgps.nlp import NlpProblem, NonFiniteObjectiveError, SolveOptions, gradient, jacobian, solve
from fgps.ocp import benchmark_problem, transcribe


class TestGradient:
    def test_square(self):
        g = gradient(lambda x: float(np.sum(x**2)), np.array([1.0, 2.0]))
        np.testing.assert_allclose(g, [2.0, 4.0], atol=1e-7)

    @given(st.lists(st.floats(-100, 100), min_size=1, max_size=6))
    def test_affine_exact(self, xs):
        c = np.arange(1.0, len(xs) + 1)
        x = np.array(xs)
        g = gradient(lambda z: float(c @ z + 3.0), x)
        np.testing.assert_allclose(g, c, atol=1e-9 * max(1.0, np.max(np.abs(x))))

    def test_non_finite_names_coordinate(self):
        def f(x):
            return np.inf if x[2] > 0.5 else 0.0

        with pytest.raises(NonFiniteObjectiveError, match="coordinate 2"):
            gradient(f, np.array([0.0, 0.0, 0.5]))

    def test_jacobian(self):
        jac = jacobian(lambda x: np.array([x[0] * x[1], x[0] + 2 * x[1]]), np.array([2.0, 3.0]))
        np.testing.assert_allclose(jac, [[3.0, 2.0], [1.0, 2.0]], atol=1e-8)

    def test_benchmark_objective_one_sided(self, rule1000):
        tn = transcribe(benchmark_problem(), 20, rule1000)
        x = np.ones(tn.n_vars)
        central = gradient(tn.objective, x)
        h = 1e-7
        f0 = tn.objective(x)
        one_sided = np.array([(tn.objective(x + h * e) - f0) / h for e in np.eye(tn.n_vars)])
        np.testing.assert_allclose(central, one_sided, atol=1e-4)
        np.testing.assert_allclose(tn.objective_grad(x), central, atol=1e-8)


class TestOptions:
    @pytest.mark.parametrize(
        "kwargs",
        [{"tol_step": 0}, {"tol_obj": -1}, {"tol_feas": 0}, {"penalty_growth": 1.0},
         {"max_outer": 0}, {"fd_step": 0}],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            SolveOptions(**kwargs)

    def test_defaults(self):
        o = SolveOptions()
        assert (o.tol_step, o.tol_obj, o.tol_feas) == (1e-9, 1e-9, 1e-8)
        assert (o.max_outer, o.max_inner, o.penalty_init, o.penalty_growth) == (50, 500, 10.0, 10.0)


class TestClosedForm:
    def test_interior_quadratic(self):
        a = np.array([1.0, -2.0, 3.5, 9.9, -7.0, 0.0])
        problem = NlpProblem(lambda x: float(np.sum((x - a) ** 2)), n_vars=6, lower=-10, upper=10)
        result = solve(problem)
        assert result.converged
        np.testing.assert_allclose(result.x, a, atol=1e-8)

    def test_equality(self):
        problem = NlpProblem(
            lambda x: float(x @ x), n_vars=2, eq_residuals=lambda x: np.array([x[0] + x[1] - 1.0])
        )
        result = solve(problem)
        assert result.converged
        np.testing.assert_allclose(result.x, [0.5, 0.5], atol=1e-6)
        assert result.max_eq <= 1e-8

    def test_inequality(self):
        problem = NlpProblem(
            lambda x: float((x[0] - 2) ** 2 + (x[1] - 2) ** 2), n_vars=2,
            ineq_residuals=lambda x: np.array([x[0] + x[1] - 1.0]),
        )
        result = solve(problem)
        assert result.converged
        np.testing.assert_allclose(result.x, [0.5, 0.5], atol=1e-6)

    def test_active_bound(self):
        problem = NlpProblem(lambda x: float(np.sum((x - 3.0) ** 2)), n_vars=3, lower=-1, upper=1)
        result = solve(problem)
        np.testing.assert_array_equal(result.x, [1.0, 1.0, 1.0])

    def test_iterates_stay_in_box(self):
        seen = []
        lo, hi = np.array([-1.0, 0.0]), np.array([0.5, 2.0])

        def f(x):
            seen.append(x.copy())
            return float((x[0] - 3) ** 2 + (x[1] + 1) ** 2 + x[0] * x[1])

        def grad(x):
            return np.array([2 * (x[0] - 3) + x[1], 2 * (x[1] + 1) + x[0]])

        problem = NlpProblem(f, n_vars=2, lower=lo, upper=hi, objective_grad=grad,
                             eq_residuals=lambda x: np.array([x[0] - x[1] + 0.2]),
                             eq_jacobian=lambda x: np.array([[1.0, -1.0]]))
        solve(problem, SolveOptions(x0=np.array([5.0, -5.0])))
        assert seen
        for x in seen:
            assert np.all(x >= lo) and np.all(x <= hi)


class TestFailures:
    def test_iteration_cap(self):
        problem = NlpProblem(
            lambda x: float(x @ x), n_vars=2, eq_residuals=lambda x: np.array([x[0] + x[1] - 1.0])
        )
        result = solve(problem, SolveOptions(max_outer=1, max_inner=1))
        assert not result.converged
        assert "maximum" in result.message

    def test_non_finite_objective(self):
        problem = NlpProblem(lambda x: float("nan"), n_vars=2)
        with pytest.raises(NonFiniteObjectiveError):
            solve(problem)

    def test_bad_start(self):
        with pytest.raises(ValueError):
            solve(NlpProblem(lambda x: 0.0, n_vars=2), SolveOptions(x0=np.ones(3)))

    def test_expression_named(self, rule1000):
        from dataclasses import replace

        from fgps.exprdsl import parse

        p = benchmark_problem()
        p = replace(p, g=parse("sqrt(y1) - u1", 2, 1))
        tn = transcribe(p, 8, rule1000)
        with pytest.raises(NonFiniteObjectiveError, match="sqrt"):
            solve(tn, SolveOptions(x0=-np.ones(tn.n_vars)))


def test_deterministic(rule1000):
    tn = transcribe(benchmark_problem(), 20, rule1000)
    x0 = np.clip(1 + 0.1 * np.random.default_rng(0).standard_normal(tn.n_vars), tn.lower, tn.upper)
    a = solve(tn, SolveOptions(x0=x0, trace=True))
    b = solve(tn, SolveOptions(x0=x0, trace=True))
    assert np.array_equal(a.x, b.x)
    assert a.trace == b.trace


def test_inner_solver_on_rosenbrock():
    def f(x):
        return float(100 * (x[1] - x[0] ** 2) ** 2 + (1 - x[0]) ** 2)

    result = solve(NlpProblem(f, n_vars=2, lower=-5, upper=5), SolveOptions(x0=np.array([-1.2, 1.0])))
    np.testing.assert_allclose(result.x, [1.0, 1.0], atol=1e-5)
    assert isinstance(result, nlp.NlpResult)
