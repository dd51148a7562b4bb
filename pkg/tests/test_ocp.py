import json
from dataclasses import replace

import numpy as np
import pytest

from fgps import nlp
from fgps.exprdsl import EvalEnv, evaluate, parse
from fgps.fracderiv import FractionalOrder
from fgps.ocp import (
    OcpProblem,
    ProblemError,
    REGISTRY,
    adfe,
    benchmark_problem,
    default_starts,
    evolve_alpha,
    load_problem,
    problem_from_dict,
    registered_problem,
    solve,
    transcribe,
)

PROBLEM_DATA = {
    "period": 3.141592653589793,
    "alpha": 0.99999,
    "memory": 30,
    "g": "u1^2 - y1^2",
    "f": ["y2", "-4*y1 - 0.3*y2 + u1"],
    "state_bounds": [[-5, 5], [-5, 5]],
    "control_bounds": [[-1, 1]],
}


@pytest.fixture(scope="module")
def bench100(rule1000):
    return transcribe(benchmark_problem(), 100, rule1000)


@pytest.fixture(scope="module")
def bench_solution(rule1000):
    return solve(benchmark_problem(), 100, rule1000, nlp.SolveOptions(trace=True))


class TestProblem:
    def test_benchmark(self):
        p = benchmark_problem()
        assert (p.n_x, p.n_u, p.p) == (2, 1, 0)
        assert p.period == np.pi
        assert evaluate(p.g, EvalEnv(0.0, (1.0, 0.0), (1.0,))) == 0.0

    def test_registry(self):
        p = registered_problem("gaitsgory-proper-periodic", 0.9, 10.0)
        assert p.order == FractionalOrder(0.9, 10.0)
        assert "gaitsgory-proper-periodic" in REGISTRY
        with pytest.raises(ProblemError):
            registered_problem("nope")

    def test_from_dict_matches_builtin(self):
        p = problem_from_dict(PROBLEM_DATA)
        b = benchmark_problem()
        assert p.g.root == b.g.root and [e.root for e in p.f] == [e.root for e in b.f]
        assert p.state_bounds == b.state_bounds and p.control_bounds == b.control_bounds

    @pytest.mark.parametrize(
        "patch",
        [
            {"f": ["y2"]},
            {"alpha": 1.0},
            {"memory": -1},
            {"control_bounds": [[1, -1]]},
            {"state_bounds": [[-5, 5]]},
            {"g": "u2"},
            {"c": ["y1 +"]},
            {"state_bounds": [[-5, 5, 1], [0, 1]]},
        ],
    )
    def test_invalid(self, patch):
        with pytest.raises(ValueError):
            problem_from_dict({**PROBLEM_DATA, **patch})

    def test_missing_field(self):
        data = dict(PROBLEM_DATA)
        del data["g"]
        with pytest.raises(ProblemError, match="'g'"):
            problem_from_dict(data)

    def test_malformed_json_location(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{\n  "period": 3.14,\n  "alpha" 0.99\n}')
        with pytest.raises(ProblemError, match="line 3, column 11"):
            load_problem(path)

    def test_load(self, tmp_path):
        path = tmp_path / "p.json"
        path.write_text(json.dumps(PROBLEM_DATA))
        assert load_problem(path).name == "p"

    def test_with_order(self):
        p = benchmark_problem().with_order(1.5)
        assert p.order.alpha == 1.5 and p.order.memory == 30.0


class TestTranscription:
    def test_sizes(self, bench100):
        assert bench100.n_vars == 300 and bench100.n_eq == 200 and bench100.n_ineq == 0
        np.testing.assert_array_equal(bench100.lower[200:], -1.0)
        np.testing.assert_array_equal(bench100.upper[:200], 5.0)

    def test_zero_is_fixed_point(self, bench100):
        x = np.zeros(300)
        assert bench100.objective(x) == 0.0
        np.testing.assert_array_equal(bench100.eq_residuals(x), 0.0)
        np.testing.assert_array_equal(adfe(benchmark_problem(), 100, bench100.rule, x), 0.0)

    def test_constant_state(self, bench100):
        c1, c2 = 0.7, -1.3
        x = bench100.join([np.full(100, c1), np.full(100, c2)], np.zeros(100))
        h = bench100.eq_residuals(x).reshape(2, 100)
        size = np.max(np.abs(bench100.fim.matrix))
        np.testing.assert_allclose(h[0], -c2, atol=1e-9 * size)
        np.testing.assert_allclose(h[1], 4 * c1 + 0.3 * c2, atol=1e-9 * size)

    def test_entry_formula(self, bench100, rng):
        x = rng.uniform(-1, 1, 300)
        states, controls = bench100.split(x)
        q = bench100.fim.matrix
        for l, j in [(0, 0), (17, 1), (99, 0)]:
            env = EvalEnv(bench100.grid.node(l), states[:, l], controls[:, l])
            expected = q[l] @ states[j] - evaluate(benchmark_problem().f[j], env)
            assert bench100.eq_residual(x, l, j) == pytest.approx(expected, abs=1e-12)

    def test_superposition(self, bench100, rng):
        u = rng.uniform(-1, 1, 100)
        a, b = rng.uniform(-2, 2, (2, 200))
        h = lambda s: bench100.eq_residuals(np.concatenate([s, u]))
        h0 = h(np.zeros(200))
        lhs = h(0.3 * a + 0.7 * b) - h0
        rhs = 0.3 * (h(a) - h0) + 0.7 * (h(b) - h0)
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(lhs))) * 100

    def test_shift_equivariance(self, bench100, rng):
        x = rng.uniform(-1, 1, 300)
        rolled = np.concatenate([np.roll(b, 1) for b in x.reshape(3, 100)])
        h = bench100.eq_residuals(x).reshape(2, 100)
        hr = bench100.eq_residuals(rolled).reshape(2, 100)
        np.testing.assert_allclose(hr, np.roll(h, 1, axis=1), atol=1e-12 * np.max(np.abs(h)))

    def test_objective_trig_exactness(self, rule1000):
        p = replace(benchmark_problem(), g=parse("3 + cos(2*t) - 0.5*sin(4*t)^2", 2, 1))
        for n in (12, 20):
            tn = transcribe(p, n, rule1000)
            # mean of 3 + cos(2t) - 0.25 (1 - cos 8t) over a period pi
            assert tn.objective(np.zeros(tn.n_vars)) == pytest.approx(2.75, abs=1e-12)

    def test_jacobian_matches_differences(self, rule1000, rng):
        tn = transcribe(benchmark_problem(), 10, rule1000)
        x = rng.uniform(-1, 1, tn.n_vars)
        np.testing.assert_allclose(tn.eq_jacobian(x), nlp.jacobian(tn.eq_residuals, x), atol=1e-7)
        np.testing.assert_allclose(tn.objective_grad(x), nlp.gradient(tn.objective, x), atol=1e-8)

    def test_path_constraint_jacobian(self, rule1000, rng):
        p = replace(benchmark_problem(), c=(parse("u1 + y1^2 - 2", 2, 1),))
        tn = transcribe(p, 10, rule1000)
        x = rng.uniform(-1, 1, tn.n_vars)
        assert tn.n_ineq == 10
        np.testing.assert_allclose(tn.ineq_jacobian(x), nlp.jacobian(tn.ineq_residuals, x), atol=1e-7)


class TestAdfe:
    def test_random_infeasible_positive(self, rng, rule1000):
        x = rng.uniform(-1, 1, 300)
        assert np.all(adfe(benchmark_problem(), 100, rule1000, x) > 0)

    def test_independent_of_solver(self, bench_solution, bench100):
        np.testing.assert_allclose(bench_solution.adfe, np.abs(bench100.eq_residuals(bench_solution.x)), atol=1e-12)


class TestSolve:
    def test_benchmark(self, bench_solution):
        s = bench_solution
        assert s.converged
        assert s.objective_value == pytest.approx(-1.311, abs=0.05)
        assert s.max_adfe <= 1e-6
        assert np.mean(np.abs(s.controls[:, 0]) >= 0.95) >= 0.8
        assert s.states.shape == (100, 2) and s.controls.shape == (100, 1)

    def test_outer_feasibility_monotone(self, bench_solution):
        feas = [row[3] for row in bench_solution.trace]
        assert len(feas) > 1
        for a, b in zip(feas, feas[1:]):
            assert b <= 1.1 * a

    def test_degenerate_order(self, rule1000):
        s = solve(benchmark_problem(1.00001), 100, rule1000)
        assert abs(s.objective_value) <= 1e-3
        assert max(np.max(np.abs(s.states)), np.max(np.abs(s.controls))) <= 1e-2

    def test_path_constraint_respected(self, rule1000):
        p = replace(benchmark_problem(), c=(parse("u1 - 0.5", 2, 1),))
        s = solve(p, 20, rule1000)
        assert s.converged
        assert np.max(s.controls) <= 0.5 + 1e-7

    def test_default_starts(self, bench100):
        starts = default_starts(bench100)
        assert len(starts) == 4
        for x in starts:
            assert bench100.box_feasible(x)
        np.testing.assert_array_equal(starts[2][200:], -1.0)
        assert np.ptp(starts[0]) > 0  # the perturbed start is not constant

    def test_evolve_single_is_plain_solve(self, rule1000):
        p = benchmark_problem(0.99)
        [(alpha, s)] = evolve_alpha(p, [0.99], 20, rule1000)
        plain = solve(p, 20, rule1000)
        assert alpha == 0.99
        np.testing.assert_array_equal(s.x, plain.x)

    def test_evolve_continues_after_failure(self, rule1000):
        results = evolve_alpha(benchmark_problem(), [0.99, 1.0, 0.999], 12, rule1000)
        assert isinstance(results[1][1], ValueError)
        assert results[2][1].converged
