import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import gamma

from fgps import fracderiv
from fgps.fourier import FourierGrid, kernel_deriv
from fgps.fracderiv import (
    FimVerificationError,
    FractionalOrder,
    approx_fd_at_nodes,
    build_fim,
    build_fim_direct,
    fgpsq_entry,
    gl_derivative,
    gl_weights,
    reduced_fd_oracle,
    reduced_fd_quadrature,
)
from fgps.gegenbauer import QuadratureRule

TWO_PI = 2 * np.pi


def sin_deriv(m):
    return lambda t: np.sin(np.asarray(t) + 0.5 * m * np.pi)


def cos_deriv(m):
    return lambda t: np.cos(np.asarray(t) + 0.5 * m * np.pi)


def caputo_sliding_sin(alpha, memory, t):
    """Closed form of the unreduced sliding-memory Caputo derivative of sin.

    With ``z = m - alpha`` the integral is ``Im(exp(i(t + m pi/2)) int_0^L u**(z-1) exp(-iu) du) / Gamma(z)``
    and ``int_0^L u**(z-1) exp(-iu) du = i**-z * gamma_lower(z, iL)``.
    """
    m = math.ceil(alpha)
    with mpmath.workdps(30):
        z = m - mpmath.mpf(alpha)
        phase = mpmath.exp(1j * (mpmath.mpf(t) + m * mpmath.pi / 2))
        integral = mpmath.power(1j, -z) * mpmath.gammainc(z, 0, 1j * mpmath.mpf(memory))
        return float(mpmath.im(phase * integral) / mpmath.gamma(z))


class TestOrder:
    @pytest.mark.parametrize("alpha", [0.0, -0.5, 1.0, 2.0, 3.0])
    def test_rejects(self, alpha):
        with pytest.raises(ValueError):
            FractionalOrder(alpha, 30.0)

    def test_rejects_memory(self):
        with pytest.raises(ValueError):
            FractionalOrder(0.5, 0.0)

    @given(st.floats(0.01, 9.99).filter(lambda a: abs(a - round(a)) > 1e-6))
    def test_ceiling(self, alpha):
        order = FractionalOrder(alpha, 1.0)
        assert order.m - 1 < alpha < order.m
        assert 0 < order.gap < 1

    def test_scale(self):
        order = FractionalOrder(1.3, 30.0)
        assert order.scale == pytest.approx(30.0**0.7 / gamma(1.7), rel=1e-14)


class TestGrunwaldLetnikov:
    def test_first_difference(self):
        for t in (0.5, 1.0, 3.7):
            h = 1e-3
            assert gl_derivative(lambda s: s**2, 1.0, 0.0, t, h) == pytest.approx(2 * t - h, rel=1e-9)

    def test_weights_recurrence(self):
        alpha = 0.37
        w = gl_weights(alpha, 30)
        for k in range(31):
            ref = (-1) ** k * mpmath.binomial(alpha, k)
            assert w[k] == pytest.approx(float(ref), rel=1e-12, abs=1e-300)

    @pytest.mark.parametrize("alpha", [0.2, 0.5, 0.8])
    def test_constant_limit(self, alpha):
        one = lambda s: np.ones_like(s)
        coarse = gl_derivative(one, alpha, 0.0, 1.0, 1e-3)
        fine = gl_derivative(one, alpha, 0.0, 1.0, 1e-4)
        extrapolated = (10 * fine - coarse) / 9
        exact = float(1 / mpmath.gamma(1 - alpha))
        assert extrapolated == pytest.approx(exact, abs=1e-6)

    def test_linear_function(self):
        value = gl_derivative(lambda s: s, 0.5, 0.0, 1.0, 1e-5)
        assert value == pytest.approx(2 / math.sqrt(math.pi), abs=1e-3)

    def test_bad_step(self):
        with pytest.raises(ValueError):
            gl_derivative(np.sin, 0.5, 0.0, 1.0, 0.0)
        with pytest.raises(ValueError):
            gl_derivative(np.sin, 0.5, 0.0, 1.0, 2.0)

    @pytest.mark.parametrize("t", [0.3, 1.0, 2.2])
    def test_cross_check_with_reduced_form(self, t):
        # the GL sum with terminal t - L approximates the Riemann-Liouville
        # derivative on that window; it exceeds the Caputo value by
        # f(t - L) L**-alpha / Gamma(1 - alpha)
        alpha, memory = 0.5, TWO_PI
        gl = gl_derivative(np.sin, alpha, t - memory, t, 1e-4)
        boundary = np.sin(t - memory) * memory**-alpha / gamma(1 - alpha)
        oracle = reduced_fd_oracle(sin_deriv(1), FractionalOrder(alpha, memory), t)
        assert oracle.converged
        assert gl - boundary == pytest.approx(oracle.value, abs=5e-3)


class TestOracle:
    def test_panel_self_consistency(self):
        order = FractionalOrder(0.5, 30.0)
        a = reduced_fd_quadrature(cos_deriv(0), order, 0.0, 512)
        b = reduced_fd_quadrature(cos_deriv(0), order, 0.0, 1024)
        assert abs(a - b) < 1e-12

    def test_zero_integrand(self):
        result = reduced_fd_oracle(lambda t: np.zeros_like(t), FractionalOrder(1.5, 30.0), 0.7)
        assert result.value == 0.0 and result.converged

    @pytest.mark.parametrize("alpha", [0.3, 0.5, 0.9, 1.5, 1.8, 2.5])
    @pytest.mark.parametrize("t", [0.0, 1.3])
    def test_matches_unreduced_integral(self, alpha, t):
        order = FractionalOrder(alpha, 30.0)
        fm = sin_deriv(order.m)
        oracle = reduced_fd_oracle(fm, order, t)
        assert oracle.converged
        assert oracle.value == pytest.approx(caputo_sliding_sin(alpha, 30.0, t), abs=1e-12)

    def test_unconverged_is_flagged(self):
        order = FractionalOrder(1.1, 30.0)
        result = reduced_fd_oracle(sin_deriv(2), order, 0.5, panels=1, max_panels=4, tol=1e-15)
        assert not result.converged
        assert result.delta > 0


class TestMatrix:
    def test_entry_is_translation_invariant(self, rule1000):
        grid = FourierGrid(TWO_PI, 12)
        order = FractionalOrder(1.5, 30.0)
        for l in range(12):
            for j in (0, 5, 11):
                a = fgpsq_entry(grid, rule1000, order, l, j)
                b = fgpsq_entry(grid, rule1000, order, (l - j) % 12, 0)
                assert abs(a - b) <= 1e-12 * max(1.0, abs(b))

    def test_entry_against_oracle(self):
        grid = FourierGrid(TWO_PI, 4)
        order = FractionalOrder(1.5, 30.0)
        rule = QuadratureRule.build(64, 0.0)
        entry = fgpsq_entry(grid, rule, order, 0, 0)
        oracle = reduced_fd_oracle(lambda s: kernel_deriv(grid, 2, s), order, 0.0)
        assert entry == pytest.approx(oracle.value / order.scale, abs=1e-10)

    def test_entry_index_bounds(self, rule1000):
        with pytest.raises(IndexError):
            fgpsq_entry(FourierGrid(1.0, 4), rule1000, FractionalOrder(0.5, 1.0), 4, 0)

    @pytest.mark.parametrize("alpha", [0.5, 1.5, 2.5])
    def test_circulant_equals_direct(self, alpha, rule1000):
        grid = FourierGrid(TWO_PI, 8)
        order = FractionalOrder(alpha, 30.0)
        fast = build_fim(grid, rule1000, order)
        slow = build_fim_direct(grid, rule1000, order)
        size = np.max(np.abs(slow.entries))
        assert np.max(np.abs(fast.entries - slow.entries)) <= 1e-12 * size
        assert fast.scale == slow.scale

    def test_four_by_four(self, rule1000):
        fim = build_fim(FourierGrid(np.pi, 4), rule1000, FractionalOrder(0.7, 3.0))
        q = fim.entries
        assert q.shape == (4, 4)
        for l in range(4):
            for j in range(4):
                assert q[l, j] == q[(l - j) % 4, 0]

    @pytest.mark.parametrize("alpha", [0.3, 0.99999, 1.00001, 1.5, 1.99, 2.5])
    @pytest.mark.parametrize("n", [4, 40, 100])
    def test_row_sums_vanish(self, alpha, n, rule1000):
        fim = build_fim(FourierGrid(TWO_PI, n), rule1000, FractionalOrder(alpha, 30.0))
        size = np.max(np.abs(fim.entries))
        assert np.max(np.abs(fim.entries.sum(axis=1))) <= 1e-9 * size
        c = -3.5
        out = approx_fd_at_nodes(fim, np.full(n, c))
        assert np.max(np.abs(out)) <= 1e-9 * abs(c) * np.max(np.abs(fim.matrix))

    def test_verification_catches_broken_translation(self, rule1000, monkeypatch):
        real = fracderiv.fgpsq_entry
        monkeypatch.setattr(fracderiv, "fgpsq_entry", lambda *a: real(*a) + 1e-6)
        with pytest.raises(FimVerificationError):
            build_fim(FourierGrid(TWO_PI, 8), rule1000, FractionalOrder(1.5, 30.0))

    def test_entries_read_only(self, rule1000):
        fim = build_fim(FourierGrid(TWO_PI, 8), rule1000, FractionalOrder(1.5, 30.0))
        with pytest.raises(ValueError):
            fim.entries[0, 0] = 1.0


class TestApproximation:
    @pytest.mark.parametrize("alpha", [0.5, 1.5, 2.5])
    @pytest.mark.parametrize(
        "name,f,fm",
        [
            ("sin", np.sin, sin_deriv),
            ("cos", np.cos, cos_deriv),
            (
                "mixed",
                lambda t: np.sin(t) + 0.5 * np.cos(2 * t),
                lambda m: (lambda t: sin_deriv(m)(t) + 0.5 * 2**m * cos_deriv(m)(2 * np.asarray(t))),
            ),
        ],
    )
    def test_oracle_agreement(self, alpha, name, f, fm, rule1000):
        grid = FourierGrid(TWO_PI, 40)
        order = FractionalOrder(alpha, 30.0)
        approx = approx_fd_at_nodes(build_fim(grid, rule1000, order), f(grid.nodes))
        oracle = reduced_fd_oracle(fm(order.m), order, grid.nodes)
        assert oracle.converged
        assert np.max(np.abs(approx - oracle.value)) <= 1e-6

    def test_near_two_is_minus_sine(self, rule1000):
        grid = FourierGrid(TWO_PI, 100)
        approx = approx_fd_at_nodes(
            build_fim(grid, rule1000, FractionalOrder(1.99, 30.0)), np.sin(grid.nodes)
        )
        assert np.max(np.abs(approx + np.sin(grid.nodes))) <= 0.05

    def test_convergence_in_n(self, rule1000):
        order = FractionalOrder(1.5, 30.0)
        errors = []
        for n in (4, 12, 40, 100):
            grid = FourierGrid(TWO_PI, n)
            approx = approx_fd_at_nodes(build_fim(grid, rule1000, order), np.sin(grid.nodes))
            oracle = reduced_fd_oracle(sin_deriv(2), order, grid.nodes)
            errors.append(np.max(np.abs(approx - oracle.value)))
        assert all(b <= a for a, b in zip(errors, errors[1:])), errors

    @given(st.floats(-5, 5), st.floats(-5, 5))
    def test_linearity(self, a, b):
        rule = QuadratureRule.build(200, 0.0)
        grid = FourierGrid(TWO_PI, 16)
        fim = build_fim(grid, rule, FractionalOrder(1.3, 30.0))
        f, g = np.sin(grid.nodes), np.cos(3 * grid.nodes) + 1
        lhs = approx_fd_at_nodes(fim, a * f + b * g)
        rhs = a * approx_fd_at_nodes(fim, f) + b * approx_fd_at_nodes(fim, g)
        scale = np.max(np.abs(fim.matrix)) * (abs(a) + abs(b) + 1)
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * scale * 16

    def test_length_mismatch(self, rule1000):
        fim = build_fim(FourierGrid(TWO_PI, 8), rule1000, FractionalOrder(1.5, 30.0))
        with pytest.raises(ValueError):
            approx_fd_at_nodes(fim, np.ones(6))
