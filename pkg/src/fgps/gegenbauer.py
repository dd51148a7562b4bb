"""Gegenbauer polynomials, Gegenbauer-Gauss nodes and interpolatory weights.

Polynomials are normalized so that ``G_l(1) = 1``.  With this choice the
index ``lam = 0`` is a regular member of the family (Chebyshev polynomials
of the first kind) instead of a degenerate limit.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import chebyshev
from scipy.special import gammaln

MAX_ITER = 200
ROOT_TOL = 1.0e-14
MAX_LINEAR_NG = 2048


class ConvergenceError(RuntimeError):
    pass


def _check_lambda(lam: float) -> float:
    lam = float(lam)
    if not lam > -0.5:
        raise ValueError(f"Gegenbauer index must satisfy lambda > -1/2, got {lam}")
    return lam


def _eval_with_derivative(l: int, lam: float, x: np.ndarray):
    """Run the three-term recurrence, returning ``(G_l(x), G_l'(x))``."""
    p_prev = np.ones_like(x)
    d_prev = np.zeros_like(x)
    if l == 0:
        return p_prev, d_prev

    p = x.copy()
    d = np.ones_like(x)
    for n in range(1, l):
        # (n + 2 lam) G_{n+1} = 2 (n + lam) x G_n - n G_{n-1}
        c = 1.0 / (n + 2.0 * lam)
        p_next = c * (2.0 * (n + lam) * x * p - n * p_prev)
        d_next = c * (2.0 * (n + lam) * (p + x * d) - n * d_prev)
        p_prev, p = p, p_next
        d_prev, d = d, d_next
    return p, d


def gegenbauer_poly(l: int, lam: float, x):
    """Evaluate the degree-``l`` Gegenbauer polynomial with ``G_l(1) = 1``.

    ``x`` may be a scalar or an array; the result has the same shape.
    """
    lam = _check_lambda(lam)
    if l < 0:
        raise ValueError(f"degree must be nonnegative, got {l}")

    xa = np.asarray(x, dtype=float)
    if np.any(np.abs(xa) > 1.0 + 1.0e-12):
        raise ValueError("Gegenbauer polynomials are evaluated on [-1, 1] only")

    value, _ = _eval_with_derivative(int(l), lam, np.atleast_1d(xa).astype(float))
    if xa.ndim == 0:
        return float(value[0])
    return value.reshape(xa.shape)


def gegenbauer_poly_deriv(l: int, lam: float, x):
    lam = _check_lambda(lam)
    xa = np.asarray(x, dtype=float)
    _, deriv = _eval_with_derivative(int(l), lam, np.atleast_1d(xa).astype(float))
    if xa.ndim == 0:
        return float(deriv[0])
    return deriv.reshape(xa.shape)


def _positive_brackets(degree: int, lam: float):
    # roots are close to uniformly spaced in theta = arccos(x); sample the
    # quarter circle (0, pi/2] more finely than the root spacing
    npoints = 8 * (degree + 2)
    for _ in range(8):
        theta = np.linspace(0.0, 0.5 * np.pi, npoints + 1)
        if degree % 2 == 1:
            # x = 0 is an exact root for odd degree; only bracket x > 0
            theta = theta[:-1]
        x = np.cos(theta)[::-1]
        x[0] = max(x[0], 0.0)
        values, _ = _eval_with_derivative(degree, lam, x)
        sign = np.sign(values)
        # a grid point can land exactly on a root (Chebyshev roots are
        # rational multiples of pi); give it the sign of its right neighbour
        for i in np.flatnonzero(sign == 0)[::-1]:
            if i + 1 < sign.size:
                sign[i] = sign[i + 1]
        idx = np.flatnonzero(sign[:-1] * sign[1:] < 0)
        if idx.size == degree // 2:
            return x[idx], x[idx + 1], sign[idx]
        npoints *= 2

    raise ConvergenceError(
        f"could not bracket the {degree // 2} positive roots of G_{degree}"
    )


def gauss_nodes(n: int, lam: float) -> np.ndarray:
    """Zeros of the degree ``n + 1`` Gegenbauer polynomial, in increasing order.

    Roots are bracketed from sign changes on a fine grid in ``arccos(x)``,
    narrowed by bisection and polished with guarded Newton steps.  Only the
    positive half is computed; the negative half is its mirror image, so the
    returned set is exactly symmetric about zero.
    """
    lam = _check_lambda(lam)
    if n < 0:
        raise ValueError(f"n must be nonnegative, got {n}")

    degree = n + 1
    if degree == 1:
        return np.zeros(1)

    a, b, sign_a = _positive_brackets(degree, lam)
    for _ in range(MAX_ITER):
        mid = 0.5 * (a + b)
        fmid, _ = _eval_with_derivative(degree, lam, mid)
        left = np.sign(fmid) == sign_a
        a = np.where(left, mid, a)
        b = np.where(left, b, mid)
        if np.max(b - a) < 1.0e-10:
            break
    else:
        raise ConvergenceError("bisection did not reach the bracketing tolerance")

    x = 0.5 * (a + b)
    for _ in range(MAX_ITER):
        f, df = _eval_with_derivative(degree, lam, x)
        step = f / df
        x_new = np.clip(x - step, a, b)
        delta = np.max(np.abs(x_new - x))
        x = x_new
        if delta < ROOT_TOL:
            break
    else:
        raise ConvergenceError("Newton refinement did not converge")

    positive = np.sort(x)
    if degree % 2 == 1:
        return np.concatenate([-positive[::-1], [0.0], positive])
    return np.concatenate([-positive[::-1], positive])


def shift_nodes(nodes) -> np.ndarray:
    """Map nodes from (-1, 1) onto (0, 1)."""
    return 0.5 * (np.asarray(nodes, dtype=float) + 1.0)


def _chebyshev_moments(n: int) -> np.ndarray:
    k = np.arange(n + 1)
    moments = np.zeros(n + 1)
    even = k % 2 == 0
    moments[even] = 2.0 / (1.0 - k[even] ** 2)
    return moments


def integration_vector(nodes) -> np.ndarray:
    """Interpolatory weights ``P`` with ``sum(P * q(nodes)) == int_{-1}^{1} q``.

    Exact for every polynomial ``q`` of degree ``len(nodes) - 1``.  The
    moment equations are written in the Chebyshev basis, which keeps the
    linear system well conditioned for Gauss-type node sets.
    """
    nodes = np.asarray(nodes, dtype=float)
    if nodes.ndim != 1 or nodes.size == 0:
        raise ValueError("nodes must be a nonempty 1d array")

    n = nodes.size - 1
    if n > MAX_LINEAR_NG:
        warnings.warn(
            f"integration vector with {n + 1} nodes exceeds the tested range "
            f"(N_G <= {MAX_LINEAR_NG})",
            RuntimeWarning,
            stacklevel=2,
        )
    if n > 0:
        gaps = np.diff(np.sort(nodes))
        if np.min(gaps) < 1.0e-12:
            warnings.warn(
                "quadrature nodes nearly coincide; weights are ill-conditioned",
                RuntimeWarning,
                stacklevel=2,
            )

    vander = chebyshev.chebvander(nodes, n).T
    return np.linalg.solve(vander, _chebyshev_moments(n))


def log_leading_coeff(l: int, lam: float) -> float:
    """Natural log of the leading coefficient of the shifted polynomial on [0, 1]."""
    lam = _check_lambda(lam)
    if l < 0:
        raise ValueError(f"degree must be nonnegative, got {l}")
    if l == 0:
        # Gamma(lam) / Gamma(2 lam) -> 2 removes the apparent singularity
        return 0.0

    return (
        (2 * l - 1) * np.log(2.0)
        + gammaln(2.0 * lam + 1.0)
        + gammaln(l + lam)
        - gammaln(lam + 1.0)
        - gammaln(l + 2.0 * lam)
    )


def leading_coeff(l: int, lam: float) -> float:
    """Leading coefficient ``K_l`` of the shifted degree-``l`` polynomial.

    Returns ``inf`` when the value overflows; use :func:`log_leading_coeff`
    for large degrees.
    """
    with np.errstate(over="ignore"):
        return float(np.exp(log_leading_coeff(l, lam)))


@dataclass(frozen=True)
class QuadratureRule:
    """Gegenbauer-Gauss nodes on (-1, 1), their images on (0, 1) and weights."""

    lam: float
    ng: int
    nodes: np.ndarray
    shifted_nodes: np.ndarray
    weights: np.ndarray

    @classmethod
    def build(cls, ng: int, lam: float) -> QuadratureRule:
        return _build_rule(int(ng), float(lam))

    @property
    def size(self) -> int:
        return self.ng + 1


@lru_cache(maxsize=32)
def _build_rule(ng: int, lam: float) -> QuadratureRule:
    nodes = gauss_nodes(ng, lam)
    weights = integration_vector(nodes)
    shifted = shift_nodes(nodes)
    for arr in (nodes, weights, shifted):
        arr.setflags(write=False)
    return QuadratureRule(
        lam=lam, ng=ng, nodes=nodes, shifted_nodes=shifted, weights=weights
    )
