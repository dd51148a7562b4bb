"""Periodic fractional derivatives with a sliding fixed memory.

For a non-integer order ``alpha`` with ``m = ceil(alpha)`` and memory length
``L`` the derivative is reduced, through ``tau = t - L y**(1/(m - alpha))``,
to the regular integral

    D f(t) = L**(m - alpha) / Gamma(m - alpha + 1) * int_0^1 f^(m)(t - L y**(1/(m - alpha))) dy.

The integral of each Fourier cardinal function is evaluated with a shifted
Gegenbauer-Gauss quadrature, giving an ``N x N`` integration matrix that maps
node samples to the derivative at the nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.linalg import circulant
from scipy.special import gammaln

from fgps.fourier import FourierGrid, kernel_deriv
from fgps.gegenbauer import QuadratureRule


class FimVerificationError(RuntimeError):
    pass


@dataclass(frozen=True)
class FractionalOrder:
    """A positive non-integer order ``alpha`` and the memory length ``L``."""

    alpha: float
    memory: float

    def __post_init__(self):
        alpha = float(self.alpha)
        if not alpha > 0:
            raise ValueError(f"fractional order must be positive, got {alpha}")
        if alpha == round(alpha):
            raise ValueError(f"fractional order must not be an integer, got {alpha}")
        if not float(self.memory) > 0:
            raise ValueError(f"memory length must be positive, got {self.memory}")

    @property
    def m(self) -> int:
        return math.ceil(self.alpha)

    @property
    def gap(self) -> float:
        """``m - alpha``, in (0, 1)."""
        return self.m - self.alpha

    @property
    def scale(self) -> float:
        """Prefactor ``L**(m - alpha) / Gamma(m - alpha + 1)``."""
        return math.exp(self.gap * math.log(self.memory) - gammaln(self.gap + 1.0))

    def lag(self, y):
        """The lag ``L * y**(1/(m - alpha))`` of the substitution, for ``y`` in [0, 1]."""
        y = np.asarray(y, dtype=float)
        with np.errstate(divide="ignore"):
            return self.memory * np.exp(np.log(y) / self.gap)


# {{{ reference evaluations


def gl_weights(alpha: float, n: int) -> np.ndarray:
    """Signed binomial weights ``(-1)**k binom(alpha, k)`` for ``k = 0..n``."""
    w = np.empty(n + 1)
    w[0] = 1.0
    k = np.arange(1, n + 1)
    w[1:] = np.cumprod(1.0 - (alpha + 1.0) / k)
    return w


def gl_derivative(f: Callable, alpha: float, a: float, t: float, h: float) -> float:
    """Grunwald-Letnikov sum with step ``h`` and terminal ``a``.

    This is the finite-``h`` truncation only; refine ``h`` to approach the limit.
    ``f`` must accept numpy arrays.
    """
    if not h > 0:
        raise ValueError("step must be positive")
    n = int(math.floor((t - a) / h * (1.0 + 1.0e-12)))
    if n < 1:
        raise ValueError("need t - a >= h")

    w = gl_weights(alpha, n)
    values = np.asarray(f(t - h * np.arange(n + 1)), dtype=float)
    return float(h ** (-alpha) * np.dot(w, values))


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def _composite_rule(panels: int):
    edges = np.linspace(0.0, 1.0, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    y = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    w = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
    return y, w


def reduced_fd_quadrature(fm: Callable, order: FractionalOrder, t, panels: int):
    """Reduced-form derivative by composite 16-point Gauss-Legendre.

    ``fm`` is the ``m``-th derivative of the function being differentiated.
    """
    if panels < 1:
        raise ValueError("panels must be positive")
    y, w = _composite_rule(panels)
    lag = order.lag(y)
    t = np.asarray(t, dtype=float)
    values = np.array([np.dot(w, fm(ti - lag)) for ti in np.atleast_1d(t).ravel()])
    values *= order.scale
    if t.ndim == 0:
        return float(values[0])
    return values.reshape(t.shape)


class OracleResult(NamedTuple):
    value: float | np.ndarray
    delta: float
    panels: int
    converged: bool


def reduced_fd_oracle(
    fm: Callable,
    order: FractionalOrder,
    t,
    panels: int = 16,
    tol: float = 1.0e-12,
    max_panels: int = 2**14,
) -> OracleResult:
    """Panel-doubling reference value of the reduced-form derivative.

    The number of panels is doubled until two successive values differ by
    less than ``tol`` at every ``t``; ``converged`` is false if ``max_panels``
    is reached first, in which case ``delta`` holds the last difference.
    """
    previous = reduced_fd_quadrature(fm, order, t, panels)
    delta = math.inf
    while panels < max_panels:
        panels *= 2
        current = reduced_fd_quadrature(fm, order, t, panels)
        delta = float(np.max(np.abs(np.asarray(current) - previous)))
        previous = current
        if delta < tol:
            return OracleResult(current, delta, panels, True)

    return OracleResult(previous, delta, panels, False)


# }}}


# {{{ integration matrix


def _lags(grid: FourierGrid, rule: QuadratureRule, order: FractionalOrder) -> np.ndarray:
    # the kernel is periodic, and reducing the lags here keeps the trig
    # arguments small, which matters for the strong cancellation near m = alpha + 1
    return np.mod(order.lag(rule.shifted_nodes), grid.period)


def fgpsq_entry(
    grid: FourierGrid, rule: QuadratureRule, order: FractionalOrder, l: int, j: int
) -> float:
    """Quadrature of ``int_0^1 F_j^(m)(t_l - L y**(1/(m-alpha))) dy``."""
    if not (0 <= l < grid.n and 0 <= j < grid.n):
        raise IndexError(f"entry ({l}, {j}) outside a {grid.n} x {grid.n} matrix")
    points = grid.node(l) - grid.node(j) - _lags(grid, rule, order)
    return 0.5 * float(np.dot(rule.weights, kernel_deriv(grid, order.m, points)))


@dataclass(frozen=True)
class FgpsFim:
    """Fractional integration matrix on a periodic grid, with its prefactor."""

    grid: FourierGrid
    rule: QuadratureRule
    order: FractionalOrder
    entries: np.ndarray
    scale: float

    @property
    def matrix(self) -> np.ndarray:
        """The scaled operator ``scale * entries``."""
        return self.scale * self.entries


def fim_column(grid: FourierGrid, rule: QuadratureRule, order: FractionalOrder):
    """Entries ``Q[k, 0]`` for ``k = 0..N-1``, the generator of the circulant."""
    points = grid.nodes[:, None] - _lags(grid, rule, order)[None, :]
    return 0.5 * (kernel_deriv(grid, order.m, points) @ rule.weights)


def build_fim_direct(grid: FourierGrid, rule: QuadratureRule, order: FractionalOrder):
    """All ``N**2`` entries by individual quadratures, without the circulant shortcut."""
    entries = np.empty((grid.n, grid.n))
    for l in range(grid.n):
        for j in range(grid.n):
            entries[l, j] = fgpsq_entry(grid, rule, order, l, j)
    return FgpsFim(grid, rule, order, entries, order.scale)


def build_fim(
    grid: FourierGrid,
    rule: QuadratureRule,
    order: FractionalOrder,
    verify: bool = True,
    seed: int = 0,
) -> FgpsFim:
    """Assemble the integration matrix from one column.

    Since ``F_j(t) = F_0(t - t_j)`` and ``F_0`` is periodic, entry ``(l, j)``
    only depends on ``(l - j) mod N``.  With ``verify`` a few entries are
    recomputed directly and compared against the circulant fill.
    """
    entries = circulant(fim_column(grid, rule, order))

    if verify:
        rng = np.random.default_rng(seed)
        size = np.max(np.abs(entries))
        for l, j in rng.integers(0, grid.n, size=(5, 2)):
            direct = fgpsq_entry(grid, rule, order, int(l), int(j))
            if abs(direct - entries[l, j]) > 1.0e-12 * max(size, 1.0e-300):
                raise FimVerificationError(
                    f"entry ({l}, {j}) = {direct!r} differs from circulant "
                    f"value {entries[l, j]!r}"
                )

    entries.setflags(write=False)
    return FgpsFim(grid, rule, order, entries, order.scale)


def approx_fd_at_nodes(fim: FgpsFim, samples) -> np.ndarray:
    """Approximate the fractional derivative at every grid node."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape[0] != fim.grid.n:
        raise ValueError(f"expected {fim.grid.n} samples, got {samples.shape[0]}")
    return fim.scale * (fim.entries @ samples)


# }}}
