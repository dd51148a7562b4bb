"""Trigonometric cardinal functions on equispaced periodic grids."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# beyond this many periods the argument is reduced modulo T first
_REDUCE_PERIODS = 1.0e6


@dataclass(frozen=True)
class FourierGrid:
    """The ``n`` equispaced nodes ``t_j = period * j / n`` on one period."""

    period: float
    n: int

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError(f"period must be positive, got {self.period}")
        if self.n <= 0 or self.n % 2:
            raise ValueError(f"grid size must be a positive even integer, got {self.n}")

    @property
    def nodes(self) -> np.ndarray:
        return self.period * np.arange(self.n) / self.n

    @property
    def spacing(self) -> float:
        return self.period / self.n

    def node(self, j: int) -> float:
        return self.period * j / self.n

    def mode_weights(self) -> np.ndarray:
        """Weights of the modes ``k = 1..n/2`` once the ``+-k`` pairs are merged.

        The Nyquist pair ``k = +-n/2`` enters the primed sum at half weight.
        """
        weights = np.full(self.n // 2, 2.0)
        weights[-1] = 1.0
        return weights


def _reduce(grid: FourierGrid, t: np.ndarray) -> np.ndarray:
    if np.any(np.abs(t) > _REDUCE_PERIODS * grid.period):
        return np.mod(t, grid.period)
    return t


def kernel(grid: FourierGrid, s):
    """The cardinal function of node zero, ``F_0(s)``."""
    s = _reduce(grid, np.asarray(s, dtype=float))
    omega = 2.0 * np.pi / grid.period
    total = np.ones_like(s)
    for k, w in enumerate(grid.mode_weights(), start=1):
        total = total + w * np.cos(omega * k * s)
    return total / grid.n


def kernel_deriv(grid: FourierGrid, m: int, s):
    """The ``m``-th derivative of ``F_0`` at ``s``.

    Sums ``(-1)**floor((m+1)/2) (2 pi/T)**m / n * k**m sin(w_k s + [m even] pi/2)``
    over the positive modes, the negative modes being folded into the weights.
    """
    if m < 1:
        raise ValueError(f"derivative order must be positive, got {m}")
    s = _reduce(grid, np.asarray(s, dtype=float))
    omega = 2.0 * np.pi / grid.period
    shift = 0.5 * np.pi if m % 2 == 0 else 0.0
    sign = -1.0 if ((m + 1) // 2) % 2 else 1.0

    total = np.zeros_like(s)
    for k, w in enumerate(grid.mode_weights(), start=1):
        total = total + (w * float(k) ** m) * np.sin(omega * k * s + shift)
    return sign * omega**m / grid.n * total


def kernel_deriv_log(grid: FourierGrid, m: int, s):
    """``(log|F_0^(m)(s)|, sign)`` without overflow for very large ``m``.

    The dominant factor ``(2 pi K / T)**m`` with ``K = n/2`` is pulled out of
    the sum so that every term is bounded by its weight.
    """
    if m < 1:
        raise ValueError(f"derivative order must be positive, got {m}")
    s = _reduce(grid, np.asarray(s, dtype=float))
    big_k = grid.n // 2
    omega = 2.0 * np.pi / grid.period
    shift = 0.5 * np.pi if m % 2 == 0 else 0.0
    sign = -1.0 if ((m + 1) // 2) % 2 else 1.0

    total = np.zeros_like(s)
    for k, w in enumerate(grid.mode_weights(), start=1):
        ratio = (k / big_k) ** m
        total = total + w * ratio * np.sin(omega * k * s + shift)

    with np.errstate(divide="ignore"):
        log_abs = m * np.log(omega * big_k) - np.log(grid.n) + np.log(np.abs(total))
    return log_abs, sign * np.sign(total)


def cardinal(grid: FourierGrid, j: int, t):
    """Trigonometric Lagrange function ``F_j(t)``, equal to 1 at node ``j``."""
    return kernel(grid, np.asarray(t, dtype=float) - grid.node(j))


def cardinal_deriv(grid: FourierGrid, j: int, m: int, t):
    return kernel_deriv(grid, m, np.asarray(t, dtype=float) - grid.node(j))


def interpolate(grid: FourierGrid, samples, t):
    """Evaluate the Fourier interpolant of the node ``samples`` at ``t``."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape != (grid.n,):
        raise ValueError(f"expected {grid.n} samples, got shape {samples.shape}")

    t = np.asarray(t, dtype=float)
    flat = np.atleast_1d(t).ravel()
    # F_j(t) = F_0(t - t_j): evaluate all cardinals at once
    values = kernel(grid, flat[:, None] - grid.nodes[None, :]) @ samples
    if t.ndim == 0:
        return float(values[0])
    return values.reshape(t.shape)
