"""Truncation-error kernel and bound for the Gegenbauer quadrature stage.

All large products are accumulated as sums of logarithms; the returned
bound values are ``exp`` of those sums and may be ``inf`` for extreme
parameters, in which case the ``*_log`` variants should be used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from fgps.fourier import FourierGrid, kernel_deriv, kernel_deriv_log
from fgps.fracderiv import FractionalOrder

BRANCH_NONNEGATIVE = "nonnegative"
BRANCH_ODD = "odd"
BRANCH_EVEN = "even"
BRANCH_ASYMPTOTIC = "asymptotic"


@dataclass(frozen=True)
class BoundConstants:
    """The unspecified constants of the bound; both default to one."""

    d_lambda: float = 1.0
    b1_lambda: float = 1.0 + 1.0e-12

    def __post_init__(self):
        if not self.d_lambda > 0:
            raise ValueError("d_lambda must be positive")
        if not self.b1_lambda > 1:
            raise ValueError("b1_lambda must exceed one")


def _kernel_log_factor(order: FractionalOrder, ng: int, y):
    """``(N_G + 1) * log|L/(alpha - m) * y**(-(m - alpha - 1)/(m - alpha))|`` and its sign."""
    gap = order.gap
    log_abs = (ng + 1) * (
        math.log(order.memory / gap) - (gap - 1.0) / gap * np.log(y)
    )
    # L / (alpha - m) is negative
    sign = -1.0 if (ng + 1) % 2 else 1.0
    return log_abs, sign


def psi_log(grid: FourierGrid, order: FractionalOrder, ng: int, j: int, y, t):
    """``(log|psi|, sign(psi))``, safe for any ``N_G``."""
    y = np.asarray(y, dtype=float)
    if np.any((y <= 0) | (y >= 1)):
        raise ValueError("y must lie in (0, 1)")
    log_y, sign_y = _kernel_log_factor(order, ng, y)
    s = np.asarray(t, dtype=float) - grid.node(j) - order.lag(y)
    log_f, sign_f = kernel_deriv_log(grid, ng + order.m + 1, s)
    return log_y + log_f, sign_y * sign_f


def psi(
    grid: FourierGrid,
    order: FractionalOrder,
    lam: float,
    ng: int,
    j: int,
    y,
    t,
):
    """Error kernel of the quadrature for cardinal function ``j``.

    ``(L/(alpha - m) y**(-(m-alpha-1)/(m-alpha)))**(N_G+1) F_j^(N_G+m+1)(t - L y**(1/(m-alpha)))``

    ``lam`` does not enter the kernel; it is accepted so that a rule's
    parameters can be passed through unchanged.  Overflowing values come
    back as ``+-inf``; see :func:`psi_log`.
    """
    log_abs, sign = psi_log(grid, order, ng, j, y, t)
    with np.errstate(over="ignore"):
        value = sign * np.exp(log_abs)
    if np.ndim(value) == 0:
        return float(value)
    return value


def psi_direct(grid, order, ng, j, y, t):
    """Straightforward product form of :func:`psi`, for moderate ``N_G`` only."""
    y = np.asarray(y, dtype=float)
    gap = order.gap
    factor = (order.memory / (order.alpha - order.m) * y ** (-(gap - 1.0) / gap)) ** (
        ng + 1
    )
    s = np.asarray(t, dtype=float) - grid.node(j) - order.lag(y)
    return factor * kernel_deriv(grid, ng + order.m + 1, s)


def select_branch(ng: int, lam: float) -> str:
    """The non-asymptotic branch of the bound that applies to ``(N_G, lam)``."""
    if lam <= -0.5:
        raise ValueError(f"lambda must exceed -1/2, got {lam}")
    if lam >= 0:
        return BRANCH_NONNEGATIVE
    return BRANCH_ODD if ng % 2 else BRANCH_EVEN


def _log_branch_factor(ng: int, lam: float, branch: str, constants: BoundConstants):
    if branch == BRANCH_NONNEGATIVE:
        return 0.0
    if branch == BRANCH_ODD:
        return (
            gammaln(0.5 * ng + 1.0)
            + gammaln(lam + 0.5)
            - 0.5 * math.log(math.pi)
            - gammaln(0.5 * ng + lam + 1.0)
        )
    if branch == BRANCH_EVEN:
        return (
            math.log(2.0)
            + gammaln(0.5 * (ng + 3))
            + gammaln(lam + 0.5)
            - 0.5 * math.log(math.pi)
            - 0.5 * math.log((ng + 1) * (ng + 2.0 * lam + 1.0))
            - gammaln(0.5 * (ng + 1) + lam)
        )
    if branch == BRANCH_ASYMPTOTIC:
        return math.log(constants.b1_lambda) - lam * math.log(ng + 1)
    raise ValueError(f"unknown branch {branch!r}")


def truncation_bound_log(
    n: int,
    order: FractionalOrder,
    lam: float,
    ng: int,
    zeta: float = 1.0,
    constants: BoundConstants | None = None,
    branch: str | None = None,
) -> float:
    """Natural log of the truncation-error bound.

    ``branch=None`` picks the applicable exact branch.  The large-``N_G``
    form for ``-1/2 < lam < 0`` is only used when ``branch="asymptotic"`` is
    passed explicitly.  ``zeta = 1`` gives the supremum of the unknown
    mean-value factor.
    """
    constants = constants or BoundConstants()
    if ng < 1:
        raise ValueError("the bound needs N_G >= 1 (it contains N_G**(lam - N_G - 3/2))")
    if not 0 < zeta <= 1:
        raise ValueError("zeta must lie in (0, 1]")

    if branch is None:
        branch = select_branch(ng, lam)
    elif branch == BRANCH_ASYMPTOTIC:
        if not -0.5 < lam < 0:
            raise ValueError("the asymptotic branch only applies to -1/2 < lambda < 0")
    elif branch != select_branch(ng, lam):
        raise ValueError(
            f"branch {branch!r} does not apply to N_G={ng}, lambda={lam}"
        )

    m, gap, memory = order.m, order.gap, order.memory
    return (
        math.log(constants.d_lambda)
        + (ng + m) * math.log(n)
        + (ng + 1) * (math.log(memory / gap) - (gap - 1.0) / gap * math.log(zeta))
        - (2 * ng + 1) * math.log(2.0)
        + ng
        + (lam - ng - 1.5) * math.log(ng)
        + _log_branch_factor(ng, lam, branch, constants)
    )


def truncation_bound(n, order, lam, ng, zeta=1.0, constants=None, branch=None) -> float:
    log_bound = truncation_bound_log(n, order, lam, ng, zeta, constants, branch)
    with np.errstate(over="ignore"):
        return float(np.exp(log_bound))


def bound_report(
    memories=(10.0, 30.0, 90.0),
    sizes=(8, 16),
    ceilings=(1, 2),
    *,
    n: int = 8,
    memory: float = 30.0,
    offset: float = 0.5,
    lam: float = 0.0,
    ng: int = 100,
    zeta: float = 1.0,
    constants: BoundConstants | None = None,
):
    """Bound values while varying one of ``L``, ``N`` and ``m`` at a time.

    The order is ``alpha = m - offset``; the baseline is ``m = 2``.  Returns
    rows ``(param, value, log10 bound)``.
    """
    rows = []
    base = FractionalOrder(2.0 - offset, memory)

    def log10(nn, order):
        return truncation_bound_log(nn, order, lam, ng, zeta, constants) / math.log(10)

    for value in memories:
        rows.append(("L", value, log10(n, FractionalOrder(base.alpha, value))))
    for value in sizes:
        rows.append(("N", value, log10(value, base)))
    for value in ceilings:
        rows.append(("m", value, log10(n, FractionalOrder(value - offset, memory))))
    return rows
