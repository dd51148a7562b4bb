# ---
# jupyter:
#   jupytext:
#     formats: ipynb,py
#     text_representation:
#       extension: .py
#       format_name: light
#       format_version: '1.5'
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# # Fractional derivative of a periodic function
#
# With a sliding memory of length L, the fractional derivative of a
# T-periodic function is again T-periodic.  On an equispaced grid it becomes a
# matrix-vector product with a circulant integration matrix.

# +
from pathlib import Path

import numpy as np

from fgps.fourier import FourierGrid
from fgps.fracderiv import FractionalOrder, approx_fd_at_nodes, build_fim, reduced_fd_oracle
from fgps.gegenbauer import QuadratureRule
from fgps.svgplot import line_chart

out = Path(__file__).resolve().parent / "out"
out.mkdir(exist_ok=True)

rule = QuadratureRule.build(1000, 0.0)
memory = 30.0


def sin_deriv(m):
    return lambda t: np.sin(t + 0.5 * m * np.pi)
# -

# Derivatives of sin on [0, 2 pi) for orders between one and two.  As alpha
# approaches 2 the curve approaches -sin.

# +
grid = FourierGrid(2 * np.pi, 100)
series = []
for alpha in (1.1, 1.3, 1.5, 1.7, 1.9, 1.99):
    fim = build_fim(grid, rule, FractionalOrder(alpha, memory))
    series.append((f"alpha={alpha}", grid.nodes, approx_fd_at_nodes(fim, np.sin(grid.nodes))))
(out / "fd_sine.svg").write_text(line_chart(series, "fractional derivatives of sin", "t"))
# -

# Error against an adaptive reference quadrature of the same integral.  The
# method is exact for sin once N >= 4, so what remains is rounding.

# +
print("alpha " + " ".join(f"{'N=%d' % n:>9}" for n in (4, 12, 40, 100)))
for alpha in (1.1, 1.5, 1.99):
    order = FractionalOrder(alpha, memory)
    row = []
    for n in (4, 12, 40, 100):
        grid = FourierGrid(2 * np.pi, n)
        approx = approx_fd_at_nodes(build_fim(grid, rule, order), np.sin(grid.nodes))
        ref = reduced_fd_oracle(sin_deriv(order.m), order, grid.nodes).value
        row.append(np.max(np.abs(approx - ref)))
    print(f"{alpha:<5} " + " ".join(f"{e:9.1e}" for e in row))
# -

# A function with many active modes shows the spectral decay in N.

# +
order = FractionalOrder(1.5, memory)


def f(t):
    return np.exp(np.sin(t))


def f2(t):
    return (np.cos(t) ** 2 - np.sin(t)) * np.exp(np.sin(t))


for n in (8, 16, 32, 64):
    grid = FourierGrid(2 * np.pi, n)
    approx = approx_fd_at_nodes(build_fim(grid, rule, order), f(grid.nodes))
    ref = reduced_fd_oracle(f2, order, grid.nodes).value
    print(n, f"{np.max(np.abs(approx - ref)):.2e}")
