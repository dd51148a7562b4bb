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

# # Gegenbauer quadrature on (0, 1)
#
# The fractional derivative is an integral over (0, 1) after a change of
# variables.  It is evaluated with an interpolatory rule on the zeros of a
# Gegenbauer polynomial, mapped from (-1, 1).

# +
import numpy as np

from fgps.gegenbauer import QuadratureRule, gegenbauer_poly

for lam in (-0.25, 0.0, 0.5, 1.0):
    rule = QuadratureRule.build(6, lam)
    print(f"lambda={lam:5}  nodes", np.round(rule.nodes, 6))
    print(f"{'':13}weights", np.round(rule.weights, 6))
# -

# The nodes are zeros of the degree N_G + 1 polynomial, and the weights
# always add up to the length of the interval.

# +
rule = QuadratureRule.build(40, 0.0)
print("max |G_41(x_k)|:", np.max(np.abs(gegenbauer_poly(41, 0.0, rule.nodes))))
print("sum of weights:", rule.weights.sum())
# -

# Polynomials up to degree N_G are integrated exactly.  Smooth non-polynomial
# integrands converge quickly as N_G grows.

# +
exact = 2 * np.sinh(1.0)
for ng in (2, 4, 8, 16):
    rule = QuadratureRule.build(ng, 0.0)
    print(ng, abs(rule.weights @ np.exp(rule.nodes) - exact))
