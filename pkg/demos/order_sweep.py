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

# # Dependence on the order and on the grid size
#
# Sweeping alpha towards one from below with warm starts, then solving the
# same problem on grids of 10 to 100 nodes.

# +
from pathlib import Path

import numpy as np

from fgps.gegenbauer import QuadratureRule
from fgps.ocp import benchmark_problem, evolve_alpha, solve
from fgps.svgplot import line_chart

out = Path(__file__).resolve().parent / "out"
out.mkdir(exist_ok=True)

rule = QuadratureRule.build(1000, 0.0)
problem = benchmark_problem(alpha=0.99999, memory=30.0)

alphas = [0.9, 0.99, 0.999, 0.9999, 0.99999, 0.999999]
sweep = evolve_alpha(problem, alphas, 100, rule)
for alpha, solution in sweep:
    print(f"alpha={alpha:<9} J={solution.objective_value:.6f}")

series = [(f"alpha={a}", s.times, s.controls[:, 0]) for a, s in sweep]
(out / "sweep_controls.svg").write_text(line_chart(series, "controls", "t"))
# -

# At alpha = 0.9 the zero trajectory is the best point found.  The control
# switches on as alpha gets close to one.

# +
sizes = list(range(10, 101, 10))
values = [solve(problem, n, rule).objective_value for n in sizes]
for n, v in zip(sizes, values):
    print(n, f"{v:.6f}")
(out / "jn.svg").write_text(line_chart([("J_N", sizes, values)], "performance index", "N"))
