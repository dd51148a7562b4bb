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

# # A periodic fractional optimal control problem
#
# Two states, one control in [-1, 1], running cost u^2 - y1^2 and fractional
# dynamics of order alpha just below one.  States and controls are collocated
# at 100 equispaced nodes and the resulting problem is solved by an augmented
# Lagrangian method.

# +
from pathlib import Path

import numpy as np

from fgps.gegenbauer import QuadratureRule
from fgps.ocp import benchmark_problem, solve
from fgps.svgplot import line_chart

out = Path(__file__).resolve().parent / "out"
out.mkdir(exist_ok=True)

rule = QuadratureRule.build(1000, 0.0)
problem = benchmark_problem(alpha=0.99999, memory=30.0)
solution = solve(problem, 100, rule)

print("J_100 =", solution.objective_value)
print("max defect =", solution.max_adfe)
print("nodes with |u| >= 0.95:", np.mean(np.abs(solution.controls[:, 0]) >= 0.95))
# -

# The control rides its bounds with a short transition between them.

# +
t = solution.times
series = [("y1", t, solution.states[:, 0]), ("y2", t, solution.states[:, 1]),
          ("u", t, solution.controls[:, 0])]
(out / "benchmark.svg").write_text(line_chart(series, "alpha = 0.99999", "t"))
# -

# Just above one the order has ceiling two, and the zero trajectory is optimal.

# +
flat = solve(benchmark_problem(alpha=1.00001, memory=30.0), 100, rule)
print("J =", flat.objective_value, " sup |y| =", np.max(np.abs(flat.states)))
