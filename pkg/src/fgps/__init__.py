"""Fourier-Gegenbauer pseudospectral methods for periodic fractional problems.

Fractional derivatives with a sliding memory of length ``L`` are evaluated on
equispaced periodic grids through a Gegenbauer quadrature of Fourier cardinal
functions; periodic fractional optimal control problems are transcribed with
the resulting integration matrix and solved by an augmented Lagrangian method.
"""

from fgps.fourier import FourierGrid, interpolate
from fgps.fracderiv import FgpsFim, FractionalOrder, approx_fd_at_nodes, build_fim
from fgps.gegenbauer import QuadratureRule, gauss_nodes, gegenbauer_poly
from fgps.ocp import OcpProblem, OcpSolution, benchmark_problem, solve, transcribe

__version__ = "0.1.0"

__all__ = [
    "FgpsFim",
    "FourierGrid",
    "FractionalOrder",
    "OcpProblem",
    "OcpSolution",
    "QuadratureRule",
    "approx_fd_at_nodes",
    "benchmark_problem",
    "build_fim",
    "gauss_nodes",
    "gegenbauer_poly",
    "interpolate",
    "solve",
    "transcribe",
]
