"""
Solving an optimal control problem window by window
===================================================

A problem with a known solution lets us watch the parallel Schwarz iterates
approach the all-at-once Crank-Nicolson solution, and that solution approach
the exact one at second order.
"""

import numpy as np

from tpschwarz import (ProblemSpec, SchwarzSolver, SpatialGrid, TimeDecomposition, l2q_norm,
                       monolithic_solve)
from tpschwarz.model import manufactured_solution, sample

nu, T, N = 0.1, 1.0, 8
grid = SpatialGrid(63)
decomp = TimeDecomposition(N, T / N, 8)
y, p, target = manufactured_solution(nu, T)
problem = ProblemSpec(1.0, T, nu, target)

reference = monolithic_solve(problem, grid, decomp)
history = SchwarzSolver(problem, grid, decomp).solve(tol=1e-10, max_iters=40, reference=reference)
for rec in history.records:
    print(f"sweep {rec['iter']:2d}  increment {rec['interface_incr']:.2e}  "
          f"state error {rec['err_y']:.2e}")

# %%
# The discretization error against the exact state, for a few resolutions.
for n in (8, 16, 32, 64):
    g, d = SpatialGrid(n - 1), TimeDecomposition(2, T / 2, n // 2)
    Y, _ = monolithic_solve(problem, g, d)
    print(f"h=1/{n:3d}  error {l2q_norm(Y.values - sample(y, g, d).values, g, d):.3e}")
