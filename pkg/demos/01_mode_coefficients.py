"""
How fast does each spatial mode converge?
=========================================

After diagonalizing the discrete Laplacian, one Schwarz sweep acts on each
spatial mode through two numbers, C1 and C2. Their combination
rho_tilde = nu*C1**2 + C2**2 is the squared contraction bound for that mode,
and it does not depend on how many time windows we use.
"""

import numpy as np

from tpschwarz import SpatialGrid, coefficients, eigenbasis

grid = SpatialGrid(128)
basis = eigenbasis(grid)
print("smallest and largest eigenvalue:", basis.lambdas[0], basis.lambdas[-1])

# %%
# Low frequencies are the slow ones. The bound drops by many orders of
# magnitude across the spectrum.
nu, dt = 1e-2, 1 / 128
for m in (1, 2, 4, 16, 64, 128):
    c = coefficients(basis.lambdas[m - 1], nu, dt)
    print(f"m={m:4d}  C1={c.c1: .3e}  C2={c.c2:.3e}  sqrt(rho_tilde)={np.sqrt(c.rho_tilde):.4f}")

# %%
# Shorter windows or a smaller regularization weight push the bound of the
# first mode toward one, which is where weak scalability gets tight.
for nu in (1e-1, 1e-2, 1e-4):
    row = [np.sqrt(coefficients(basis.lambdas[0], nu, dt).rho_tilde) for dt in (1, 1 / 4, 1 / 16, 1 / 128)]
    print(f"nu={nu:g}: " + "  ".join(f"{v:.4f}" for v in row))
