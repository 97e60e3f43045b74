"""
The iteration matrix and where its eigenvalues live
===================================================

For one mode the interface errors are multiplied by a block-tridiagonal
Toeplitz matrix each sweep. Its spectral radius stays below sqrt(rho_tilde)
for every N, and the eigenvalues gather around two curves given by the
symbol of the matrix as N grows.
"""

import numpy as np

from tpschwarz import SpatialGrid, assemble, coefficients, eigenbasis, spectrum_report
from tpschwarz.theory import dense_infinity_norm, symbol_curve

lam1 = eigenbasis(SpatialGrid(128)).lambdas[0]
c = coefficients(lam1, 1e-2, 1 / 128)
print("sqrt(rho_tilde) =", np.sqrt(c.rho_tilde))

# %%
# The infinity norm is a poor bound here: it is above one while the
# spectral radius is not.
T = assemble(c, 32)
print("infinity norm:", dense_infinity_norm(T))

for N in (2, 8, 32, 128, 512):
    rep = spectrum_report(c, N)
    print(f"N={N:4d}  rho={rep.rho:.5f}  all inside region D: {rep.in_region_D.all()}  "
          f"max distance to symbol curves: {rep.max_dist:.4f}")

# %%
# Every point of the symbol curves has the same modulus, so they are arcs of
# the circle of radius sqrt(rho_tilde).
curve = symbol_curve(c)
print("modulus range on the curves:", np.abs(curve.mu_plus).min(), np.abs(curve.mu_plus).max())
