"""Spatial eigendecomposition and the per-mode scalars of the Schwarz iteration.

After diagonalizing the discrete Laplacian, the error of mode ``m`` is governed
by ``z'' = sigma^2 z`` with ``sigma = sqrt(lambda^2 + 1/nu)``. One sweep of the
time-parallel Schwarz method then only involves the two scalars

    C1 = -sinh(sigma dt) / (nu * (sigma cosh(sigma dt) + lambda sinh(sigma dt)))
    C2 = sigma / (sigma cosh(sigma dt) + lambda sinh(sigma dt))
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .model import SpatialGrid

# above this sigma*dt the hyperbolic functions are evaluated as ratios of exponentials
OVERFLOW_SWITCH = 30.0


class ParameterOverflow(FloatingPointError):
    """Coefficient evaluation produced a non-finite value."""


@dataclass(frozen=True)
class EigenBasis:
    """Eigenpairs of a symmetric spatial operator.

    ``vectors[:, m]`` is the orthonormal eigenvector for ``lambdas[m]``;
    nodal arrays are transformed along their last axis.
    """

    lambdas: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float)
        vec = np.asarray(self.vectors, dtype=float)
        if vec.shape != (lam.size, lam.size):
            raise ValueError("vectors must be a square matrix matching lambdas")
        if np.any(np.diff(lam) <= 0):
            raise ValueError("eigenvalues must be strictly increasing")
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "vectors", vec)

    @classmethod
    def from_tabulated(cls, lambdas, vectors) -> "EigenBasis":
        """Escape hatch for user-supplied eigenpairs (columns are orthonormalized)."""
        lam = np.asarray(lambdas, dtype=float)
        order = np.argsort(lam)
        q, r = np.linalg.qr(np.asarray(vectors, dtype=float)[:, order])
        return cls(lam[order], q * np.sign(np.diag(r)))

    @property
    def M(self) -> int:
        return self.lambdas.size

    @property
    def scale(self) -> float:
        """Column norm of the eigenvector matrix (1 for orthonormal bases)."""
        return float(np.linalg.norm(self.vectors[:, 0]))

    def forward(self, v):
        """Nodal -> mode coefficients."""
        return np.asarray(v) @ self.vectors

    def inverse(self, c):
        """Mode coefficients -> nodal values."""
        return np.asarray(c) @ self.vectors.T


def eigenbasis(grid: SpatialGrid) -> EigenBasis:
    """Analytic eigenpairs of :func:`tpschwarz.model.build_laplacian`."""
    M, h, L = grid.M, grid.h, grid.length
    m = np.arange(1, M + 1)
    lambdas = (4.0 / h ** 2) * np.sin(m * np.pi * h / (2.0 * L)) ** 2
    x = grid.nodes
    vectors = np.sqrt(2.0 / (M + 1)) * np.sin(np.outer(x, m) * np.pi / L)
    return EigenBasis(lambdas, vectors)


@dataclass(frozen=True)
class ModeCoefficients:
    lam: float
    sigma: float
    c1: float
    c2: float
    nu: float
    dt: float

    @property
    def rho_tilde(self) -> float:
        """``nu*C1^2 + C2^2``, the squared special norm of the iteration matrix."""
        return self.nu * self.c1 ** 2 + self.c2 ** 2


def c1_c2(lam, nu, dt):
    """Vectorized ``(sigma, C1, C2)``; broadcasts over its arguments."""
    lam, nu, dt = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (lam, nu, dt)))
    # non-finite results are detected below and reported as ParameterOverflow
    with np.errstate(over="ignore", invalid="ignore"):
        sigma = np.sqrt(lam ** 2 + 1.0 / nu)
        x = sigma * dt
        big = x > OVERFLOW_SWITCH
        xs = np.where(big, 0.0, x)
        s, c = np.sinh(xs), np.cosh(xs)
        den = sigma * c + lam * s
        c1 = -s / (nu * den)
        c2 = sigma / den
        if np.any(big):
            # divide numerator and denominator by exp(x)/2
            e2 = np.exp(-2.0 * np.where(big, x, 0.0))
            sr, cr = -np.expm1(-2.0 * np.where(big, x, 0.0)), 1.0 + e2
            den_r = sigma * cr + lam * sr
            c1 = np.where(big, -sr / (nu * den_r), c1)
            c2 = np.where(big, 2.0 * sigma * np.exp(-np.where(big, x, 0.0)) / den_r, c2)
    if not (np.all(np.isfinite(c1)) and np.all(np.isfinite(c2))):
        raise ParameterOverflow(f"non-finite coefficients for lambda={lam}, nu={nu}, dt={dt}")
    return sigma, c1, c2


def coefficients(lam: float, nu: float, dt: float) -> ModeCoefficients:
    if lam < 0 or nu <= 0 or dt <= 0:
        raise ValueError("coefficients need lambda >= 0, nu > 0 and dt > 0")
    sigma, c1, c2 = c1_c2(lam, nu, dt)
    return ModeCoefficients(float(lam), float(sigma), float(c1), float(c2),
                            float(nu), float(dt))


def all_coefficients(basis: EigenBasis, nu: float, dt: float) -> list[ModeCoefficients]:
    return [coefficients(lam, nu, dt) for lam in basis.lambdas]


def rho_tilde_expanded(lam, nu, dt, sinh_squared: bool = False):
    """Rational form of ``nu*C1^2 + C2^2`` after expanding the denominator.

    The expansion of ``(sigma cosh x + lambda sinh x)^2`` yields the cross term
    ``sigma*lambda*sinh(2x)``. ``sinh_squared=True`` uses ``sinh(2x)**2`` instead,
    a variant that does not agree in general.
    Overflows for ``sigma*dt`` beyond roughly 350.
    """
    lam, nu, dt = (np.asarray(a, dtype=float) for a in (lam, nu, dt))
    sigma = np.sqrt(lam ** 2 + 1.0 / nu)
    x = sigma * dt
    ch2 = np.cosh(x) ** 2
    cross = np.sinh(2.0 * x) ** 2 if sinh_squared else np.sinh(2.0 * x)
    num = lam ** 2 + ch2 / nu
    return num / (num + 2.0 * lam ** 2 * np.sinh(x) ** 2 + sigma * lam * cross)


def dump_csv(basis: EigenBasis, nu: float, dt: float, out=None) -> str:
    """CSV ``m,lambda,sigma,c1,c2`` for every mode of ``basis``."""
    sigma, c1, c2 = c1_c2(basis.lambdas, nu, dt)
    buf = out if out is not None else io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["m", "lambda", "sigma", "c1", "c2"])
    for m, row in enumerate(zip(basis.lambdas, sigma, c1, c2), start=1):
        w.writerow([m] + [f"{v:.17g}" for v in row])
    return buf.getvalue() if out is None else ""
