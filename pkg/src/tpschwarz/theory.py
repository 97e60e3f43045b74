"""Iteration matrix of the time-parallel Schwarz method and its spectral bounds.

For one spatial mode the interface errors ``e = (R_2, D_1, ..., R_N, D_{N-1})``
(Robin trace of the right subdomain, Dirichlet trace of the left one, at each
interior interface) are propagated by the block tridiagonal Toeplitz matrix

    T = tridiag(T_l, T_d, T_r),  T_l = [[0, 0], [0, C2]],
                                 T_d = [[0, C1], [-nu C1, 0]],
                                 T_r = [[C2, 0], [0, 0]].

Its symbol is ``F(theta) = T_r e^{-i theta} + T_d + T_l e^{i theta}``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import eigen
from .modes import ModeCoefficients

DENSE_CAP = 4096
EIGEN_CAP = 2048
DEFAULT_THETA_SAMPLES = 2001


@dataclass(frozen=True)
class IterationMatrix:
    t_l: np.ndarray
    t_d: np.ndarray
    t_r: np.ndarray
    n_blocks: int
    coeffs: ModeCoefficients

    @property
    def dim(self) -> int:
        return 2 * self.n_blocks

    @property
    def N(self) -> int:
        return self.n_blocks + 1

    def dense(self) -> np.ndarray:
        if self.n_blocks > DENSE_CAP:
            raise ValueError(f"dense materialization capped at {DENSE_CAP} blocks")
        n = self.n_blocks
        out = np.zeros((2 * n, 2 * n))
        for i in range(n):
            out[2 * i:2 * i + 2, 2 * i:2 * i + 2] = self.t_d
            if i > 0:
                out[2 * i:2 * i + 2, 2 * i - 2:2 * i] = self.t_l
            if i < n - 1:
                out[2 * i:2 * i + 2, 2 * i + 2:2 * i + 4] = self.t_r
        return out

    def apply(self, e) -> np.ndarray:
        return apply(self, e)


def assemble(coeffs: ModeCoefficients, N: int) -> IterationMatrix:
    if N < 2:
        raise ValueError(f"the iteration matrix needs N >= 2 subdomains, got {N}")
    c1, c2, nu = coeffs.c1, coeffs.c2, coeffs.nu
    t_l = np.array([[0.0, 0.0], [0.0, c2]])
    t_d = np.array([[0.0, c1], [-nu * c1, 0.0]])
    t_r = np.array([[c2, 0.0], [0.0, 0.0]])
    for b in (t_l, t_d, t_r):
        b.setflags(write=False)
    return IterationMatrix(t_l, t_d, t_r, N - 1, coeffs)


def apply(T: IterationMatrix, e) -> np.ndarray:
    """Matrix-free product ``T @ e``."""
    e = np.asarray(e, dtype=float)
    if e.shape != (T.dim,):
        raise ValueError(f"error vector has shape {e.shape}, expected ({T.dim},)")
    c = T.coeffs
    R, D = e[0::2], e[1::2]
    out = np.empty_like(e)
    newR, newD = out[0::2], out[1::2]
    newR[:] = c.c1 * D
    newR[:-1] += c.c2 * R[1:]
    newD[:] = -c.nu * c.c1 * R
    newD[1:] += c.c2 * D[:-1]
    return out


def infinity_norm_closed_form(coeffs: ModeCoefficients) -> float:
    """Max row sum of ``T`` for ``N >= 3`` (no dependence on ``N``)."""
    a1, a2 = abs(coeffs.c1), abs(coeffs.c2)
    if coeffs.nu <= 1.0:
        return a1 + a2
    return coeffs.nu * a1 + a2


def dense_infinity_norm(T: IterationMatrix) -> float:
    return float(np.abs(T.dense()).sum(axis=1).max())


def rho_tilde(coeffs: ModeCoefficients) -> float:
    return coeffs.rho_tilde


def special_norm(T: IterationMatrix) -> float:
    """Largest Euclidean row norm of ``D^{-1} T D`` with ``D = diag(1, sqrt(nu), ...)``."""
    d = np.tile([1.0, np.sqrt(T.coeffs.nu)], T.n_blocks)
    S = T.dense() * d[None, :] / d[:, None]
    return float(np.sqrt(np.max(np.einsum("ij,ij->i", S, S))))


def spectral_radius(T: IterationMatrix, method: str = "qr"):
    """``(rho, eigenvalues)`` of the finite section.

    ``method="qr"`` uses the in-package Hessenberg/QR solver, ``"lapack"``
    defers to :func:`numpy.linalg.eigvals` (reference only).
    """
    if T.n_blocks > EIGEN_CAP:
        raise ValueError(f"dense eigensolver capped at {EIGEN_CAP} blocks")
    A = T.dense()
    if method == "qr":
        lam = eigen.eigvals(A)
    elif method == "lapack":
        lam = np.linalg.eigvals(A)
    else:
        raise ValueError(f"unknown method {method!r}")
    mod = np.abs(lam)
    return float(mod[np.argmax(mod)]), lam


def symbol_matrix(coeffs: ModeCoefficients, theta: float) -> np.ndarray:
    """``F(theta)`` after the ``diag(1, sqrt(nu))`` similarity."""
    s = np.sqrt(coeffs.nu) * coeffs.c1
    return np.array([[coeffs.c2 * np.exp(-1j * theta), s],
                     [-s, coeffs.c2 * np.exp(1j * theta)]])


def symbol_eigenvalues(coeffs: ModeCoefficients, theta):
    """``(mu_plus, mu_minus)`` of the symbol; vectorized over ``theta``."""
    theta = np.asarray(theta, dtype=float)
    re = coeffs.c2 * np.cos(theta)
    im = np.sqrt((coeffs.c2 * np.sin(theta)) ** 2 + coeffs.nu * coeffs.c1 ** 2)
    return re + 1j * im, re - 1j * im


@dataclass(frozen=True)
class SymbolCurve:
    thetas: np.ndarray
    mu_plus: np.ndarray
    mu_minus: np.ndarray


def symbol_curve(coeffs: ModeCoefficients, n_theta: int = DEFAULT_THETA_SAMPLES) -> SymbolCurve:
    if n_theta < 3:
        raise ValueError("symbol curve needs at least 3 samples")
    thetas = np.linspace(-np.pi, np.pi, n_theta)
    mp, mm = symbol_eigenvalues(coeffs, thetas)
    return SymbolCurve(thetas, mp, mm)


def region_d_contains(coeffs: ModeCoefficients, z, tol: float = 0.0):
    """Membership in the union of the numerical ranges of ``F(theta)``.

    Eliminating ``theta`` from ``Re z = C2 cos(theta)`` gives
    ``|Re z| <= C2`` and ``(Im z)^2 <= C2^2 - (Re z)^2 + nu C1^2``.
    """
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    z = np.asarray(z, dtype=complex)
    c2, nc1 = abs(coeffs.c2), coeffs.nu * coeffs.c1 ** 2
    re, im = z.real, z.imag
    inside = (np.abs(re) <= c2 + tol) & (im ** 2 <= c2 ** 2 - re ** 2 + nc1 + tol)
    return bool(inside) if inside.ndim == 0 else inside


def _polyline_distance(points: np.ndarray, z: np.ndarray) -> np.ndarray:
    a, b = points[:-1], points[1:]
    ab = b - a
    L2 = np.abs(ab) ** 2
    out = np.full(z.shape, np.inf)
    # chunk over z to bound memory
    for start in range(0, z.size, 256):
        zz = z.ravel()[start:start + 256][:, None]
        t = np.zeros((zz.shape[0], a.size))
        nz = L2 > 0
        t[:, nz] = np.clip(((zz - a[None, :]) * np.conj(ab)[None, :]).real[:, nz] / L2[nz], 0, 1)
        d = np.abs(zz - (a[None, :] + t * ab[None, :])).min(axis=1)
        out.ravel()[start:start + 256] = d
    return out


def sigma_t_distance(curve: SymbolCurve, z):
    """Distance from ``z`` to the sampled spectrum of the Laurent operator."""
    z = np.asarray(z, dtype=complex)
    zf = np.atleast_1d(z).ravel()
    d = np.minimum(_polyline_distance(curve.mu_plus, zf),
                   _polyline_distance(curve.mu_minus, zf))
    return float(d[0]) if z.ndim == 0 else d.reshape(z.shape)


@dataclass
class SpectrumReport:
    N: int
    eigenvalues: np.ndarray
    rho: float
    rho_tilde: float
    inf_norm: float
    special_norm: float
    in_region_D: np.ndarray
    dist_to_sigmaT: np.ndarray
    extras: dict = field(default_factory=dict)

    @property
    def max_dist(self) -> float:
        return float(self.dist_to_sigmaT.max()) if self.dist_to_sigmaT.size else 0.0

    def frac_outside(self, eps: float) -> float:
        """Eigenvalues farther than ``eps`` from the symbol spectrum, divided by ``N``."""
        return float(np.count_nonzero(self.dist_to_sigmaT > eps)) / self.N


def spectrum_report(coeffs: ModeCoefficients, N: int, n_theta: int = DEFAULT_THETA_SAMPLES,
                    region_tol: float = 1e-10, method: str = "qr") -> SpectrumReport:
    T = assemble(coeffs, N)
    rho, lam = spectral_radius(T, method=method)
    curve = symbol_curve(coeffs, n_theta)
    return SpectrumReport(
        N=N,
        eigenvalues=lam,
        rho=rho,
        rho_tilde=rho_tilde(coeffs),
        inf_norm=dense_infinity_norm(T),
        special_norm=special_norm(T),
        in_region_D=region_d_contains(coeffs, lam, region_tol),
        dist_to_sigmaT=sigma_t_distance(curve, lam),
    )
