"""Time-parallel Schwarz solver for the discrete optimality system.

Everything is solved in the eigenbasis of the spatial operator, where the
Crank-Nicolson discretization of

    z' + lambda z = q / nu,        q' - lambda q = z - yhat

decouples into one scalar boundary-value problem in time per mode. On a time
window with ``K`` steps the unknowns are ``q_0, z_1, q_1, ..., q_{K-1}, z_K``
(interleaved), ``z_0`` and ``q_K`` being the transmitted traces, which gives a
``2K x 2K`` banded system with two sub- and two super-diagonals.

Interface traces are exchanged as nodal vectors; transforms happen inside.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm, lapack

from .model import (ProblemSpec, SpaceTimeField, SpatialGrid, TimeDecomposition,
                    l2q_norm, sample)
from .modes import EigenBasis, eigenbasis

KL = KU = 2


class SingularSystem(ArithmeticError):
    """A local or global Crank-Nicolson system could not be factorized."""


class SubdomainError(ArithmeticError):
    def __init__(self, index, cause):
        super().__init__(f"subdomain {index}: {cause}")
        self.index = index


def cn_band(lam: float, nu: float, h: float, K: int) -> np.ndarray:
    """Banded matrix of one CN window, in LAPACK ``gbtrf`` storage.

    Rows ``2k`` / ``2k+1`` hold the state / adjoint step ``k``, scaled by ``h``.
    """
    n = 2 * K
    ab = np.zeros((2 * KL + KU + 1, n))
    a, b, c = 0.5 * lam * h, 0.5 * h / nu, 0.5 * h

    def put(i, j, v):
        ab[KL + KU + i - j, j] = v

    for k in range(K):
        r1, r2 = 2 * k, 2 * k + 1
        qk, zk1 = 2 * k, 2 * k + 1
        # state row
        put(r1, zk1, 1.0 + a)
        if k > 0:
            put(r1, 2 * k - 1, -1.0 + a)
        put(r1, qk, -b)
        if k < K - 1:
            put(r1, 2 * k + 2, -b)
        # adjoint row
        put(r2, qk, -1.0 - a)
        if k < K - 1:
            put(r2, 2 * k + 2, 1.0 - a)
        put(r2, zk1, -c)
        if k > 0:
            put(r2, 2 * k - 1, -c)
    return ab


def band_to_dense(ab: np.ndarray) -> np.ndarray:
    n = ab.shape[1]
    A = np.zeros((n, n))
    for j in range(n):
        for i in range(max(0, j - KU), min(n, j + KL + 1)):
            A[i, j] = ab[KL + KU + i - j, j]
    return A


def trace_rhs(lam: float, nu: float, h: float, K: int, z0, qK, out=None):
    """Right-hand side contribution of the traces ``z0`` (left) and ``qK`` (right)."""
    z0, qK = np.asarray(z0, dtype=float), np.asarray(qK, dtype=float)
    if out is None:
        out = np.zeros((2 * K,) + np.broadcast(z0, qK).shape)
    a, b, c = 0.5 * lam * h, 0.5 * h / nu, 0.5 * h
    out[0] += (1.0 - a) * z0
    out[1] += c * z0
    out[2 * K - 2] += b * qK
    out[2 * K - 1] -= (1.0 - a) * qK
    return out


def target_rhs(h: float, yhat_modal: np.ndarray) -> np.ndarray:
    """Target contribution for one window; ``yhat_modal`` has ``K+1`` rows."""
    K = yhat_modal.shape[0] - 1
    out = np.zeros((2 * K,) + yhat_modal.shape[1:])
    out[1::2] = -0.5 * h * (yhat_modal[:-1] + yhat_modal[1:])
    return out


@dataclass
class ModeLocalFactorization:
    """Banded LU factors of the per-mode window systems (shared by all windows)."""

    lambdas: np.ndarray
    nu: float
    h: float
    K: int
    bands: list
    lu: list
    piv: list

    @classmethod
    def build(cls, lambdas, nu, h, K) -> "ModeLocalFactorization":
        bands, lus, pivs = [], [], []
        for m, lam in enumerate(lambdas):
            ab = cn_band(lam, nu, h, K)
            lu, piv, info = lapack.dgbtrf(ab, KL, KU)
            if info != 0:
                raise SingularSystem(f"mode {m + 1}: dgbtrf info={info}")
            bands.append(ab)
            lus.append(lu)
            pivs.append(piv)
        return cls(np.asarray(lambdas, dtype=float), nu, h, K, bands, lus, pivs)

    def solve(self, m: int, rhs: np.ndarray) -> np.ndarray:
        x, info = lapack.dgbtrs(self.lu[m], KL, KU, rhs, self.piv[m])
        if info != 0:
            raise SingularSystem(f"mode {m + 1}: dgbtrs info={info}")
        return x

    def residual(self, m: int, rhs: np.ndarray) -> float:
        """Relative backward residual ``||A x - b|| / (||A|| ||x|| + ||b||)`` (inf-norms)."""
        A = band_to_dense(self.bands[m])
        x = self.solve(m, rhs)
        r = A @ x - rhs
        scale = np.abs(A).sum(axis=1).max() * np.abs(x).max() + np.abs(rhs).max()
        return float(np.abs(r).max() / scale)

    def factor_residual(self, m: int) -> float:
        """``||P L U - A||_inf / ||A||_inf`` rebuilt densely from the band factors."""
        A = band_to_dense(self.bands[m])
        lu, piv = self.lu[m], self.piv[m]
        n = A.shape[0]
        out = np.zeros((n, n))
        for j in range(n):
            i0 = max(0, j - KL - KU)
            out[i0:j + 1, j] = lu[KL + KU + i0 - j:KL + KU + 1, j]
        # undo the elimination steps in reverse: add back multiples, then unswap
        for j in range(n - 1, -1, -1):
            for i in range(j + 1, min(n, j + KL + 1)):
                out[i] += lu[KL + KU + i - j, j] * out[j]
            p = piv[j]
            if p != j:
                out[[j, p]] = out[[p, j]]
        norm = np.abs(A).sum(axis=1).max()
        return float(np.abs(out - A).sum(axis=1).max() / norm)


@dataclass
class SchwarzState:
    """Interface buffers and latest local solutions.

    ``y_left[n]`` is the state trace entering window ``n`` (0-based) at its left
    end, ``p_right[n]`` the adjoint trace entering it at its right end.
    ``modal[m, :, n]`` is the interleaved local solution of mode ``m``.
    """

    y_left: np.ndarray
    p_right: np.ndarray
    modal: np.ndarray | None = None
    iteration: int = 0


@dataclass
class SchwarzHistory:
    records: list = field(default_factory=list)
    converged: bool = False
    state: SchwarzState | None = None

    @property
    def iterations(self) -> int:
        return len(self.records)

    def column(self, key):
        return np.array([r[key] for r in self.records], dtype=float)


def default_workers(N: int) -> int:
    env = os.environ.get("TPS_WORKERS")
    w = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(w, N))


class SchwarzSolver:
    """Parallel (Jacobi) Schwarz iteration over ``N`` time windows."""

    def __init__(self, problem: ProblemSpec, grid: SpatialGrid, decomp: TimeDecomposition,
                 basis: EigenBasis | None = None, workers: int | None = None):
        if not np.isclose(problem.horizon, decomp.horizon, rtol=1e-12, atol=0):
            raise ValueError("problem horizon does not match N * dt_sub")
        self.problem, self.grid, self.decomp = problem, grid, decomp
        self.basis = basis if basis is not None else eigenbasis(grid)
        if self.basis.M != grid.M:
            raise ValueError("eigenbasis size does not match the grid")
        self.workers = workers if workers is not None else default_workers(decomp.N)
        N, K, h = decomp.N, decomp.K, decomp.h_t
        self.factorization = ModeLocalFactorization.build(self.basis.lambdas, problem.nu, h, K)
        self.target = sample(problem.target, grid, decomp)
        yhat = self.basis.forward(self.target.values)          # (levels, M)
        windows = np.stack([yhat[n * K:(n + 1) * K + 1] for n in range(N)], axis=-1)
        self._base_rhs = np.ascontiguousarray(
            np.moveaxis(target_rhs(h, windows), 1, 0))          # (M, 2K, N)
        self.y0 = np.asarray(problem.initial(grid.nodes), dtype=float) * np.ones(grid.M)

    # -- state handling -------------------------------------------------
    def initial_state(self, y_left=None, p_right=None) -> SchwarzState:
        """Zero interior traces unless given; the physical end traces are enforced."""
        N, M = self.decomp.N, self.grid.M
        y = np.zeros((N, M)) if y_left is None else np.array(y_left, dtype=float)
        p = np.zeros((N, M)) if p_right is None else np.array(p_right, dtype=float)
        if y.shape != (N, M) or p.shape != (N, M):
            raise ValueError(f"trace buffers must have shape {(N, M)}")
        y[0] = self.y0
        p[-1] = 0.0
        return SchwarzState(y, p)

    def _solve_columns(self, rhs, out, cols):
        for m in range(self.grid.M):
            out[m, :, cols] = self.factorization.solve(m, rhs[m][:, cols]).T

    def local_solve_modal(self, z0_modal, qK_modal, cols=None):
        """Solve all windows (or ``cols``) for given modal traces, shape (M, N)."""
        K, h, nu = self.decomp.K, self.decomp.h_t, self.problem.nu
        rhs = self._base_rhs.copy()
        lam = self.basis.lambdas[:, None]
        a, b, c = 0.5 * lam * h, 0.5 * h / nu, 0.5 * h
        rhs[:, 0] += (1.0 - a) * z0_modal
        rhs[:, 1] += c * z0_modal
        rhs[:, 2 * K - 2] += b * qK_modal
        rhs[:, 2 * K - 1] -= (1.0 - a) * qK_modal
        out = np.empty_like(rhs)
        N = self.decomp.N
        chunks = np.array_split(np.arange(N), min(self.workers, N))
        if len(chunks) == 1:
            self._solve_columns(rhs, out, chunks[0])
        else:
            with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
                futures = [pool.submit(self._solve_columns, rhs, out, c) for c in chunks]
                for c, f in zip(chunks, futures):
                    try:
                        f.result()
                    except SingularSystem as exc:
                        raise SubdomainError(int(c[0]) + 1, exc) from exc
        return out

    def sweep(self, state: SchwarzState) -> SchwarzState:
        """One parallel sweep; reads only the buffers of ``state``."""
        z0 = self.basis.forward(state.y_left).T                # (M, N)
        qK = self.basis.forward(state.p_right).T
        X = self.local_solve_modal(z0, qK)
        y_new = np.empty_like(state.y_left)
        p_new = np.empty_like(state.p_right)
        y_new[0] = self.y0
        y_new[1:] = self.basis.inverse(X[:, -1, :-1].T)        # z_K of windows 0..N-2
        p_new[-1] = 0.0
        p_new[:-1] = self.basis.inverse(X[:, 0, 1:].T)         # q_0 of windows 1..N-1
        return SchwarzState(y_new, p_new, X, state.iteration + 1)

    # -- outputs --------------------------------------------------------
    def fields(self, state: SchwarzState) -> tuple[SpaceTimeField, SpaceTimeField]:
        """Concatenated nodal ``(y, p)``; interface levels taken from the left window for
        ``y`` and from the right window for ``p``."""
        if state.modal is None:
            raise ValueError("state has no local solutions yet; run a sweep first")
        X = state.modal
        M, K, N = self.grid.M, self.decomp.K, self.decomp.N
        zy = np.empty((self.decomp.n_levels, M))
        zp = np.empty((self.decomp.n_levels, M))
        zy[0] = self.basis.forward(self.y0)
        # X[:, 1::2, n] = z_1..z_K ; X[:, 0::2, n] = q_0..q_{K-1}
        zy[1:] = np.transpose(X[:, 1::2, :], (2, 1, 0)).reshape(N * K, M)
        zp[:-1] = np.transpose(X[:, 0::2, :], (2, 1, 0)).reshape(N * K, M)
        zp[-1] = 0.0
        return (SpaceTimeField(self.basis.inverse(zy), "state"),
                SpaceTimeField(self.basis.inverse(zp), "adjoint"))

    def subdomain_solve(self, n: int, left_y, right_p, local_target=None):
        """Solve window ``n`` (1-based) alone; returns nodal ``(y_n, p_n)`` with ``K+1`` levels.

        ``local_target`` defaults to the problem target sampled on the window.
        """
        N, K, h, nu = self.decomp.N, self.decomp.K, self.decomp.h_t, self.problem.nu
        if not 1 <= n <= N:
            raise ValueError(f"window index must be in 1..{N}")
        if local_target is None:
            local_target = self.target.values[(n - 1) * K:n * K + 1]
        local_target = np.asarray(local_target, dtype=float)
        yhat = self.basis.forward(local_target)
        z0 = self.basis.forward(np.asarray(left_y, dtype=float))
        qK = self.basis.forward(np.asarray(right_p, dtype=float))
        y = np.empty((K + 1, self.grid.M))
        p = np.empty((K + 1, self.grid.M))
        zy = np.empty_like(y)
        zp = np.empty_like(p)
        zy[0], zp[-1] = z0, qK
        rhs_t = target_rhs(h, yhat)
        for m, lam in enumerate(self.basis.lambdas):
            rhs = rhs_t[:, m] + trace_rhs(lam, nu, h, K, z0[m], qK[m])
            try:
                x = self.factorization.solve(m, rhs[:, None])[:, 0]
            except SingularSystem as exc:
                raise SubdomainError(n, exc) from exc
            zy[1:, m] = x[1::2]
            zp[:-1, m] = x[0::2]
        y[:] = self.basis.inverse(zy)
        p[:] = self.basis.inverse(zp)
        return y, p

    def interface_increment(self, old: SchwarzState, new: SchwarzState) -> float:
        """Largest trace change over the interior interfaces, relative to the largest
        trace of the same variable."""
        out = 0.0
        for a, b in ((old.y_left[1:], new.y_left[1:]), (old.p_right[:-1], new.p_right[:-1])):
            if a.size == 0:
                continue
            diff = np.linalg.norm(b - a, axis=1).max()
            scale = np.linalg.norm(b, axis=1).max()
            out = max(out, diff / scale if scale > 0 else diff)
        return float(out)

    def solve(self, tol: float = 1e-8, max_iters: int = 50, reference=None,
              state: SchwarzState | None = None) -> SchwarzHistory:
        """Iterate until the interface increment drops to ``tol``.

        ``reference`` is an optional ``(y, p)`` pair of fields; when given the
        history carries absolute L2(Q) errors of the concatenated iterates.
        """
        if not tol > 0:
            raise ValueError("tol must be positive")
        state = state if state is not None else self.initial_state()
        hist = SchwarzHistory()
        for it in range(1, max_iters + 1):
            new = self.sweep(state)
            rec = {"iter": it, "interface_incr": self.interface_increment(state, new)}
            if reference is not None:
                y, p = self.fields(new)
                rec["err_y"] = l2q_norm(y.values - reference[0].values, self.grid, self.decomp)
                rec["err_p"] = l2q_norm(p.values - reference[1].values, self.grid, self.decomp)
            hist.records.append(rec)
            state = new
            if rec["interface_incr"] <= tol:
                hist.converged = True
                break
        hist.state = state
        return hist


def subdomain_solve(solver: SchwarzSolver, n, left_y, right_p, local_target=None):
    return solver.subdomain_solve(n, left_y, right_p, local_target)


def schwarz_sweep(solver: SchwarzSolver, state: SchwarzState) -> SchwarzState:
    return solver.sweep(state)


def schwarz_solve(problem, grid, decomp, tol=1e-8, max_iters=50, reference=None,
                  workers=None) -> SchwarzHistory:
    solver = SchwarzSolver(problem, grid, decomp, workers=workers)
    return solver.solve(tol, max_iters, reference)


def monolithic_modal(basis: EigenBasis, nu: float, h: float, n_steps: int,
                     yhat_modal: np.ndarray, z0: np.ndarray, qT=None) -> np.ndarray:
    """All-at-once CN solve per mode on ``n_steps`` steps; returns (M, 2*n_steps)."""
    qT = np.zeros(basis.M) if qT is None else np.asarray(qT, dtype=float)
    rhs_t = target_rhs(h, yhat_modal)
    out = np.empty((basis.M, 2 * n_steps))
    for m, lam in enumerate(basis.lambdas):
        ab = np.zeros((2 * KL + KU + 1, 2 * n_steps))
        ab[:] = cn_band(lam, nu, h, n_steps)
        rhs = rhs_t[:, m] + trace_rhs(lam, nu, h, n_steps, z0[m], qT[m])
        lu, piv, x, info = lapack.dgbsv(KL, KU, ab, rhs[:, None])
        if info != 0:
            raise SingularSystem(f"global system, mode {m + 1}: dgbsv info={info}")
        out[m] = x[:, 0]
    return out


def monolithic_solve(problem: ProblemSpec, grid: SpatialGrid, decomp: TimeDecomposition,
                     basis: EigenBasis | None = None):
    """Global CN solution ``(y, p)``: the discrete fixed point of the Schwarz sweep."""
    basis = basis if basis is not None else eigenbasis(grid)
    target = sample(problem.target, grid, decomp)
    yhat = basis.forward(target.values)
    z0 = basis.forward(np.asarray(problem.initial(grid.nodes), dtype=float) * np.ones(grid.M))
    n_steps = decomp.N * decomp.K
    X = monolithic_modal(basis, problem.nu, decomp.h_t, n_steps, yhat, z0)
    zy = np.empty((n_steps + 1, grid.M))
    zp = np.empty((n_steps + 1, grid.M))
    zy[0], zy[1:] = z0, X[:, 1::2].T
    zp[:-1], zp[-1] = X[:, 0::2].T, 0.0
    return (SpaceTimeField(basis.inverse(zy), "state"),
            SpaceTimeField(basis.inverse(zp), "adjoint"))


def modal_interface_errors(solver: SchwarzSolver, state: SchwarzState, m: int) -> np.ndarray:
    """Mode-``m`` (0-based) interface vector ``(R_2, D_1, ..., R_N, D_{N-1})``.

    ``R_{n+1} = q_{n+1}(t_n) / nu`` and ``D_n = z_n(t_n)``; relative to the zero
    solution these are the errors when target and initial data vanish.
    """
    nu = solver.problem.nu
    R = solver.basis.forward(state.p_right[:-1])[:, m] / nu
    D = solver.basis.forward(state.y_left[1:])[:, m]
    e = np.empty(2 * R.size)
    e[0::2], e[1::2] = R, D
    return e


def traces_from_modal_errors(solver: SchwarzSolver, m: int, e) -> SchwarzState:
    """State whose only nonzero traces are mode ``m`` with interface vector ``e``."""
    N, M = solver.decomp.N, solver.grid.M
    e = np.asarray(e, dtype=float)
    y = np.zeros((N, M))
    p = np.zeros((N, M))
    phi = solver.basis.vectors[:, m]
    y[1:] = np.outer(e[1::2], phi)
    p[:-1] = np.outer(solver.problem.nu * e[0::2], phi)
    return SchwarzState(y, p)


def exact_mode_sweep(lam: float, nu: float, dt: float, e) -> np.ndarray:
    """One Schwarz sweep of the homogeneous mode ODEs, solved exactly.

    Each window solves ``z' = -lam z + q/nu``, ``q' = lam q + z`` with
    ``z(t_{n-1})`` and ``q(t_n)`` given, via the matrix exponential.
    """
    e = np.asarray(e, dtype=float)
    n_if = e.size // 2
    N = n_if + 1
    R, D = e[0::2], e[1::2]
    Phi = expm(np.array([[-lam, 1.0 / nu], [1.0, lam]]) * dt)
    newR = np.empty(n_if)
    newD = np.empty(n_if)
    for n in range(1, N + 1):
        z_left = 0.0 if n == 1 else D[n - 2]
        q_right = 0.0 if n == N else nu * R[n - 1]
        q_left = (q_right - Phi[1, 0] * z_left) / Phi[1, 1]
        z_right = Phi[0, 0] * z_left + Phi[0, 1] * q_left
        if n >= 2:
            newR[n - 2] = q_left / nu
        if n <= N - 1:
            newD[n - 1] = z_right
    out = np.empty_like(e)
    out[0::2], out[1::2] = newR, newD
    return out
