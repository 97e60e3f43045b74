import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tpschwarz import eigen


def _match(a, b, tol):
    """Greedy multiset match of two complex eigenvalue lists."""
    b = list(b)
    worst = 0.0
    for z in a:
        j = int(np.argmin([abs(z - w) for w in b]))
        worst = max(worst, abs(z - b.pop(j)))
    return worst <= tol


def test_trivial_cases():
    assert eigen.eigvals(np.zeros((0, 0))).size == 0
    np.testing.assert_allclose(eigen.eigvals([[3.0]]), [3.0])
    lam = eigen.eigvals([[0.0, -1.0], [1.0, 0.0]])
    assert _match(lam, [1j, -1j], 1e-15)


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        eigen.eigvals(np.ones((2, 3)))
    with pytest.raises(ValueError):
        eigen.eigvals([[np.nan, 0.0], [0.0, 1.0]])


def test_known_spectra():
    # companion matrix of (x-1)(x-2)(x-3)(x^2+1)
    coeffs = np.poly([1, 2, 3, 1j, -1j]).real
    C = np.diag(np.ones(4), -1)
    C[0, :] = -coeffs[1:]
    assert _match(eigen.eigvals(C), [1, 2, 3, 1j, -1j], 1e-10)
    # nilpotent shift: all eigenvalues zero, a notoriously slow QR case
    J = np.diag(np.ones(5), 1)
    assert np.abs(eigen.eigvals(J)).max() < 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 40), st.integers(0, 2 ** 32 - 1))
def test_random_matrices_against_lapack(n, seed):
    A = np.random.default_rng(seed).standard_normal((n, n))
    ours = eigen.eigvals(A)
    ref = np.linalg.eigvals(A)
    assert _match(ours, ref, 1e-8 * max(1.0, np.abs(ref).max()))
    # real input: spectrum closed under conjugation
    assert _match(ours, np.conj(ours), 1e-8 * max(1.0, np.abs(ref).max()))


def test_badly_scaled_matrix():
    rng = np.random.default_rng(3)
    D = np.diag(10.0 ** rng.uniform(-150, 150, 12))
    A = rng.standard_normal((12, 12))
    B = D @ A @ np.linalg.inv(D)
    ref = np.linalg.eigvals(A)
    assert _match(eigen.eigvals(B), ref, 1e-8 * np.abs(ref).max())


def test_iteration_cap_reports_breakdown(monkeypatch):
    monkeypatch.setattr(eigen, "ITERATION_CAP_FACTOR", 0)
    A = np.random.default_rng(0).standard_normal((6, 6))
    with pytest.raises(eigen.EigenvalueBreakdown):
        eigen.eigvals(A)
