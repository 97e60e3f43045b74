import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tpschwarz.model import SpatialGrid
from tpschwarz.modes import coefficients, eigenbasis
from tpschwarz.pint import exact_mode_sweep
from tpschwarz.theory import (apply, assemble, dense_infinity_norm, infinity_norm_closed_form,
                              region_d_contains, rho_tilde, sigma_t_distance, special_norm,
                              spectral_radius, spectrum_report, symbol_curve, symbol_eigenvalues,
                              symbol_matrix)

LAM1_128 = eigenbasis(SpatialGrid(128)).lambdas[0]

params = st.tuples(st.floats(-1, 5), st.floats(-4, 1), st.floats(-3, 0.5)).map(
    lambda t: coefficients(10 ** t[0], 10 ** t[1], 10 ** t[2]))


@pytest.fixture
def c():
    return coefficients(LAM1_128, 1e-2, 1 / 128)


def test_assemble_blocks(c):
    T = assemble(c, 2)
    np.testing.assert_array_equal(T.dense(), [[0, c.c1], [-c.nu * c.c1, 0]])
    with pytest.raises(ValueError):
        assemble(c, 1)
    T5 = assemble(c, 5).dense()
    assert T5.shape == (8, 8)
    # only the Toeplitz pattern is populated
    mask = np.zeros((8, 8), bool)
    for i in range(4):
        for j in range(max(0, i - 1), min(4, i + 2)):
            mask[2 * i:2 * i + 2, 2 * j:2 * j + 2] = True
    assert np.all(T5[~mask] == 0)


def test_middle_row_sums(c):
    T = assemble(c, 3)
    D = T.dense()
    # N=3 has two block rows; the Toeplitz row sum equals T_l + T_d + T_r per row
    full = T.t_l + T.t_d + T.t_r
    np.testing.assert_allclose(D[0:2].sum(axis=1), (T.t_d + T.t_r).sum(axis=1))
    np.testing.assert_allclose(D[2:4].sum(axis=1), (T.t_l + T.t_d).sum(axis=1))
    D4 = assemble(c, 4).dense()
    np.testing.assert_allclose(D4[2:4].sum(axis=1), full.sum(axis=1))


@pytest.mark.parametrize("lam,nu,dt", [(LAM1_128, 1e-2, 1 / 128), (30.0, 0.1, 0.25), (2.0, 3.0, 1.0)])
def test_column_probing_against_exact_ode_sweep(lam, nu, dt):
    c = coefficients(lam, nu, dt)
    T = assemble(c, 4)
    cols = np.column_stack([exact_mode_sweep(lam, nu, dt, e) for e in np.eye(T.dim)])
    np.testing.assert_allclose(cols, T.dense(), atol=1e-12 * max(1, abs(c.c1)))


def test_apply(c):
    T2 = assemble(c, 2)
    assert np.all(apply(T2, np.zeros(2)) == 0)
    np.testing.assert_array_equal(apply(T2, [1.0, 0.0]), [0.0, -c.nu * c.c1])
    T = assemble(c, 64)
    e = np.random.default_rng(0).standard_normal(T.dim)
    assert np.abs(T.apply(e) - T.dense() @ e).max() <= 1e-14 * np.abs(e).max() * 2
    with pytest.raises(ValueError):
        apply(T, np.zeros(3))


def test_infinity_norm_closed_form():
    c = coefficients(LAM1_128, 0.5, 0.25)
    s, x = c.sigma, c.sigma * c.dt
    closed = (s + math.sinh(x) / c.nu) / (s * math.cosh(x) + c.lam * math.sinh(x))
    assert math.isclose(infinity_norm_closed_form(c), closed, rel_tol=1e-14)
    assert infinity_norm_closed_form(coefficients(LAM1_128, 1e-2, 1 / 128)) > 1


@settings(max_examples=60, deadline=None)
@given(params, st.integers(3, 32))
def test_infinity_norm_matches_dense(c, N):
    ref = dense_infinity_norm(assemble(c, N))
    assert abs(infinity_norm_closed_form(c) - ref) <= 1e-13 * max(1.0, ref)


def test_infinity_norm_two_subdomains():
    for nu in (0.01, 5.0):
        c = coefficients(10.0, nu, 0.5)
        assert dense_infinity_norm(assemble(c, 2)) == max(abs(c.c1), nu * abs(c.c1))


def test_rho_tilde_properties():
    assert rho_tilde(coefficients(0.0, 0.3, 0.7)) == pytest.approx(1.0, abs=1e-15)
    lam = np.sort(np.random.default_rng(2).uniform(1e-3, 1e3, 200))
    vals = [rho_tilde(coefficients(l, 1e-2, 1 / 16)) for l in lam]
    assert np.all(np.diff(vals) < 0)
    c = coefficients(eigenbasis(SpatialGrid(32)).lambdas[0], 0.1, 0.25)
    assert abs(rho_tilde(c) - (0.1 * c.c1 ** 2 + c.c2 ** 2)) <= 1e-14


def test_special_norm():
    c = coefficients(40.0, 0.05, 0.1)
    for N in (3, 4, 10):
        assert special_norm(assemble(c, N)) == pytest.approx(math.sqrt(c.rho_tilde), rel=1e-13)
    assert special_norm(assemble(c, 2)) == pytest.approx(math.sqrt(c.nu) * abs(c.c1), rel=1e-15)
    rng = np.random.default_rng(11)
    for _ in range(10):
        c = coefficients(10 ** rng.uniform(-1, 4), 10 ** rng.uniform(-4, 1), 10 ** rng.uniform(-3, 0))
        T = assemble(c, 16)
        D = np.diag(np.tile([1.0, math.sqrt(c.nu)], 15))
        S = np.linalg.inv(D) @ T.dense() @ D
        ref = np.sqrt((S ** 2).sum(axis=1).max())
        assert special_norm(T) == pytest.approx(ref, rel=1e-13)


def test_spectral_radius_small_cases(c):
    rho, lam = spectral_radius(assemble(c, 2))
    r = math.sqrt(c.nu) * abs(c.c1)
    assert rho == pytest.approx(r, rel=1e-14)
    np.testing.assert_allclose(np.sort(lam.imag), [-r, r], rtol=1e-14)
    T8 = assemble(c, 8)
    _, lam8 = spectral_radius(T8)
    roots = np.roots(np.poly(T8.dense()))
    for z in lam8:
        assert np.abs(roots - z).min() < 1e-8
    _, ref = spectral_radius(T8, method="lapack")
    assert max(np.abs(ref - z).min() for z in lam8) < 1e-8
    with pytest.raises(ValueError):
        spectral_radius(T8, method="magic")


@settings(max_examples=25, deadline=None)
@given(params, st.sampled_from([2, 3, 5, 16, 64, 256]))
def test_bound_chain_sampled(c, N):
    T = assemble(c, N)
    rho, lam = spectral_radius(T)
    assert rho <= special_norm(T) + 1e-10
    assert special_norm(T) < 1
    assert max(np.abs(lam - np.conj(z)).min() for z in lam) < 1e-8


def test_symbol_eigenvalues(c):
    r = math.sqrt(c.nu) * abs(c.c1)
    mp_, mm = symbol_eigenvalues(c, 0.0)
    assert mp_ == pytest.approx(c.c2 + 1j * r) and mm == pytest.approx(c.c2 - 1j * r)
    mp_, mm = symbol_eigenvalues(c, math.pi / 2)
    assert abs(mp_.real) < 1e-15 and mp_.imag == pytest.approx(math.sqrt(c.rho_tilde))
    for th in np.random.default_rng(5).uniform(-np.pi, np.pi, 20):
        ev = np.linalg.eigvals(symbol_matrix(c, th))
        mp_, mm = symbol_eigenvalues(c, th)
        for z in (mp_, mm):
            assert np.abs(ev - z).min() < 1e-12


def test_symbol_curve_invariants(c):
    curve = symbol_curve(c)
    assert curve.thetas.size == 2001
    np.testing.assert_array_equal(curve.mu_plus, np.conj(curve.mu_minus))
    assert np.all(curve.mu_plus.imag >= 0)
    assert np.abs(np.abs(curve.mu_plus) ** 2 - c.rho_tilde).max() <= 1e-13
    assert np.all(region_d_contains(c, curve.mu_plus, 1e-12))
    assert np.all(region_d_contains(c, curve.mu_minus, 1e-12))
    with pytest.raises(ValueError):
        symbol_curve(c, 2)


def test_region_d(c):
    r = math.sqrt(c.nu) * abs(c.c1)
    assert region_d_contains(c, c.c2 + 1j * r, 0.0)
    assert not region_d_contains(c, c.c2 * 1.01, 0.005 * c.c2)
    with pytest.raises(ValueError):
        region_d_contains(c, 0.0, -1.0)
    _, lam = spectral_radius(assemble(c, 128))
    assert np.all(region_d_contains(c, lam, 1e-10))
    # C2 = 0 collapses the region to a segment of the imaginary axis
    c0 = coefficients(1e6, 1e-2, 1.0)
    assert c0.c2 == 0.0
    r0 = math.sqrt(c0.nu) * abs(c0.c1)
    assert region_d_contains(c0, 0.5j * r0, 0.0) is True
    assert not region_d_contains(c0, 1.01j * r0, 0.0)
    assert not region_d_contains(c0, 1e-3 + 0j, 0.0)


def test_sigma_t_distance(c):
    curve = symbol_curve(c)
    assert sigma_t_distance(curve, curve.mu_plus[123]) == 0.0
    # brute force over a fine grid: every symbol point has modulus sqrt(rho_tilde)
    th = np.linspace(-np.pi, np.pi, 100_001)
    brute = np.abs(np.concatenate(symbol_eigenvalues(c, th))).min()
    assert brute == pytest.approx(math.sqrt(c.rho_tilde), rel=1e-12)
    assert sigma_t_distance(curve, 0.0) == pytest.approx(brute, rel=1e-5)
    d = sigma_t_distance(curve, np.array([0.0, 2.0]))
    assert d.shape == (2,) and d[1] > 1


def test_spectrum_report(c):
    rep = spectrum_report(c, 16)
    assert rep.eigenvalues.size == 30 and rep.in_region_D.size == 30
    assert rep.rho == pytest.approx(np.abs(rep.eigenvalues).max())
    assert rep.special_norm ** 2 == pytest.approx(rep.rho_tilde, rel=1e-12)
    assert rep.max_dist == rep.dist_to_sigmaT.max()
    assert rep.frac_outside(10.0) == 0.0
    assert rep.frac_outside(0.0) == np.count_nonzero(rep.dist_to_sigmaT > 0) / 16
