import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from speclp import make_potential
from speclp.jost import (check_weighted_bounds, filon_rows, filon_weights, h_kernel, jost_band, panel_integrals,
                         phi_moments, reconstruct_m_from_B, reverse_scan, solve_m, solve_marchenko)
from speclp.oracles import ode_jost


@given(st.complex_numbers(max_magnitude=60, allow_nan=False, allow_infinity=False))
def test_phi_moments_against_quadrature(w):
    got = phi_moments(np.array([w]), 5)[:, 0]
    for j in range(6):
        re = quad(lambda s: (s**j * np.exp(w * s)).real, 0, 1, epsabs=1e-14, limit=200)[0]
        im = quad(lambda s: (s**j * np.exp(w * s)).imag, 0, 1, epsabs=1e-14, limit=200)[0]
        assert abs(got[j] - (re + 1j * im)) <= 1e-10 * max(1.0, abs(re + 1j * im))


def test_h_kernel_closed_form():
    u, k = 0.7, 1.3
    assert h_kernel(u, k) == pytest.approx((np.exp(2j * k * u) - 1) / (2j * k), rel=1e-13)


def test_reverse_scan_matches_loop():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(300, 4)) + 1j * rng.normal(size=(300, 4))
    rho = np.exp(1j * rng.uniform(0, 6, 4)) * 0.999
    ref = np.zeros_like(a)
    nxt = np.zeros(4, complex)
    for i in range(299, -1, -1):
        nxt = a[i] + rho * nxt
        ref[i] = nxt
    x = reverse_scan(a, rho)
    assert np.allclose(x[:-1], ref, atol=1e-10) and not np.any(x[-1])


@pytest.mark.parametrize("n", [2, 4, 7, 31])
def test_filon_exact_for_low_degree(n):
    h, k = 0.1, np.array([0.0, 0.8, -3.0, 25.0])
    y = h * np.arange(n)
    deg = min(5, n - 1)
    f = np.polyval(np.arange(1, deg + 2)[::-1], y)
    W = filon_weights(n, h, k)
    L = y[-1]
    for i, kk in enumerate(k):
        ref = quad(lambda s: np.polyval(np.arange(1, deg + 2)[::-1], s) * np.cos(2 * kk * s), 0, L)[0] \
            + 1j * quad(lambda s: np.polyval(np.arange(1, deg + 2)[::-1], s) * np.sin(2 * kk * s), 0, L)[0]
        assert abs(W[i] @ f - ref) < 1e-10 * max(1, abs(ref))


def test_panel_integrals_exact():
    h = 0.05
    y = h * np.arange(40)
    f = 1 - y + 3 * y**5
    P = panel_integrals(f, h)
    F = lambda s: s - s**2 / 2 + s**6 / 2
    assert np.allclose(P, F(y[1:]) - F(y[:-1]), atol=1e-13)


def test_filon_rows_matches_loop():
    rng = np.random.default_rng(1)
    R = rng.normal(size=(12, 30))
    n = rng.integers(2, 31, size=12)
    w = rng.normal(size=12)
    k = np.array([0.0, 0.4, 7.0])
    ref = sum(w[p] * (filon_weights(int(n[p]), 0.02, k) @ R[p, : n[p]]) for p in range(12))
    assert np.allclose(filon_rows(R, n, w, 0.02, k), ref, atol=1e-12)


def test_free_m_is_one():
    J = solve_m(make_potential("free"), np.linspace(-1, 1, 5), np.array([0.5, 2.0]))
    assert np.all(J.m_plus == 1) and np.all(J.m_minus == 1)


@pytest.mark.parametrize("kind,params", [("square", dict(c=2, a=0, b=1)), ("well", dict(V0=1, L=1)),
                                         ("poschl_teller", dict(nu=1)), ("bump", {}), ("gauss", {})])
def test_volterra_matches_ode(kind, params):
    V = make_potential(kind, **params)
    x = np.array([-3.0, -0.5, 0.0, 0.4, 2.5])
    k = np.array([-4.0, -0.3, 0.2, 1.0, 6.0])
    J = solve_m(V, x, k)
    for side, m in (("+", J.m_plus), ("-", J.m_minus)):
        ref = ode_jost(V, x, k, side)[0]
        assert np.max(np.abs(m - ref)) < 1e-6


def test_imaginary_k_matches_ode():
    V = make_potential("well", V0=4, L=1)
    x = np.array([-1.0, 0.5, 2.0])
    k = 1j * np.array([0.5, 1.5])
    J = solve_m(V, x, k)
    assert np.max(np.abs(J.m_plus - ode_jost(V, x, k, "+")[0])) < 1e-6


def test_k_derivative_matches_difference():
    V = make_potential("gauss", A=1, sigma=1)
    x, k, d = np.array([0.3]), 1.1, 1e-4
    J = solve_m(V, x, np.array([k]), side="+", nmax=1)
    fd = (solve_m(V, x, [k + d], side="+").m_plus - solve_m(V, x, [k - d], side="+").m_plus) / (2 * d)
    assert abs(J.deriv("+", 0, 1)[0, 0] - fd[0, 0]) < 1e-6


def test_order_limits():
    with pytest.raises(ValueError):
        solve_m(make_potential("bump"), [0.0], [1.0], nmax=4)
    with pytest.raises(KeyError):
        solve_m(make_potential("bump"), [0.0], [1.0]).deriv("+", 0, 1)


@pytest.mark.parametrize("kind,params", [("square", dict(c=2, a=0, b=1)), ("bump", {}), ("poschl_teller", dict(nu=1))])
def test_marchenko_reconstructs_m(kind, params):
    V = make_potential(kind, **params)
    for side in "+-":
        B = solve_marchenko(V, side)
        xs = B.a + B.h * np.array([10, 200, 500]) if side == "+" else -(B.a + B.h * np.array([10, 200, 500]))
        k = np.array([-2.0, 0.3, 1.0, 5.0])
        m = reconstruct_m_from_B(B, xs, k)
        ref = ode_jost(V, xs, k, side)[0]
        assert np.max(np.abs(m - ref)) < 1e-4


def test_marchenko_free_is_zero():
    B = solve_marchenko(make_potential("free"))
    assert not np.any(B.tri)


def test_weighted_bounds_bump():
    B = solve_marchenko(make_potential("bump"))
    for s in (0, 1, 2):
        r = check_weighted_bounds(B, s)
        assert r["pass"] and np.isfinite(r["sup"])
    assert check_weighted_bounds(B, 1, "dx")["pass"]
    with pytest.raises(ValueError):
        check_weighted_bounds(B, 0, "dz")


def test_jost_band_matches_solve_m():
    V = make_potential("well", V0=1, L=1)
    x = np.array([-2.0, 0.1, 0.7, 3.0])
    k = np.linspace(0.5, 3.0, 80)
    band = jost_band(V, x, k)
    J = solve_m(V, x, k, ell_max=1)
    assert band.nodes < k.size
    assert np.max(np.abs(band.m_plus - J.m_plus)) < 1e-9
    assert np.max(np.abs(band.dm_minus - J.deriv("-", 1, 0))) < 1e-9
