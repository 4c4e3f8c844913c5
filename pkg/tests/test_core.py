import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from speclp import Grid1D, SampledFunction, continuous_fourier, integrate, make_potential, weighted_norm
from speclp.core import DivergentIntegralError, Potential, fd_derivative, fd_weights, lp_norm, simpson_weights


def test_grid_constructors():
    g = Grid1D.from_spacing(-1.0, 1.0, 0.25)
    assert g.size == 9 and g.spacing == pytest.approx(0.25)
    assert g.bounds == (-1.0, 1.0)
    with pytest.raises(ValueError):
        Grid1D(np.array([0.0, 1.0, 3.0, 4, 5, 6, 7, 8]))
    with pytest.raises(ValueError):
        Grid1D(np.arange(5.0))
    with pytest.raises(ValueError):
        Grid1D.from_spacing(0, 1, -0.1)


def test_sampled_function_rejects_nonfinite():
    g = Grid1D.from_count(0, 1, 11)
    with pytest.raises(ValueError):
        SampledFunction(g, np.full(11, np.nan))
    with pytest.raises(ValueError):
        SampledFunction(g, np.zeros(10))


@given(st.integers(3, 60), st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_simpson_exact_for_cubics(n, a, b, c, d):
    x = np.linspace(0.0, 1.0, n)
    w = simpson_weights(n, x[1] - x[0])
    exact = a + b / 2 + c / 3 + d / 4
    assert np.dot(w, a + b * x + c * x**2 + d * x**3) == pytest.approx(exact, abs=1e-12)


def test_integrate_gaussian():
    g = Grid1D.from_spacing(-10, 10, 0.05)
    f = SampledFunction(g, np.exp(-g.points**2))
    assert integrate(f).real == pytest.approx(math.sqrt(math.pi), rel=1e-12)
    assert lp_norm(f, math.inf) == pytest.approx(1.0)


def test_fourier_of_gaussian():
    g = Grid1D.from_spacing(-12, 12, 0.02)
    k = Grid1D.from_spacing(-5, 5, 0.5)
    F = continuous_fourier(SampledFunction(g, np.exp(-g.points**2 / 2)), k)
    exact = math.sqrt(2 * math.pi) * np.exp(-k.points**2 / 2)
    assert np.max(np.abs(F.values - exact)) < 1e-12


def test_fourier_warns_on_truncation():
    g = Grid1D.from_spacing(-1, 1, 0.1)
    with pytest.warns(RuntimeWarning):
        continuous_fourier(SampledFunction(g, np.ones(g.size)), g)


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_fourier_linear(a, b):
    g = Grid1D.from_spacing(-10, 10, 0.1)
    k = Grid1D.from_count(-2, 2, 9)
    f1, f2 = np.exp(-g.points**2), g.points * np.exp(-g.points**2)
    lhs = continuous_fourier(SampledFunction(g, a * f1 + b * f2), k).values
    rhs = a * continuous_fourier(SampledFunction(g, f1), k).values + b * continuous_fourier(SampledFunction(g, f2), k).values
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_fd_weights_known():
    assert np.allclose(fd_weights(1, [-1, 0, 1]), [-0.5, 0, 0.5])
    assert np.allclose(fd_weights(2, [-1, 0, 1]), [1, -2, 1])
    x = np.linspace(-1, 1, 7)
    assert np.allclose(fd_derivative(np.sin, x, 1), np.cos(x), atol=1e-10)


def test_csv_round_trip():
    g = Grid1D.from_count(0, 1, 9)
    f = SampledFunction(g, np.exp(1j * g.points))
    back = SampledFunction.from_csv(f.to_csv())
    assert np.array_equal(back.values, f.values) and back.grid.same_as(g)


@pytest.mark.parametrize("kind,params", [("square", dict(c=2, a=0, b=1)), ("well", dict(V0=3, L=2)),
                                         ("poschl_teller", dict(nu=1.5)), ("bump", dict(A=2, a=-1, b=3)),
                                         ("gauss", dict(A=1, sigma=2)), ("free", {})])
def test_record_round_trip(kind, params):
    V = make_potential(kind, **params)
    W = Potential.from_record(V.to_record())
    x = np.linspace(-5, 5, 101)
    assert W.kind == kind and np.array_equal(V(x), W(x))


def test_potential_validation():
    with pytest.raises(ValueError):
        make_potential("square", a=1, b=0)
    with pytest.raises(ValueError):
        make_potential("poschl_teller", nu=-1)
    with pytest.raises(ValueError):
        make_potential("nonsense")
    with pytest.raises(ValueError):
        make_potential("square").derivative(np.zeros(3), 1)


def test_analytic_derivatives_match_fd():
    x = np.linspace(-3, 3, 31)
    for V in (make_potential("poschl_teller", nu=1), make_potential("gauss", A=2, sigma=1.5)):
        for n in (1, 2):
            assert np.allclose(V.derivative(x, n), fd_derivative(V, x, n), atol=1e-7)


def test_reflection():
    V = make_potential("bump", A=1, a=0, b=2)
    R = V.reflected()
    x = np.linspace(-3, 3, 61)
    assert np.array_equal(R(x), V(-x)) and R.support == (-2, 0)
    assert R.reflected() is V


def test_weighted_norms():
    # square: int_0^1 (1+y) 2 dy = 3
    assert weighted_norm(make_potential("square", c=2, a=0, b=1), 1.0) == pytest.approx(3.0, rel=1e-10)
    assert weighted_norm(make_potential("square"), 1.0, n=1) == math.inf
    # sech^2: int 2 sech^2 = 4
    assert weighted_norm(make_potential("poschl_teller", nu=1), 0.0) == pytest.approx(4.0, rel=1e-9)
    slow = Potential("slow", {}, lambda x: 1 / (1 + np.asarray(x) ** 2), None, "schwartz")
    with pytest.raises(DivergentIntegralError):
        weighted_norm(slow, 1.0)


def test_effective_support():
    V = make_potential("gauss", A=1, sigma=1)
    a, b = V.effective_support()
    assert a == pytest.approx(-b) and 6.0 < b < 6.2
    assert make_potential("bump").effective_support() == (-1.0, 1.0)
