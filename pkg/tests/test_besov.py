import math

import numpy as np
import pytest

from speclp import Grid1D, SampledFunction, make_potential
from speclp.besov import (BesovParams, bernstein_check, besov_norm, characterization_check, fourier_sobolev_norm,
                          hl_maximal, lp, lq, peetre_maximal, plancherel_check, probe_set, triebel_norm)
from speclp.dyadic import make_dyadic_system
from speclp.speccalc import Machinery


@pytest.fixture(scope="module")
def free_machinery():
    return Machinery(make_potential("free"), grid=Grid1D.from_spacing(-30, 30, 0.1),
                     system=make_dyadic_system(-6, 6), bound_states=[])


def test_params_validation():
    with pytest.raises(ValueError):
        BesovParams(p=0)
    with pytest.raises(ValueError):
        BesovParams(s=0)


def test_lq():
    assert lq([3, 4], 2) == pytest.approx(5)
    assert lq([3, -7], math.inf) == 7
    assert lq([], 1) == 0


def test_hl_maximal_of_indicator():
    g = Grid1D.from_spacing(-20, 20, 0.05)
    ind = SampledFunction(g, (np.abs(g.points) <= 0.5).astype(float))
    x = g.points
    far = (np.abs(x) > 1) & (np.abs(x) < 15)
    Mc = hl_maximal(ind, centered=True).values
    assert np.allclose(Mc[far], 1 / (2 * np.abs(x[far]) + 1), rtol=0.05)
    gs = Grid1D.from_spacing(-8, 8, 0.05)
    xs = gs.points
    Mu = hl_maximal(SampledFunction(gs, (np.abs(xs) <= 0.5).astype(float)), centered=False).values
    far_s = (np.abs(xs) > 1) & (np.abs(xs) < 7)
    assert np.allclose(Mu[far_s], 2 / (2 * np.abs(xs[far_s]) + 1), rtol=0.05)
    assert np.all(Mu >= hl_maximal(SampledFunction(gs, (np.abs(xs) <= 0.5).astype(float))).values - 1e-12)


def test_plancherel_free(free_machinery):
    fset = probe_set(free_machinery.grid)
    r = plancherel_check(fset, free_machinery)
    assert r["pass"]
    # partition squared sums to between 1/2 and 1, so ratios sit in [1/sqrt 2, 1]
    assert 0.69 < r["min_ratio"] <= r["max_ratio"] < 1.01


def test_norms_and_characterization(free_machinery):
    fset = probe_set(free_machinery.grid)[:4]
    P = BesovParams(0.5, 2.0, 2.0, 1.0)
    assert characterization_check(fset, free_machinery, P, "B")["pass"]
    assert characterization_check(fset, free_machinery, P, "F")["pass"]
    f = fset[0]
    b, t = besov_norm(f, free_machinery, BesovParams(0, 2, 2)), triebel_norm(f, free_machinery, BesovParams(0, 2, 2))
    # for p = q = 2 the two norms coincide
    assert b.norm == pytest.approx(t.norm, rel=1e-10)
    with pytest.raises(ValueError):
        triebel_norm(f, free_machinery, BesovParams(0, math.inf, 2))
    with pytest.raises(ValueError):
        characterization_check(fset, free_machinery, BesovParams(0, 1, 2, 0.5), "B")


def test_peetre_dominates_band(free_machinery):
    f = probe_set(free_machinery.grid)[0]
    b = free_machinery.band_function(2, f.values)
    star = peetre_maximal(f, free_machinery, 2, 2.0, band=b).values
    assert np.all(star >= np.abs(b) - 1e-15)


def test_bernstein(free_machinery):
    f = probe_set(free_machinery.grid)[2]
    assert bernstein_check(f, free_machinery, [-2, 0, 2, 4])["pass"]


def test_fourier_sobolev_norm():
    g = Grid1D.from_spacing(-20, 20, 0.05)
    f = np.exp(-g.points**2 / 2)
    assert fourier_sobolev_norm(f, g, 0, 2) == pytest.approx(math.pi**0.25, rel=1e-10)
    # order 2: ||f - f''||_2 with f'' = (x^2 - 1) f
    ref = np.sqrt(np.sum((f - (g.points**2 - 1) * f) ** 2) * 0.05)
    assert fourier_sobolev_norm(f, g, 2, 2) == pytest.approx(ref, rel=1e-8)


def test_probe_set_is_seeded():
    g = Grid1D.from_spacing(-10, 10, 0.5)
    a, b = probe_set(g, 7), probe_set(g, 7)
    assert len(a) == 15 and all(np.array_equal(u.values, v.values) for u, v in zip(a, b))
    assert not np.array_equal(probe_set(g, 8)[0].values, a[0].values)


def test_lp_weights(free_machinery):
    ones = np.ones(free_machinery.grid.size)
    assert lp(free_machinery, ones, 1) == pytest.approx(60.0)


@pytest.mark.parametrize("centered", [True, False])
def test_hl_maximal_trivial(centered):
    g = Grid1D.from_spacing(-3, 3, 0.1)
    assert np.allclose(hl_maximal(SampledFunction(g, np.full(g.size, -2.5)), centered).values, 2.5)
    f = SampledFunction(g, np.sin(3 * g.points))
    assert np.all(hl_maximal(f, centered).values >= np.abs(f.values) - 1e-12)
