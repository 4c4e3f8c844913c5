import math

import numpy as np
import pytest

from speclp import Grid1D, SampledFunction, make_potential
from speclp.dyadic import make_dyadic_system
from speclp.oracles import free_kernel
from speclp.speccalc import (Machinery, NyquistError, SpectralKernel, apply_operator, assemble_kernel, classify,
                             decay_fit, dyadic_kernels, infer_band, kernel_oracle, lambda_grid, spectral_multiplier,
                             wave_energy, wave_propagate, weighted_l2_check)

SYS = make_dyadic_system(-6, 6)
SMALL = Grid1D.from_spacing(-4, 4, 0.25)


def test_lambda_grid_nyquist():
    lam, w = lambda_grid((1.0, 2.0), 100.0)
    assert np.diff(lam).max() * 100 <= math.pi / 4 + 1e-12
    assert w.sum() == pytest.approx(1.0)
    with pytest.raises(NyquistError):
        lambda_grid((1.0, 2.0), 100.0, points=10)
    lam, w = lambda_grid((0.0, 1.0), 1.0)
    assert lam[0] > 0 and w.sum() == pytest.approx(1.0)


def test_infer_band():
    phi = SYS.phi_fn(2)
    lo, hi = infer_band(phi)
    # phi(lambda^2) is supported in [1, 2]; it rounds to zero slightly inside
    assert 1.0 <= lo < 1.05 and 1.95 < hi <= 2.0 + 1e-3
    outside = np.concatenate([np.linspace(0, lo, 500), np.linspace(hi, 3, 500)])
    assert np.max(np.abs(phi(outside**2))) == 0.0
    assert infer_band(lambda E: 0 * E) is None


@pytest.mark.parametrize("j", [-3, 0, 3])
@pytest.mark.parametrize("ell", [0, 1])
def test_free_kernel_matches_oracle(j, ell):
    phi = SYS.phi_fn(j)
    K = assemble_kernel(make_potential("free"), None, None, phi, ell, xgrid=SMALL, band=SYS.band(j))
    ref = free_kernel(phi, SMALL.points, SMALL.points, SYS.band(j)[1], ell)
    assert np.max(np.abs(K.K - ref)) < 1e-8


@pytest.mark.parametrize("kind,params", [("well", dict(V0=1, L=1)), ("square", dict(c=2, a=0, b=1))])
def test_kernel_matches_ode_oracle(kind, params):
    from speclp.scattering import find_bound_states, ScatteringData

    V = make_potential(kind, **params)
    S = ScatteringData(np.zeros(0), *(np.zeros(0),) * 4, 0j, bound_states=find_bound_states(V))
    phi = SYS.phi_fn(1)
    K = assemble_kernel(V, S, None, phi, xgrid=SMALL, band=SYS.band(1))
    ref = kernel_oracle(V, S, None, phi, xgrid=SMALL, band=SYS.band(1))
    assert np.max(np.abs(K.K - ref.K)) < 1e-4
    assert K.symmetry_defect() < 1e-8


def test_bound_state_projection():
    # phi = 1 near -kappa^2 picks the rank-one bound-state projector
    V = make_potential("poschl_teller", nu=1)
    from speclp.scattering import ScatteringData, find_bound_states

    S = ScatteringData(np.zeros(0), *(np.zeros(0),) * 4, 0j, bound_states=find_bound_states(V))
    phi = lambda E: np.where(np.asarray(E) < 0, 1.0, 0.0)
    K = assemble_kernel(V, S, None, phi, xgrid=SMALL, band=None)
    e = np.sqrt(0.5) / np.cosh(SMALL.points)
    assert np.max(np.abs(K.K - np.outer(e, e))) < 1e-8


def test_apply_operator_identity_like():
    K = SpectralKernel("id", 0, SMALL, SMALL, np.eye(SMALL.size) / SMALL.spacing)
    f = SampledFunction(SMALL, np.exp(-SMALL.points**2))
    g = apply_operator(K, f)
    assert np.allclose(g.values[1:-1], f.values[1:-1])


def test_classify_verdicts():
    assert classify({-2: 1.0, -1: 2.0, 0: 1.5})[0] == "PASS"
    assert classify({-4: 1000.0, -3: 100.0, -2: 10.0, -1: 1.0, 0: 1.0})[0] == "FAIL-LOW-ENERGY"
    assert classify({-2: 1.0, -1: 50.0, 0: 1.0})[0] == "FAIL-UNSTABLE"


def test_bump_decay_and_weighted_l2():
    V = make_potential("bump")
    xg = Grid1D.from_spacing(-5, 5, 0.1)
    yg = Grid1D.from_spacing(-60, 60, 0.1)
    ks = dyadic_kernels(V, None, SYS, [-2, 0, 2, 4], (0, 1), xgrid=xg, ygrid=yg)
    rep = decay_fit(list(ks.values()), (0, 2))
    assert all(v == "PASS" for v in rep.verdicts.values())
    sq = dyadic_kernels(V, None, SYS, [0, 2, 4], (0,), xgrid=xg, ygrid=xg)
    assert weighted_l2_check([sq[(j, 0)] for j in (0, 2, 4)], 1.0)["pass"]


@pytest.fixture(scope="module")
def free_machinery():
    return Machinery(make_potential("free"), grid=Grid1D.from_spacing(-30, 30, 0.1), bound_states=[])


def test_multiplier_identity(free_machinery):
    x = free_machinery.grid.points
    f = np.exp(-x**2 / 2) * np.cos(2 * x)
    g, rep = spectral_multiplier(lambda E: np.ones_like(E), None, free_machinery, f)
    assert np.max(np.abs(g.values - f)) < 1e-4
    assert rep["sup"] > 0


def test_heat_multiplier_matches_free_heat(free_machinery):
    x = free_machinery.grid.points
    f = np.exp(-x**2 / 2)
    g, _ = spectral_multiplier(lambda E: np.exp(-0.5 * E), None, free_machinery, f)
    # Gaussian of variance 1 spread by 2t = 1
    ref = np.exp(-x**2 / 4) / np.sqrt(2)
    assert np.max(np.abs(g.values - ref)) < 1e-4


def test_free_wave_is_dalembert(free_machinery):
    x = free_machinery.grid.points
    u0 = lambda s: np.exp(-s**2)
    u, ut = wave_propagate(u0(x), np.zeros_like(x), 3.0, free_machinery, velocity=True)
    assert np.max(np.abs(u.values - 0.5 * (u0(x - 3) + u0(x + 3)))) < 1e-4
    e0 = wave_energy(u0(x), np.zeros_like(x), free_machinery)
    assert wave_energy(u.values, ut.values, free_machinery) == pytest.approx(e0, rel=1e-4)


def test_wave_rejects_negative_mass():
    V = make_potential("poschl_teller", nu=1)
    M = Machinery(V, grid=Grid1D.from_spacing(-10, 10, 0.1))
    f = 1 / np.cosh(M.grid.points)
    with pytest.raises(ValueError):
        wave_propagate(f, f, 1.0, M)
