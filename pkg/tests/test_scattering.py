import math
import warnings

import numpy as np
import pytest

from speclp import make_potential
from speclp.oracles import finite_well_kappas, ode_wronskian, square_barrier_coefficients
from speclp.scattering import (ScatteringData, asymptotics_report, detect_resonance, find_bound_states,
                               scattering_pipeline, wronskian_imag_axis)

# |W(0)| for the analytic cases
NU_FROZEN = {
    "square": math.sqrt(2) * math.sinh(math.sqrt(2)),  # c=2 on [0,1]
    "well": math.sin(1.0),  # V0=1, L=1
}


def test_square_barrier_matches_closed_form(scattered, kgrid):
    _, _, S = scattered("square")
    t, rp, rm = square_barrier_coefficients(2.0, 0.0, 1.0, kgrid)
    assert np.max(np.abs(S.t - t)) < 1e-6
    assert np.max(np.abs(S.r_plus - rp)) < 1e-6
    assert np.max(np.abs(S.r_minus - rm)) < 1e-6


@pytest.mark.parametrize("name", ["square", "well"])
def test_nu_frozen(scattered, name):
    assert abs(scattered(name)[2].nu) == pytest.approx(NU_FROZEN[name], rel=1e-8)


def test_nu_against_ode(scattered):
    S = scattered("gauss")[2]
    ref = ode_wronskian(make_potential("gauss"), [0.0])[0]
    assert abs(S.nu - ref) < 1e-6


@pytest.mark.parametrize("name", ["square", "well", "poschl_teller", "bump", "gauss"])
def test_unitarity_and_symmetry(scattered, name):
    S = scattered(name)[2]
    assert S.unitarity_defect() < 1e-6
    # real potential: t(-k) = conj t(k)
    assert np.max(np.abs(S.t[::-1] - np.conj(S.t))) < 1e-8


def test_wronskian_agrees_with_jost(scattered):
    S = scattered("bump")[2]
    assert np.max(np.abs(S.W - S.W_jost) / np.maximum(1, np.abs(S.W))) < 1e-6


def test_free_is_resonant(kgrid):
    _, _, S = scattering_pipeline(make_potential("free"), kgrid)
    assert S.resonant and np.all(S.t == 1) and S.bound_states == []


def test_resonance_flags(scattered):
    for name in ("square", "well", "bump", "gauss"):
        assert not scattered(name)[2].resonant
    S = scattered("poschl_teller")[2]
    assert S.resonant and S.diagnostics["resonance"]["agree"]
    assert np.max(np.abs(np.abs(S.t) - 1)) < 1e-6  # reflectionless


def test_pt_bound_state(scattered):
    bs = scattered("poschl_teller")[2].bound_states
    assert len(bs) == 1 and bs[0].kappa == pytest.approx(1.0, abs=1e-10)
    x = bs[0].eigenfunction.grid.points
    e = bs[0].eigenfunction.values
    ref = np.sqrt(0.5) / np.cosh(x)
    cos = abs(np.dot(e, ref)) / (np.linalg.norm(e) * np.linalg.norm(ref))
    assert cos > 1 - 1e-8


def test_pt_non_integer_kappas():
    bs = find_bound_states(make_potential("poschl_teller", nu=1.5))
    assert [b.kappa for b in bs] == pytest.approx([1.5, 0.5], abs=1e-9)


@pytest.mark.parametrize("V0,L", [(1.0, 1.0), (10.0, 2.0), (30.0, 1.5)])
def test_finite_well_kappas(V0, L):
    bs = find_bound_states(make_potential("well", V0=V0, L=L))
    ref = finite_well_kappas(V0, L)
    assert len(bs) == ref.size
    assert np.allclose([b.kappa for b in bs], ref, atol=1e-9)


def test_wronskian_real_on_imaginary_axis():
    W = wronskian_imag_axis(make_potential("well", V0=1, L=1), [finite_well_kappas(1.0, 1.0)[0]])
    assert abs(W[0]) < 1e-8


def test_well_resonance_at_pi():
    # sqrt(V0) L = pi: zero-energy solution cos(sqrt(V0) x) has vanishing slope at both ends
    V = make_potential("well", V0=math.pi**2, L=1.0)
    kp = np.geomspace(0.05, 20, 40)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        _, _, S = scattering_pipeline(V, np.concatenate([-kp[::-1], kp]), bound_states=False)
    assert S.resonant and abs(S.nu) < 1e-6


def test_detect_resonance_warns_on_disagreement():
    k = np.array([-0.5, 0.5])
    S = ScatteringData(k, -2j * k, np.array([1e-4, 1e-4], complex), np.zeros(2, complex), np.zeros(2, complex), 0j)
    with pytest.warns(RuntimeWarning):
        res, diag = detect_resonance(S)
    assert res and not diag["agree"]


def test_asymptotics(scattered):
    rep = asymptotics_report(scattered("bump")[2])
    assert rep["pass"]
    with pytest.raises(ValueError):
        asymptotics_report(ScatteringData(np.array([1.0]), np.ones(1), np.ones(1), np.zeros(1), np.zeros(1), 0j))
