import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from speclp.dyadic import DyadicInvariantError, DyadicSystem, cutoff, make_dyadic_system, smooth_step


@given(st.floats(-2, 3))
def test_smooth_step_range_and_symmetry(u):
    s = float(smooth_step(u))
    assert 0.0 <= s <= 1.0
    assert s + float(smooth_step(1 - u)) == pytest.approx(1.0, abs=1e-15)


def test_cutoff_plateau_and_support():
    x = np.linspace(-2, 2, 801)
    c = cutoff(x)
    assert np.all(c[np.abs(x) <= 0.5] == 1) and np.all(c[np.abs(x) >= 1] == 0)


@given(st.floats(2.0**-6, 2.0**5))
def test_partition_telescopes(E):
    S = make_dyadic_system(-8, 8)
    total = sum(S.phi(j, E) for j in S.js) + S.low_cap(E)
    assert float(total) == pytest.approx(1.0, abs=1e-14)


def test_inhomogeneous_partition():
    S = make_dyadic_system(-3, 6, homogeneous=False)
    assert S.js[0] == 1
    E = np.linspace(-20, 20, 2001)
    assert np.allclose(S.total(E), 1.0, atol=1e-14)


@pytest.mark.parametrize("mother", ["partition", "partition-sq", "bump"])
def test_verify_report(mother):
    S = make_dyadic_system(-4, 4, mother=mother)
    lo, hi = S.report["sum_range"]
    assert 0.5 <= lo <= hi <= 2.0 and S.report["support_leak"] == 0


def test_band_endpoints():
    assert DyadicSystem.band(0) == (0.5, 1.0)
    assert DyadicSystem.band(4) == (2.0, 4.0)


def test_bad_mother_is_rejected():
    bad = DyadicSystem(lambda x: np.where(np.abs(x) < 2, 1.0, 0.0), (0, 2))
    with pytest.raises(DyadicInvariantError):
        bad.verify()
    with pytest.raises(ValueError):
        make_dyadic_system(2, 1)
    with pytest.raises(ValueError):
        make_dyadic_system(0, 2, homogeneous=False, mother="bump")
