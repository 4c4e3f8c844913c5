import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from speclp import make_potential

settings.register_profile("speclp", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("speclp")

BUILTINS = {
    "free": {},
    "square": dict(c=2.0, a=0.0, b=1.0),
    "well": dict(V0=1.0, L=1.0),
    "poschl_teller": dict(nu=1.0),
    "bump": dict(A=1.0, a=-1.0, b=1.0),
    "gauss": dict(A=1.0, sigma=1.0),
}


@pytest.fixture(scope="session")
def builtins():
    return {k: make_potential(k, **v) for k, v in BUILTINS.items()}


@pytest.fixture(scope="session")
def kgrid():
    # geometric up to 20 plus a linear tail for the high-energy fits
    kp = np.union1d(np.geomspace(0.05, 20.0, 120), np.linspace(5.0, 50.0, 91))
    return np.concatenate([-kp[::-1], kp])


@pytest.fixture(scope="session")
def scattered(builtins, kgrid):
    """Scattering pipeline results per built-in potential, computed lazily."""
    from speclp.scattering import scattering_pipeline

    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = scattering_pipeline(builtins[name], kgrid)
        return cache[name]

    return get


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        terminalreporter.write_line(lines[n])
