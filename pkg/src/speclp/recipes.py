"""Canned run configurations, one per reproduced result."""
from __future__ import annotations

from .runner import ConfigError, RunConfig, validate

BUMP = {"kind": "bump", "A": 1.0, "a": -1.0, "b": 1.0}

_RECIPES = {
    "de-phi-dec-a": {
        "run": {"tasks": ["scattering", "kernels", "decay", "weighted"], "jrange": [0, 5]},
        "potential": BUMP,
    },
    "de-phi-dec-b": {
        "run": {"tasks": ["scattering", "kernels", "decay"], "jrange": [-5, -1]},
        "potential": BUMP,
        "kernels": {"ells": [1]},
    },
    "counterexample": {
        "run": {"tasks": ["scattering", "kernels", "decay"], "jrange": [-5, 5]},
        "potential": {"kind": "poschl_teller", "nu": 1.0},
        "expect": {"decay.ell1": "FAIL-LOW-ENERGY", "decay.ell0": "PASS"},
    },
    "homog-B-F": {
        "run": {"tasks": ["scattering", "kernels", "besov"], "jrange": [-2, 2]},
        "potential": BUMP,
        "kernels": {"ells": [0]},
        "besov": {"checks": ["plancherel", "characterization", "systems", "bernstein", "peetre"]},
    },
    "L-P-Lp": {
        "run": {"tasks": ["scattering", "kernels", "besov"], "jrange": [-2, 2]},
        "potential": {"kind": "gauss", "A": 1.0, "sigma": 1.0},
        "kernels": {"ells": [0]},
        "besov": {"checks": ["lp", "sobolev"]},
    },
    "lift": {
        "run": {"tasks": ["scattering", "kernels", "besov"], "jrange": [-2, 2]},
        "potential": BUMP,
        "kernels": {"ells": [0]},
        "besov": {"checks": ["lifting"]},
    },
    "m(H)F": {
        "run": {"tasks": ["scattering", "multiplier", "propagate"]},
        "potential": {"kind": "gauss", "A": 1.0, "sigma": 3.0},
    },
    "etH-phi": {
        "run": {"tasks": ["heat"]},
        "heat": {"operator": "hermite-1", "checks": ["decay"], "ells": [0], "N": [1, 2]},
    },
    "etL-gb": {
        "run": {"tasks": ["heat"]},
        "heat": {"operator": "laguerre-0.5", "checks": ["gaussian", "series"]},
    },
    "B-L1": {
        "run": {"tasks": ["scattering"]},
        "potential": BUMP,
        "scattering": {"marchenko_bounds": True},
    },
    "Lder-j-t": {
        "run": {"tasks": ["scattering"]},
        "potential": BUMP,
        "scattering": {"asymptotics": True},
    },
}

RECIPE_NOTES = {
    "de-phi-dec-a": "dyadic kernel decay at high energy (j >= 0), bump potential",
    "de-phi-dec-b": "gradient kernel decay at low energy (j < 0), bump potential",
    "counterexample": "sech^2 potential: gradient decay breaks down at low energy",
    "homog-B-F": "Besov/Triebel-Lizorkin norms: Plancherel, Peetre characterisation, system independence",
    "L-P-Lp": "Littlewood-Paley square function and Sobolev comparison, Gaussian potential",
    "lift": "lifting property of H^s between Besov spaces",
    "m(H)F": "spectral multipliers, Schrodinger and wave propagators",
    "etH-phi": "Hermite dyadic kernel decay from the eigen-expansion",
    "etL-gb": "Laguerre heat kernel Gaussian bounds and series agreement",
    "B-L1": "weighted L1 bounds of the Marchenko kernel",
    "Lder-j-t": "high-energy asymptotics of t and r",
}


def recipe_names() -> list:
    return list(_RECIPES)


def recipe(tag: str) -> RunConfig:
    """Canonical config for a recipe tag."""
    if tag not in _RECIPES:
        raise ConfigError(f"unknown recipe {tag!r}; available: {', '.join(_RECIPES)}")
    raw = {k: dict(v) for k, v in _RECIPES[tag].items()}
    raw["run"] = {"name": tag, **raw["run"]}
    return validate(raw)
