"""Scattering data for the built-in potentials: nu, resonance, bound states, unitarity.

Run: python3 demos/scattering_tour.py
"""
import warnings

import numpy as np

from speclp import make_potential
from speclp.oracles import square_barrier_coefficients
from speclp.scattering import scattering_pipeline

CASES = [
    ("square", dict(c=2.0, a=0.0, b=1.0)),
    ("well", dict(V0=1.0, L=1.0)),
    ("well", dict(V0=np.pi**2, L=1.0)),  # zero-energy resonance
    ("poschl_teller", dict(nu=1.0)),  # reflectionless and resonant
    ("poschl_teller", dict(nu=1.5)),
    ("bump", {}),
    ("gauss", {}),
]


def main():
    kp = np.geomspace(0.05, 20.0, 80)
    k = np.concatenate([-kp[::-1], kp])
    print(f"{'potential':32s} {'|nu|':>10s} {'resonant':>9s} {'unitarity':>10s}  kappas")
    for kind, params in CASES:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            _, _, S = scattering_pipeline(make_potential(kind, **params), k)
        label = kind + "(" + ", ".join(f"{a}={v:g}" for a, v in params.items()) + ")"
        kap = ", ".join(f"{b.kappa:.6f}" for b in S.bound_states) or "-"
        print(f"{label:32s} {abs(S.nu):10.3e} {str(S.resonant):>9s} {S.unitarity_defect():10.1e}  {kap}")

    _, _, S = scattering_pipeline(make_potential("square", c=2.0, a=0.0, b=1.0), k, bound_states=False)
    t, _, _ = square_barrier_coefficients(2.0, 0.0, 1.0, k)
    print(f"\nsquare barrier, solver vs plane-wave matching: max |dt| = {np.max(np.abs(S.t - t)):.1e}")


if __name__ == "__main__":
    main()
