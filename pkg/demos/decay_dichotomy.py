"""Fitted kernel-decay constants c_N(j) for a compact bump and for the sech^2 well.

For the bump the constants are flat in j. For sech^2 (a zero-energy
resonance) the gradient constants drift upward as j decreases; the drift is
modest over j in [-5, 5].

Run: python3 demos/decay_dichotomy.py
"""
import numpy as np

from speclp import Grid1D, make_potential
from speclp.dyadic import make_dyadic_system
from speclp.scattering import find_bound_states, ScatteringData
from speclp.speccalc import decay_fit, dyadic_kernels


def constants(kind, params, js):
    V = make_potential(kind, **params)
    S = ScatteringData(np.zeros(0), *(np.zeros(0),) * 4, 0j, bound_states=find_bound_states(V))
    system = make_dyadic_system(min(js), max(js))
    ks = dyadic_kernels(V, S, system, js, (0, 1), xgrid=Grid1D.from_spacing(-10, 10, 0.1),
                        ygrid=Grid1D.from_spacing(-200, 200, 0.1))
    return decay_fit(list(ks.values()), (2,))


def main():
    js = list(range(-5, 6))
    for kind, params in (("bump", {}), ("poschl_teller", dict(nu=1.0))):
        rep = constants(kind, params, js)
        print(f"\n{kind}")
        for ell in (0, 1):
            c = rep.constants(ell, 2)
            row = " ".join(f"{c[j]:7.3f}" for j in js)
            print(f"  ell={ell} N=2: {row}")
            print(f"         verdict {rep.verdicts[(ell, 2)]}, ratio {rep.ratios[(ell, 2)]:.2f}, "
                  f"c(-5)/c(-1) = {rep.growth[(ell, 2)]:.2f}")


if __name__ == "__main__":
    main()
