"""Hermite and Laguerre heat kernels: closed forms, eigen-expansions and Gaussian bounds.

Run: python3 demos/heat_kernels.py
"""
import numpy as np

from speclp.hermlag import gaussian_bound_check, laguerre_kernel, mehler_kernel, mehler_series


def main():
    x = np.linspace(-4, 4, 81)
    X, Y = np.meshgrid(x, x, indexing="ij")
    print("Mehler closed form vs truncated expansion")
    for K in (60, 100, 200):
        errs = [np.max(np.abs(mehler_kernel(1, t, X, Y) - mehler_series(t, X, Y, K))) for t in (0.1, 1.0)]
        print(f"  K={K:3d}: t=0.1 {errs[0]:.1e}   t=1 {errs[1]:.1e}")

    # alpha = 1/2 Laguerre is the odd part of the Hermite kernel on the half-line
    z = np.linspace(0.05, 4, 80)
    Z, W = np.meshgrid(z, z, indexing="ij")
    d = np.max(np.abs(laguerre_kernel(0.5, 0.7, Z, W) - (mehler_kernel(1, 0.7, Z, W) - mehler_kernel(1, 0.7, Z, -W))))
    print(f"\nLaguerre(1/2) vs odd-reflected Mehler at t=0.7: {d:.1e}")

    print("\nGaussian-bound constants c' (c = 1/5)")
    for tag in ("hermite-1", "laguerre-0.5", "laguerre-2.5"):
        for ell in (0, 1):
            r = gaussian_bound_check(tag, ell)
            small = next(iter(r["small_t"]["forms"].values()))["c_prime"]
            large = {k: round(v["c_prime"], 3) for k, v in r["large_t"]["forms"].items()}
            print(f"  {tag:13s} ell={ell}: small t {small:.3f}  large t {large}  {'PASS' if r['pass'] else 'FAIL'}")


if __name__ == "__main__":
    main()
