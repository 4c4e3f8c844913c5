"""Independent reference computations used to validate the main solvers.

Nothing here shares code with the Volterra or Marchenko machinery: the ODE
oracle integrates the Schrödinger equation directly, the barrier oracle
matches plane waves, and the well oracle solves the transcendental
matching conditions.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.optimize import brentq

from .core import Potential


def _rk4_segment(V, x0, x1, f, df, k2, hmax):
    """Integrate ``f'' = (V - k^2) f`` from x0 to x1 (either direction)."""
    n = max(1, int(math.ceil(abs(x1 - x0) / hmax - 1e-12)))
    h = (x1 - x0) / n
    lo, hi = min(x0, x1), max(x0, x1)
    # clamp stage abscissae so rounding never steps off the segment
    grid = np.clip(x0 + 0.5 * h * np.arange(2 * n + 1), lo, hi)
    vals = np.asarray(V(grid), float)

    def rhs(i2, ff, dd):
        return dd, (vals[i2] - k2) * ff

    for i in range(n):
        x = 2 * i
        a1, b1 = rhs(x, f, df)
        a2, b2 = rhs(x + 1, f + h / 2 * a1, df + h / 2 * b1)
        a3, b3 = rhs(x + 1, f + h / 2 * a2, df + h / 2 * b2)
        a4, b4 = rhs(x + 2, f + h * a3, df + h * b3)
        f = f + h / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
        df = df + h / 6 * (b1 + 2 * b2 + 2 * b3 + b4)
    return f, df


def _piece_eval(V, support, x_targets, k, side, hmax):
    """Shoot the Jost solution of one side to the requested points."""
    a, b = support
    k = np.asarray(k, dtype=complex)
    k2 = k * k
    sgn = 1 if side == "+" else -1
    start = b if side == "+" else a
    f = np.exp(sgn * 1j * k * start)
    df = sgn * 1j * k * f
    order = np.argsort(x_targets)[::-1] if side == "+" else np.argsort(x_targets)
    out_f = np.zeros((len(x_targets), k.size), dtype=complex)
    out_df = np.zeros_like(out_f)
    x = start
    for idx in order:
        xt = x_targets[idx]
        if (side == "+" and xt >= b) or (side == "-" and xt <= a):
            out_f[idx] = np.exp(sgn * 1j * k * xt)
            out_df[idx] = sgn * 1j * k * out_f[idx]
            continue
        inner = min(max(xt, a), b)
        if inner != x:
            f, df = _rk4_segment(V, x, inner, f, df, k2, hmax)
            x = inner
        if xt == inner:
            out_f[idx], out_df[idx] = f, df
        else:
            # free propagation outside the support: f = A e^{ikx} + B e^{-ikx}
            e = np.exp(1j * k * inner)
            A = (f + df / (1j * k)) / (2 * e)
            B = (f - df / (1j * k)) * e / 2
            out_f[idx] = A * np.exp(1j * k * xt) + B * np.exp(-1j * k * xt)
            out_df[idx] = 1j * k * (A * np.exp(1j * k * xt) - B * np.exp(-1j * k * xt))
    return out_f, out_df


def ode_jost(V: Potential, x, k, side: str = "+", hmax: float | None = None, support=None):
    """Jost solution ``f`` and ``f'`` by RK4 shooting; returns ``(m, f, df)``.

    ``support`` defaults to the potential's effective support.  Steps are
    aligned with the support ends so jumps of characteristic potentials sit on
    step boundaries.  Without ``hmax`` the step keeps the accumulated RK4
    phase error ``L k^5 h^4 / 120`` near 1e-8.
    """
    x = np.atleast_1d(np.asarray(x, float))
    k = np.atleast_1d(np.asarray(k, dtype=complex))
    sup = support if support is not None else V.effective_support()
    if hmax is None:
        L = max(sup[1] - sup[0], 1e-3)
        kk = max(1.0, float(np.max(np.abs(k))))
        hmax = min(1e-3, (1.2e-6 / (L * kk**5)) ** 0.25)
    f, df = _piece_eval(V, sup, x, k, side, hmax)
    sgn = 1 if side == "+" else -1
    m = np.exp(-sgn * 1j * np.outer(x, k)) * f
    return m, f, df


def ode_wronskian(V: Potential, k, x0: float = 0.0, hmax: float | None = None):
    k = np.atleast_1d(np.asarray(k, dtype=complex))
    _, fp, dfp = ode_jost(V, [x0], k, "+", hmax)
    _, fm, dfm = ode_jost(V, [x0], k, "-", hmax)
    return (fp * dfm - dfp * fm)[0]


def square_barrier_coefficients(c: float, a: float, b: float, k):
    """Closed-form ``t, r+, r-`` for ``V = c 1_[a,b]`` by plane-wave matching.

    Conventions: ``f+ ~ e^{ikx}`` at +infinity and ``f+ = (e^{ikx} + r- e^{-ikx})/t``
    at -infinity; ``r+`` is the analogous coefficient for ``f-``.
    """
    k = np.atleast_1d(np.asarray(k, dtype=complex))
    q = np.sqrt(k * k - c + 0j)

    def transfer(x, kk):
        # columns map (A, B) of A e^{ikx} + B e^{-ikx} to (f, f')
        e = np.exp(1j * kk * x)
        return np.array([[e, 1 / e], [1j * kk * e, -1j * kk / e]])

    t = np.empty(k.size, dtype=complex)
    rp = np.empty_like(t)
    rm = np.empty_like(t)
    for i, (kk, qq) in enumerate(zip(k, q)):
        # f+: amplitude (1, 0) right of b
        Tb_out, Tb_in = transfer(b, kk), transfer(b, qq)
        Ta_in, Ta_out = transfer(a, qq), transfer(a, kk)
        inner = np.linalg.solve(Tb_in, Tb_out @ np.array([1.0, 0.0]))
        left = np.linalg.solve(Ta_out, Ta_in @ inner)
        t[i] = 1.0 / left[0]
        rm[i] = left[1] / left[0]
        # f-: amplitude (0, 1) left of a
        inner = np.linalg.solve(Ta_in, Ta_out @ np.array([0.0, 1.0]))
        right = np.linalg.solve(Tb_out, Tb_in @ inner)
        rp[i] = right[0] / right[1]
    return t, rp, rm


def finite_well_kappas(V0: float, L: float) -> np.ndarray:
    """Bound-state decay rates of ``-V0 1_[0,L]`` from the even/odd matching equations."""
    half = L / 2
    z0 = half * math.sqrt(V0)
    roots = []
    n_branch = int(math.ceil(z0 / (math.pi / 2)))
    for n in range(n_branch):
        lo = n * math.pi / 2 + 1e-14
        hi = min((n + 1) * math.pi / 2 - 1e-14, z0)
        if hi <= lo:
            continue
        if n % 2 == 0:
            g = lambda z: z * math.sin(z) - math.sqrt(max(z0 * z0 - z * z, 0.0)) * math.cos(z)
        else:
            g = lambda z: -z * math.cos(z) - math.sqrt(max(z0 * z0 - z * z, 0.0)) * math.sin(z)
        if g(lo) * g(hi) < 0:
            z = brentq(g, lo, hi, xtol=1e-15)
            roots.append(math.sqrt(max(z0 * z0 - z * z, 0.0)) / half)
    return np.array(sorted(roots, reverse=True))


def free_kernel(phi, x, y, lam_max: float, ell: int = 0, nodes: int = 4000) -> np.ndarray:
    """``(1/pi) int_0^inf phi(lam^2) cos(lam (x - y)) dlam`` (or its x-derivative) by Gauss-Legendre."""
    gx, gw = np.polynomial.legendre.leggauss(64)
    edges = np.linspace(0.0, lam_max, nodes // 64 + 1)
    lam = (0.5 * (edges[1:, None] - edges[:-1, None]) * gx[None, :] + 0.5 * (edges[1:, None] + edges[:-1, None])).ravel()
    w = (0.5 * (edges[1:, None] - edges[:-1, None]) * gw[None, :]).ravel()
    amp = w * phi(lam**2) / math.pi
    keep = amp != 0
    lam, amp = lam[keep], amp[keep]
    d = np.subtract.outer(np.asarray(x, float), np.asarray(y, float))
    out = np.zeros(d.shape)
    for L, A in zip(np.array_split(lam, max(1, lam.size // 256)), np.array_split(amp, max(1, lam.size // 256))):
        arg = d[..., None] * L
        if ell == 0:
            out += np.cos(arg) @ A
        else:
            out -= np.sin(arg) @ (A * L)
    return out
