"""Hermite and Laguerre operators: bases, heat kernels, Gaussian bounds, dyadic decay."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import gammaln, ive

from .config import DEFAULT, Settings
from .core import Grid1D, fd_weights
from .dyadic import DyadicSystem
from .speccalc import DecayReport, SpectralKernel, decay_fit

SMALL_T = (0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 0.9)
LARGE_T = (1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0)


def _check_t(t):
    if np.any(np.asarray(t) <= 0):
        raise ValueError("t must be positive")


def _second_diff(vals: np.ndarray, h: float) -> np.ndarray:
    """Eighth-order central second difference along the last axis (interior points)."""
    offs = np.arange(-4, 5)
    w = fd_weights(2, offs)
    n = vals.shape[-1]
    out = np.full(vals.shape, np.nan)
    acc = sum(c * vals[..., 4 + o: n - 4 + o] for o, c in zip(offs, w))
    out[..., 4:-4] = acc / h**2
    return out


# --------------------------------------------------------------------------
# bases
# --------------------------------------------------------------------------


def hermite_functions(K: int, x) -> np.ndarray:
    """Normalised Hermite functions ``h_0..h_K`` at ``x``; shape ``(K+1,) + x.shape``."""
    x = np.asarray(x, float)
    h = np.empty((K + 1,) + x.shape)
    h[0] = math.pi**-0.25 * np.exp(-0.5 * x * x)
    if K >= 1:
        h[1] = math.sqrt(2.0) * x * h[0]
    for k in range(1, K):
        h[k + 1] = math.sqrt(2.0 / (k + 1)) * x * h[k] - math.sqrt(k / (k + 1)) * h[k - 1]
    return h


@dataclass(eq=False)
class HermiteBasis:
    K: int
    grid: Grid1D
    values: np.ndarray

    @classmethod
    def build(cls, K: int, grid: Optional[Grid1D] = None) -> "HermiteBasis":
        grid = grid or Grid1D.from_spacing(-16.0, 16.0, 0.01)
        return cls(K, grid, hermite_functions(K, grid.points))

    def eigenvalues(self) -> np.ndarray:
        return 2.0 * np.arange(self.K + 1) + 1.0

    def product(self, index: Sequence[int], points: Sequence[np.ndarray]) -> np.ndarray:
        """``Phi_k = h_{k_1} x ... x h_{k_n}`` at the coordinate arrays ``points``."""
        out = 1.0
        for k, xs in zip(index, points):
            out = out * hermite_functions(k, xs)[k]
        return out

    def norm_defect(self) -> float:
        w = self.grid.weights()
        return float(np.max(np.abs(np.sqrt(self.values**2 @ w) - 1.0)))

    def recurrence_residual(self) -> float:
        x, h = self.grid.points, self.values
        k = np.arange(1, self.K)[:, None]
        r = np.sqrt(2.0 / (k + 1)) * x * h[1:-1] - np.sqrt(k / (k + 1)) * h[:-2] - h[2:]
        return float(np.max(np.abs(r))) if r.size else 0.0

    def eigen_residual(self, kmax: Optional[int] = None) -> float:
        kmax = self.K if kmax is None else kmax
        h = self.values[: kmax + 1]
        x = self.grid.points
        lhs = -_second_diff(h, self.grid.spacing) + x**2 * h
        r = lhs - self.eigenvalues()[: kmax + 1, None] * h
        return float(np.nanmax(np.abs(r)))


def laguerre_functions(alpha: float, K: int, x) -> np.ndarray:
    """``M_k^alpha(x) = c_k e^{-x^2/2} x^{alpha+1/2} L_k^alpha(x^2)``, normalised on the half-line."""
    x = np.asarray(x, float)
    u = x * x
    L = np.empty((K + 1,) + x.shape)
    L[0] = 1.0
    if K >= 1:
        L[1] = 1.0 + alpha - u
    for k in range(1, K):
        L[k + 1] = ((2 * k + 1 + alpha - u) * L[k] - (k + alpha) * L[k - 1]) / (k + 1)
    k = np.arange(K + 1)
    logc = 0.5 * (math.log(2.0) + gammaln(k + 1) - gammaln(k + alpha + 1))
    with np.errstate(divide="ignore"):
        base = np.exp(-0.5 * u + (alpha + 0.5) * np.log(np.where(x > 0, x, 1.0)))
    base = np.where(x > 0, base, 0.0)
    return np.exp(logc).reshape((-1,) + (1,) * x.ndim) * L * base


@dataclass(eq=False)
class LaguerreBasis:
    alpha: float
    K: int
    grid: Grid1D
    values: np.ndarray

    @classmethod
    def build(cls, alpha: float, K: int, grid: Optional[Grid1D] = None) -> "LaguerreBasis":
        if alpha < -0.5:
            raise ValueError("alpha must be >= -1/2")
        grid = grid or Grid1D.from_spacing(0.0, 20.0, 0.005)
        return cls(alpha, K, grid, laguerre_functions(alpha, K, grid.points))

    def eigenvalues(self) -> np.ndarray:
        return 4.0 * np.arange(self.K + 1) + 2 * self.alpha + 2

    def norm_defect(self) -> float:
        w = self.grid.weights()
        return float(np.max(np.abs(np.sqrt(self.values**2 @ w) - 1.0)))

    def eigen_residual(self, kmax: Optional[int] = None, x0: float = 0.5) -> float:
        """Residual of ``L_alpha M = (4k + 2 alpha + 2) M`` for ``x >= x0``."""
        kmax = self.K if kmax is None else kmax
        M = self.values[: kmax + 1]
        x = self.grid.points
        with np.errstate(divide="ignore"):
            pot = x**2 + (self.alpha**2 - 0.25) / np.where(x > 0, x * x, np.inf)
        lhs = -_second_diff(M, self.grid.spacing) + pot * M
        r = (lhs - self.eigenvalues()[: kmax + 1, None] * M)[:, x >= x0]
        return float(np.nanmax(np.abs(r)))


# --------------------------------------------------------------------------
# closed-form heat kernels
# --------------------------------------------------------------------------


def mehler_kernel(n: int, t: float, x, y, ell: int = 0) -> np.ndarray:
    """Hermite heat kernel in ``n`` dimensions (``ell = 1``: gradient in ``x``).

    ``x`` and ``y`` carry the coordinate on the last axis when ``n > 1``.
    For ``ell = 1`` and ``n > 1`` the gradient is returned on a new last axis.
    """
    _check_t(t)
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    s2 = math.sinh(2 * t)
    cth = 1.0 / math.tanh(2 * t)
    if n == 1:
        xx, yy, xy = x * x, y * y, x * y
    else:
        xx, yy, xy = np.sum(x * x, -1), np.sum(y * y, -1), np.sum(x * y, -1)
    p = (2 * math.pi * s2) ** (-n / 2) * np.exp(-0.5 * cth * (xx + yy) + xy / s2)
    if ell == 0:
        return p
    g = -cth * x + y / s2
    return p * g if n == 1 else p[..., None] * g


def mehler_series(t: float, x, y, K: int = 60) -> np.ndarray:
    """``sum_{k<=K} e^{-(2k+1)t} h_k(x) h_k(y)``."""
    hx = hermite_functions(K, x)
    hy = hermite_functions(K, y)
    lam = np.exp(-(2 * np.arange(K + 1) + 1) * t).reshape((-1,) + (1,) * np.ndim(x))
    return np.sum(lam * hx * hy, axis=0)


def laguerre_kernel(alpha: float, t: float, x, y, ell: int = 0) -> np.ndarray:
    """Laguerre heat kernel on the half-line via the scaled modified Bessel function."""
    _check_t(t)
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("Laguerre kernel needs x, y > 0")
    s2 = math.sinh(2 * t)
    cth = 1.0 / math.tanh(2 * t)
    z = x * y / s2
    logp = -math.log(s2) - 0.5 * cth * (x * x + y * y) + 0.5 * np.log(x * y) + np.log(ive(alpha, z)) + z
    p = np.exp(logp)
    if ell == 0:
        return p
    # d/dz log I_alpha = (I_{alpha-1} + I_{alpha+1}) / (2 I_alpha)
    dlogI = 0.5 * (ive(alpha - 1, z) + ive(alpha + 1, z)) / ive(alpha, z)
    return p * (-cth * x + 0.5 / x + dlogI * y / s2)


def laguerre_series(alpha: float, t: float, x, y, K: int = 60) -> np.ndarray:
    Mx = laguerre_functions(alpha, K, x)
    My = laguerre_functions(alpha, K, y)
    lam = np.exp(-(4 * np.arange(K + 1) + 2 * alpha + 2) * t).reshape((-1,) + (1,) * np.ndim(x))
    return np.sum(lam * Mx * My, axis=0)


def laguerre_kernel_nD(alphas: Sequence[float], t: float, x, y) -> np.ndarray:
    """Product of one-dimensional Laguerre kernels; coordinates on the last axis."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    out = 1.0
    for i, a in enumerate(alphas):
        out = out * laguerre_kernel(a, t, x[..., i], y[..., i])
    return out


@dataclass(eq=False)
class HeatKernelEval:
    tag: str
    t: float
    x: np.ndarray
    y: np.ndarray
    values: np.ndarray
    dvalues: Optional[np.ndarray] = None

    def symmetry_defect(self) -> float:
        if not np.array_equal(self.x, self.y):
            raise ValueError("symmetry needs equal x and y lattices")
        return float(np.max(np.abs(self.values - self.values.T)))

    def min_value(self) -> float:
        return float(self.values.min())


def _parse_tag(tag: str):
    kind, _, arg = tag.partition("-")
    if kind == "hermite":
        return "hermite", int(arg or 1)
    if kind == "laguerre":
        return "laguerre", float(arg or 0.5)
    raise ValueError(f"unknown operator tag {tag!r}")


def heat_kernel(tag: str, t: float, x, y=None, ell: int = 0) -> np.ndarray:
    """Scalar heat kernel of a one-dimensional operator tag (``hermite-1``, ``laguerre-<alpha>``)."""
    kind, arg = _parse_tag(tag)
    X, Y = np.meshgrid(np.asarray(x, float), np.asarray(x if y is None else y, float), indexing="ij")
    if kind == "hermite":
        if arg != 1:
            raise ValueError("lattice evaluation is one-dimensional; use mehler_kernel for n > 1")
        return mehler_kernel(1, t, X, Y, ell)
    return laguerre_kernel(arg, t, X, Y, ell)


def evaluate_heat(tag: str, t: float, x, y=None) -> HeatKernelEval:
    x = np.asarray(x, float)
    y = x if y is None else np.asarray(y, float)
    return HeatKernelEval(tag, t, x, y, heat_kernel(tag, t, x, y, 0), heat_kernel(tag, t, x, y, 1))


def semigroup_defect(tag: str, t: float, s: float, x, z: Optional[np.ndarray] = None) -> float:
    """``max |int p_t(x,z) p_s(z,y) dz - p_{t+s}(x,y)|`` with trapezoid quadrature in z."""
    kind, _ = _parse_tag(tag)
    if z is None:
        z = np.linspace(-12, 12, 2401) if kind == "hermite" else np.linspace(0.005, 12, 2400)
    w = np.full(z.size, z[1] - z[0])
    A = heat_kernel(tag, t, x, z)
    B = heat_kernel(tag, s, z, x)
    return float(np.max(np.abs((A * w) @ B - heat_kernel(tag, t + s, x, x))))


# --------------------------------------------------------------------------
# Gaussian bounds
# --------------------------------------------------------------------------


def _lattice(kind: str, h: float, n: int = 1):
    if n > 1:
        # the n = 2 lattice is four-dimensional; keep it compact and a bit coarser
        return np.arange(-3.0, 3.0 + h, 2 * h)
    return np.arange(-4.0, 4.0 + h / 2, h) if kind == "hermite" else np.arange(h, 4.0 + h / 2, h)


def _bound(form, t, d2, n, ell, c):
    if form == "small":
        return t ** (-(n + ell) / 2) * np.exp(-c * d2 / t)
    if form == "large-t":
        return math.exp(-n * t) * np.exp(-c * d2 / t)
    return math.exp(-n * t) * np.exp(-c * d2)


def _ratio(p, bound):
    with np.errstate(invalid="ignore", divide="ignore"):
        r = p / bound
    # both sides underflowing to zero carries no information
    return np.where((p == 0) & (bound == 0), 0.0, r)


def _ratio_sup(tag, ell, ts, h, c, form, n):
    kind, _ = _parse_tag(tag)
    x = _lattice(kind, h, n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    d2 = (X - Y) ** 2
    sup = 0.0
    for t in ts:
        if n == 1:
            p = np.abs(heat_kernel(tag, t, x, x, ell))
            sup = max(sup, float(np.max(_ratio(p, _bound(form, t, d2, n, ell, c)))))
            continue
        # product kernel: p(x, y) = P[x1, y1] P[x2, y2]; gradient by the product rule
        P = mehler_kernel(1, t, X, Y, 0)
        D = mehler_kernel(1, t, X, Y, 1) if ell else None
        for i1 in range(x.size):
            d2_4 = d2[i1][:, None, None] + d2[None, :, :]
            if ell == 0:
                p = P[i1][:, None, None] * P[None, :, :]
            else:
                p = np.hypot(D[i1][:, None, None] * P[None, :, :], P[i1][:, None, None] * D[None, :, :])
            sup = max(sup, float(np.max(_ratio(p, _bound(form, t, d2_4, n, ell, c)))))
    return sup


def gaussian_bound_check(tag: str, ell: int = 0, c: float = 0.2, h: float = 0.1,
                         stable_tol: float = 0.25) -> dict:
    """Fit ``c'`` in ``|d^ell p_t| <= c' t^{-(n+ell)/2} e^{-c|x-y|^2/t}`` (small t)
    and in both large-t forms; PASS when ``c'`` is finite and moves by less than
    ``stable_tol`` (relative) when the lattice spacing is halved."""
    kind, arg = _parse_tag(tag)
    if kind == "laguerre" and arg < 0.5:
        raise ValueError("the Gaussian bound is only claimed for alpha >= 1/2")
    n = arg if kind == "hermite" else 1
    if n not in (1, 2):
        raise ValueError("Gaussian-bound lattices are implemented for n = 1 and n = 2")
    out = {"tag": tag, "ell": ell, "c": c, "n": n}
    for regime, ts, forms in (("small_t", SMALL_T, ("small",)), ("large_t", LARGE_T, ("large", "large-t"))):
        res = {}
        for form in forms:
            coarse = _ratio_sup(tag, ell, ts, h, c, form, n)
            fine = _ratio_sup(tag, ell, ts, h / 2, c, form, n)
            ok = math.isfinite(fine) and abs(fine - coarse) <= stable_tol * fine
            name = {"small": "t^-(n+l)/2 e^{-c|x-y|^2/t}", "large": "e^{-nt} e^{-c|x-y|^2}",
                    "large-t": "e^{-nt} e^{-c|x-y|^2/t}"}[form]
            res[name] = {"c_prime": fine, "c_prime_coarse": coarse, "pass": bool(ok)}
        out[regime] = {"forms": res, "pass": any(v["pass"] for v in res.values())}
    out["pass"] = out["small_t"]["pass"] and out["large_t"]["pass"]
    return out


# --------------------------------------------------------------------------
# dyadic kernels from finite eigen-expansions
# --------------------------------------------------------------------------


def _spectrum(tag: str, K: int, x):
    kind, arg = _parse_tag(tag)
    if kind == "hermite":
        return 2.0 * np.arange(K + 1) + 1.0, hermite_functions(K, x)
    return 4.0 * np.arange(K + 1) + 2 * arg + 2, laguerre_functions(arg, K, x)


def dyadic_eigen_kernel(tag: str, system: DyadicSystem, j: int, ell: int = 0, K: int = 200,
                        grid: Optional[Grid1D] = None) -> SpectralKernel:
    """``d_x^ell phi_j(H)(x, y) = sum_k phi_j(lambda_k) d^ell Phi_k(x) Phi_k(y)``."""
    kind, _ = _parse_tag(tag)
    grid = grid or (Grid1D.from_spacing(-10.0, 10.0, 0.05) if kind == "hermite"
                    else Grid1D.from_spacing(0.05, 10.0, 0.05))
    lam, _ = _spectrum(tag, K, np.zeros(1))
    if 2.0**j > lam[-1]:
        raise ValueError(f"truncation K = {K} too small for band j = {j}")
    weights = system.phi(j, lam)
    active = np.nonzero(weights)[0]
    x = grid.points
    if active.size == 0:
        return SpectralKernel(j, ell, grid, grid, np.zeros((x.size, x.size)))
    kmax = int(active.max())
    _, F = _spectrum(tag, kmax, x)
    F = F[active]
    if ell:
        hx = 1e-4
        _, Fp = _spectrum(tag, kmax, x + hx)
        _, Fm = _spectrum(tag, kmax, x - hx)
        Fx = (Fp[active] - Fm[active]) / (2 * hx)
    else:
        Fx = F
    Kmat = (Fx * weights[active, None]).T @ F
    return SpectralKernel(j, ell, grid, grid, Kmat)


def dyadic_kernel_decay(tag: str, system: DyadicSystem, js: Sequence[int], N: Sequence[float] = (2,),
                        ell: int = 0, K: int = 200, settings: Settings = DEFAULT) -> DecayReport:
    kernels = [dyadic_eigen_kernel(tag, system, j, ell, K) for j in js]
    return decay_fit(kernels, N, settings)
