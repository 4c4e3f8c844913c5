"""Spectral-calculus kernels phi(H)(x, y), decay fits, multipliers and propagators.

For real ``lambda`` the integrand of the absolutely continuous part is
conjugate-symmetric under ``lambda -> -lambda``, so everything is computed on
``lambda > 0`` as ``(1/pi) int phi(lambda^2) Re[t f+(x) f-(y)] dlambda``.
The lambda rule is the trapezoid rule, which is spectrally accurate because
``phi(lambda^2)`` vanishes to infinite order at both band ends.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .config import DEFAULT, Settings
from .core import Grid1D, Potential, SampledFunction
from .dyadic import DyadicSystem, make_dyadic_system
from .jost import BandJost, jost_band
from .scattering import ScatteringData, find_bound_states


class NyquistError(ValueError):
    pass


class GridMismatchError(ValueError):
    pass


@dataclass(eq=False)
class SpectralKernel:
    j: object
    ell: int
    xgrid: Grid1D
    ygrid: Grid1D
    K: np.ndarray
    band: Optional[tuple] = None
    lam_points: int = 0

    def symmetry_defect(self) -> float:
        if not self.xgrid.same_as(self.ygrid):
            raise GridMismatchError("symmetry needs a square kernel")
        return float(np.max(np.abs(self.K - self.K.T)))

    def reality_defect(self) -> float:
        return float(np.max(np.abs(np.imag(self.K)))) if np.iscomplexobj(self.K) else 0.0

    def to_csv(self) -> str:
        x, y = self.xgrid.points, self.ygrid.points
        lines = ["x," + ",".join(repr(float(v)) for v in y)]
        for xi, row in zip(x, np.real(self.K)):
            lines.append(repr(float(xi)) + "," + ",".join(repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# lambda quadrature
# --------------------------------------------------------------------------


def infer_band(phi: Callable, settings: Settings = DEFAULT, samples: int = 200001) -> Optional[tuple]:
    """Smallest ``[lo, hi]`` in ``lambda > 0`` outside which ``phi(lambda^2)`` vanishes."""
    lam = np.linspace(0.0, settings.k_max, samples)
    v = np.asarray(phi(lam**2))
    nz = np.nonzero(v)[0]
    if nz.size == 0:
        return None
    d = lam[1] - lam[0]
    return max(0.0, lam[nz[0]] - d), min(settings.k_max, lam[nz[-1]] + d)


def lambda_grid(band: tuple, diam: float, settings: Settings = DEFAULT, points: Optional[int] = None):
    """Trapezoid nodes and weights on ``band`` obeying ``dlambda * diam <= pi/4``."""
    lo, hi = band
    need = int(math.ceil((hi - lo) * diam / (math.pi / 4))) + 1
    n = max(settings.lambda_points, need)
    if points is not None:
        if points < need:
            raise NyquistError(
                f"{points} lambda points violate the oscillation bound; use at least {need}")
        n = points
    if lo == 0.0:
        # midpoint nodes: the integrand extends evenly to lambda < 0, and t is
        # never evaluated at the threshold
        d = hi / n
        return (np.arange(n) + 0.5) * d, np.full(n, d)
    lam = np.linspace(lo, hi, n)
    w = np.full(n, (hi - lo) / (n - 1))
    w[[0, -1]] *= 0.5
    return lam, w


def _diam(xg: np.ndarray, yg: np.ndarray) -> float:
    return float(max(abs(xg.max() - yg.min()), abs(yg.max() - xg.min())))


@dataclass(eq=False)
class BandData:
    """Generalised eigenfunctions on one lambda band."""

    lam: np.ndarray
    w: np.ndarray
    t: np.ndarray
    Fp: np.ndarray  # t f+(x, lambda)
    dFp: np.ndarray
    Fm: np.ndarray  # f-(y, lambda)
    fp: np.ndarray
    dfm_conj: np.ndarray = None
    x: np.ndarray = None


def band_data(V: Potential, x: np.ndarray, lam: np.ndarray, w: np.ndarray, settings: Settings = DEFAULT,
              J: Optional[BandJost] = None) -> BandData:
    J = J if J is not None else jost_band(V, x, lam, settings)
    if J.m_plus.shape != (x.size, lam.size):
        raise GridMismatchError("Jost data does not match the requested points and lambda grid")
    ph = np.exp(1j * np.outer(x, lam))
    fp = ph * J.m_plus
    dfp = ph * (1j * lam[None, :] * J.m_plus + J.dm_plus)
    fm = J.m_minus / ph
    t = J.t
    return BandData(lam, w, t, t[None, :] * fp, t[None, :] * dfp, fm, fp, x=x)


def _bound_values(V, S, x, settings):
    states = S.bound_states if S is not None else []
    return [(b.energy,) + b.evaluate(V, x, settings) for b in states]


def assemble_kernel(V: Potential, S: Optional[ScatteringData], J: Optional[BandJost], phi: Callable,
                    ell: int = 0, *, xgrid: Optional[Grid1D] = None, ygrid: Optional[Grid1D] = None,
                    band: Optional[tuple] = None, lam_points: Optional[int] = None,
                    settings: Settings = DEFAULT, label: object = "custom") -> SpectralKernel:
    """Kernel of ``d_x^ell phi(H)`` on ``xgrid x ygrid``.

    ``S`` supplies bound states (``None`` means none).  ``J``, when given, is
    band Jost data on the concatenated points ``[x; y]`` and the lambda grid
    that :func:`lambda_grid` produces for ``band``.
    """
    if ell not in (0, 1):
        raise ValueError("ell must be 0 or 1")
    xgrid = xgrid or Grid1D.from_spacing(*settings.kernel_window, settings.kernel_dx)
    ygrid = ygrid or xgrid
    x, y = xgrid.points, ygrid.points
    band = band if band is not None else infer_band(phi, settings)
    K = np.zeros((x.size, y.size))
    npts = 0
    if band is not None:
        lam, w = lambda_grid(band, _diam(x, y), settings, lam_points)
        npts = lam.size
        D = band_data(V, np.concatenate([x, y]), lam, w, settings, J)
        coef = w * np.asarray(phi(lam**2), float) / math.pi
        A = (D.dFp if ell else D.Fp)[: x.size] * coef[None, :]
        K = np.real(A @ D.Fm[x.size:].T)
    for energy, e, de in _bound_values(V, S, np.concatenate([x, y]), settings):
        c = float(phi(np.array([energy]))[0])
        if c != 0.0:
            K = K + c * np.outer((de if ell else e)[: x.size], e[x.size:])
    return SpectralKernel(label, ell, xgrid, ygrid, K, band, npts)


def dyadic_kernels(V: Potential, S: Optional[ScatteringData], system: DyadicSystem, js: Sequence[int],
                   ells: Sequence[int] = (0,), *, xgrid: Optional[Grid1D] = None, ygrid: Optional[Grid1D] = None,
                   settings: Settings = DEFAULT) -> dict:
    """``{(j, ell): SpectralKernel}`` sharing one Jost evaluation per band."""
    xgrid = xgrid or Grid1D.from_spacing(*settings.decay_rows, settings.kernel_dx)
    ygrid = ygrid or Grid1D.from_spacing(*settings.decay_cols, settings.kernel_dx)
    x, y = xgrid.points, ygrid.points
    pts = np.concatenate([x, y])
    bound = _bound_values(V, S, pts, settings)
    out = {}
    for j in js:
        band = system.band(j)
        lam, w = lambda_grid(band, _diam(x, y), settings)
        D = band_data(V, pts, lam, w, settings)
        coef = w * np.asarray(system.phi(j, lam**2)) / math.pi
        Fm = D.Fm[x.size:].T
        for ell in ells:
            K = np.real(((D.dFp if ell else D.Fp)[: x.size] * coef[None, :]) @ Fm)
            for energy, e, de in bound:
                c = float(system.phi(j, np.array([energy]))[0])
                if c:
                    K = K + c * np.outer((de if ell else e)[: x.size], e[x.size:])
            out[(j, ell)] = SpectralKernel(j, ell, xgrid, ygrid, K, band, lam.size)
    return out


def kernel_oracle(V: Potential, S: Optional[ScatteringData], J: Optional[BandJost], phi: Callable, *,
                  xgrid: Optional[Grid1D] = None, ygrid: Optional[Grid1D] = None, band: Optional[tuple] = None,
                  lam_points: Optional[int] = None, settings: Settings = DEFAULT,
                  label: object = "custom") -> SpectralKernel:
    """Same kernel from the scattering eigenfunctions ``e(x, lambda)``.

    ``e = t f+`` for ``lambda > 0`` and ``e = t f-`` (at ``-lambda``) for
    ``lambda < 0``; the kernel is ``(2 pi)^-1 int phi e(x) conj e(y)``.
    Without ``J`` the Jost solutions come from direct ODE shooting, so the
    result shares no solver code with :func:`assemble_kernel`.
    """
    xgrid = xgrid or Grid1D.from_spacing(*settings.kernel_window, settings.kernel_dx)
    ygrid = ygrid or xgrid
    x, y = xgrid.points, ygrid.points
    band = band if band is not None else infer_band(phi, settings)
    K = np.zeros((x.size, y.size), dtype=complex)
    npts = 0
    if band is not None:
        lam, w = lambda_grid(band, _diam(x, y), settings, lam_points)
        npts = lam.size
        pts = np.concatenate([x, y])
        if J is not None or V.is_free:
            D = band_data(V, pts, lam, w, settings, J)
            fp, fm, t = D.fp, D.Fm, D.t
        else:
            fp, fm, t = _ode_eigenfunctions(V, pts, lam, settings)
        coef = w * np.asarray(phi(lam**2), float) * np.abs(t) ** 2 / (2 * math.pi)
        K = (fp[: x.size] * coef) @ fp[x.size:].conj().T + (fm[: x.size] * coef) @ fm[x.size:].conj().T
    for energy, e, _ in _bound_values(V, S, np.concatenate([x, y]), settings):
        c = float(phi(np.array([energy]))[0])
        if c != 0.0:
            K = K + c * np.outer(e[: x.size], e[x.size:])
    return SpectralKernel(label, 0, xgrid, ygrid, K, band, npts)


def _ode_eigenfunctions(V: Potential, x: np.ndarray, lam: np.ndarray, settings: Settings):
    from .oracles import ode_jost

    sup = V.effective_support(settings)
    # include x = 0 for the Wronskian
    pts = np.concatenate([x, [0.0]])
    _, fp, dfp = ode_jost(V, pts, lam, "+", support=sup)
    _, fm, dfm = ode_jost(V, pts, lam, "-", support=sup)
    W = fp[-1] * dfm[-1] - dfp[-1] * fm[-1]
    return fp[:-1], fm[:-1], -2j * lam / W


def apply_operator(K: SpectralKernel, f: SampledFunction) -> SampledFunction:
    """``int K(x, y) f(y) dy`` by the trapezoid rule in y."""
    if not f.grid.same_as(K.ygrid):
        raise GridMismatchError("function grid differs from the kernel's y-grid")
    w = np.full(K.ygrid.size, K.ygrid.spacing)
    w[[0, -1]] *= 0.5
    return SampledFunction(K.xgrid, K.K @ (w * f.values))


# --------------------------------------------------------------------------
# decay fits
# --------------------------------------------------------------------------


@dataclass
class DecayReport:
    entries: list = field(default_factory=list)  # dicts with j, ell, N, cN
    ratios: dict = field(default_factory=dict)  # (ell, N) -> max/min over j
    verdicts: dict = field(default_factory=dict)
    growth: dict = field(default_factory=dict)  # (ell, N) -> c_N(jmin<0) / c_N(-1)

    def constants(self, ell: int, N: float) -> dict:
        return {e["j"]: e["cN"] for e in self.entries if e["ell"] == ell and e["N"] == N}

    def to_json(self) -> str:
        rows = []
        for e in self.entries:
            key = (e["ell"], e["N"])
            rows.append({"j": e["j"], "ell": e["ell"], "N": e["N"], "cN": e["cN"],
                         "stability_ratio": self.ratios[key], "verdict": self.verdicts[key]})
        return json.dumps(rows, sort_keys=True, indent=1)


def fitted_constant(K: SpectralKernel, N: float) -> float:
    d = np.abs(np.subtract.outer(K.xgrid.points, K.ygrid.points))
    s = 2.0 ** (K.j / 2)
    return float(np.max(np.abs(K.K) * (1 + s * d) ** N) / 2.0 ** ((K.ell + 1) * K.j / 2))


def classify(c: dict, settings: Settings = DEFAULT) -> tuple[str, float, float]:
    """Verdict, stability ratio and low-energy growth for ``{j: c_N}``."""
    vals = np.array(list(c.values()))
    ratio = float(vals.max() / vals.min()) if vals.min() > 0 else math.inf
    neg = sorted((j for j in c if j < 0), reverse=True)
    growth = float(c[neg[-1]] / c[neg[0]]) if len(neg) >= 2 else 1.0
    if ratio <= settings.pass_ratio:
        return "PASS", ratio, growth
    seq = [c[j] for j in neg]
    monotone = all(b >= a for a, b in zip(seq, seq[1:]))
    if len(neg) >= 2 and monotone and growth >= settings.fail_growth:
        return "FAIL-LOW-ENERGY", ratio, growth
    return "FAIL-UNSTABLE", ratio, growth


def decay_fit(kernels: Sequence[SpectralKernel], N: Sequence[float] = (0, 1, 2, 4),
              settings: Settings = DEFAULT) -> DecayReport:
    """Fit ``c_N = sup |K| (1 + 2^{j/2}|x-y|)^N / 2^{(ell+1)j/2}`` per kernel and classify."""
    rep = DecayReport()
    for K in kernels:
        for n in N:
            rep.entries.append({"j": int(K.j), "ell": K.ell, "N": n, "cN": fitted_constant(K, n)})
    for ell in sorted({K.ell for K in kernels}):
        for n in N:
            verdict, ratio, growth = classify(rep.constants(ell, n), settings)
            rep.ratios[(ell, n)] = ratio
            rep.verdicts[(ell, n)] = verdict
            rep.growth[(ell, n)] = growth
    return rep


def weighted_l2_check(kernels: Sequence[SpectralKernel], s: float = 1.0, settings: Settings = DEFAULT) -> dict:
    """``sup ||x-y|^s K_j||_2 / 2^{(1/2-s)j/2}`` per j, plus the log-log slope.

    The kernels are symmetric, so the L2 norm runs along the (long) y-axis and
    the supremum over the x-rows.
    """
    if s <= 0.5:
        raise ValueError("need s > 1/2")
    raw, scaled = {}, {}
    for K in kernels:
        if K.ell != 0:
            raise ValueError("weighted L2 check needs ell = 0 kernels")
        d = np.abs(np.subtract.outer(K.xgrid.points, K.ygrid.points))
        nrm = np.sqrt(np.sum((d**s * np.abs(K.K)) ** 2, axis=1) * K.ygrid.spacing)
        raw[int(K.j)] = float(nrm.max())
        scaled[int(K.j)] = raw[int(K.j)] / 2.0 ** ((0.5 - s) * K.j / 2)
    js = np.array(sorted(raw))
    slope = float(np.polyfit(js, np.log2([raw[j] for j in js]), 1)[0])
    vals = np.array(list(scaled.values()))
    ratio = float(vals.max() / vals.min())
    return {"s": s, "raw": raw, "scaled": scaled, "ratio": ratio, "slope": slope,
            "expected_slope": (0.5 - s) / 2, "pass": bool(ratio <= settings.pass_ratio)}


def weighted_pointwise_check(kernels: Sequence[SpectralKernel], eps: float = 0.5,
                             settings: Settings = DEFAULT) -> dict:
    """``|K_j| <= c 2^{j/2} (1 + 2^{j/2}|x-y|)^{-1-eps}`` with the Dirac measure."""
    if eps <= 0:
        raise ValueError("need eps > 0")
    c = {}
    for K in kernels:
        if K.ell != 0:
            raise ValueError("pointwise check needs ell = 0 kernels")
        c[int(K.j)] = fitted_constant(K, 1 + eps)
    verdict, ratio, _ = classify(c, settings)
    return {"eps": eps, "c": c, "ratio": ratio, "verdict": verdict, "pass": verdict == "PASS"}


# --------------------------------------------------------------------------
# machinery: cached band data on one spatial grid
# --------------------------------------------------------------------------


class Machinery:
    """Spectral data of ``H = -d^2/dx^2 + V`` on a fixed grid and dyadic system."""

    def __init__(self, V: Potential, settings: Settings = DEFAULT, grid: Optional[Grid1D] = None,
                 system: Optional[DyadicSystem] = None, bound_states: Optional[list] = None):
        self.V = V
        self.settings = settings
        self.grid = grid or Grid1D.from_spacing(*settings.kernel_window, settings.kernel_dx)
        self.system = system or make_dyadic_system(*settings.jrange)
        if bound_states is None:
            bound_states = find_bound_states(V, None, settings)
        self.bound_states = bound_states
        x = self.grid.points
        self._bound = [(b.energy,) + b.evaluate(V, x, settings) for b in bound_states]
        self._bands: dict = {}
        w = np.full(x.size, self.grid.spacing)
        w[[0, -1]] *= 0.5
        self.weights = w

    @property
    def js(self) -> list:
        return self.system.js

    def _phi(self, j, E):
        return self.system.low_cap(E) if j == "cap" else self.system.phi(j, E)

    def band(self, j) -> BandData:
        """Band data for dyadic index ``j`` or ``"cap"`` (energies below the lowest band)."""
        if j not in self._bands:
            x = self.grid.points
            b = self.system.cap_band() if j == "cap" else self.system.band(j)
            lam, w = lambda_grid(b, _diam(x, x), self.settings)
            self._bands[j] = band_data(self.V, x, lam, w, self.settings)
        return self._bands[j]

    def inner(self, f, g) -> complex:
        return complex(np.sum(self.weights * np.conj(f) * g))

    def _check(self, f) -> np.ndarray:
        if isinstance(f, SampledFunction):
            if not f.grid.same_as(self.grid):
                raise GridMismatchError("function grid differs from the machinery grid")
            return np.asarray(f.values)
        f = np.asarray(f)
        if f.shape != (self.grid.size,):
            raise GridMismatchError("sample vector has the wrong length")
        return f

    def with_system(self, system: DyadicSystem) -> "Machinery":
        """Same operator and grid with another dyadic system; band data are shared."""
        other = object.__new__(Machinery)
        other.__dict__.update(self.__dict__)
        other.system = system
        return other

    def apply_ac(self, j, weight: Callable, f, ell: int = 0) -> np.ndarray:
        """a.c. part of ``d^ell (weight * phi_j)(H) f`` with ``weight`` a function of energy."""
        f = self._check(f)
        D = self.band(j)
        E = D.lam**2
        coef = D.w * np.asarray(self._phi(j, E)) * np.asarray(weight(E)) / math.pi
        F = D.dFp if ell else D.Fp
        hf = self.weights * f
        gr = D.Fm.T @ np.real(hf)
        out = np.real(F * gr[None, :]) @ coef
        if np.iscomplexobj(f) and np.any(np.imag(f)):
            gi = D.Fm.T @ np.imag(hf)
            out = out + 1j * (np.real(F * gi[None, :]) @ coef)
        return out

    def apply_pp(self, weight: Callable, f, ell: int = 0) -> np.ndarray:
        f = self._check(f)
        out = np.zeros(self.grid.size, dtype=complex)
        for energy, e, de in self._bound:
            c = complex(np.asarray(weight(np.array([energy])))[0])
            if c != 0:
                out += c * self.inner(e, f) * (de if ell else e)
        return out if np.any(np.imag(out)) else out.real

    def band_function(self, j, f, ell: int = 0) -> np.ndarray:
        """``d^ell phi_j(H) f`` including the bound-state part ``phi_j(-kappa^2)``."""
        one = lambda E: np.ones_like(E)
        return self.apply_ac(j, one, f, ell) + self.apply_pp(lambda E: self._phi(j, E), f, ell)

    def kernel(self, j: int, ell: int = 0) -> SpectralKernel:
        D = self.band(j)
        coef = D.w * np.asarray(self.system.phi(j, D.lam**2)) / math.pi
        A = (D.dFp if ell else D.Fp) * coef[None, :]
        K = np.real(A @ D.Fm.T)
        for energy, e, de in self._bound:
            c = float(self.system.phi(j, np.array([energy]))[0])
            if c:
                K = K + c * np.outer(de if ell else e, e)
        return SpectralKernel(j, ell, self.grid, self.grid, K, self.system.band(j), D.lam.size)

    def negative_mass(self, f) -> float:
        f = self._check(f)
        return float(sum(abs(self.inner(e, f)) ** 2 for _, e, _ in self._bound))


def make_machinery(V: Potential, settings: Settings = DEFAULT, **kw) -> Machinery:
    return Machinery(V, settings, **kw)


# --------------------------------------------------------------------------
# multipliers
# --------------------------------------------------------------------------


def mihlin_report(mu: Callable, system: DyadicSystem, samples: int = 2001) -> dict:
    """``max_t ||mu(t .) eta||_{C^1}`` over ``t = 2^j`` with ``eta`` the dyadic mother."""
    xs = np.linspace(0.25, 1.0, samples)
    eta = system.mother(xs)
    norms = {}
    for j in range(system.jrange[0], system.jrange[1] + 1):
        g = np.asarray(mu(2.0**j * xs)) * eta
        dg = np.gradient(g, xs)
        norms[j] = float(np.max(np.abs(g)) + np.max(np.abs(dg)))
    return {"norms": norms, "sup": max(norms.values())}


def spectral_multiplier(mu: Callable, system: Optional[DyadicSystem], machinery: Machinery, f,
                        low_cap: bool = True):
    """``mu(H) f`` as a sum of band pieces plus the bound-state term; returns ``(g, report)``.

    With ``low_cap`` the energies below the lowest dyadic band are included
    through the closed-form cap, so the partition is exact from 0 up to the
    top band; without it the homogeneous sum leaks the low-energy mass.
    """
    system = system or machinery.system
    if system is not machinery.system:
        raise ValueError("the machinery caches bands for its own dyadic system")
    lo, hi = system.covered_energies()
    probe = np.concatenate([np.geomspace(max(lo, 1e-12), hi, 2001), [b.energy for b in machinery.bound_states]])
    vals = np.asarray(mu(probe))
    if not np.all(np.isfinite(vals)):
        raise ValueError("multiplier is not finite on the covered spectrum")
    fv = machinery._check(f)
    out = machinery.apply_pp(mu, fv)
    bands = list(system.js)
    if low_cap and system.homogeneous and system.low_cap(np.zeros(1)) is not None:
        bands.append("cap")
    for j in bands:
        out = out + machinery.apply_ac(j, mu, fv)
    rep = mihlin_report(mu, system)
    return SampledFunction(machinery.grid, out), rep


def _sinc_weight(t: float) -> Callable:
    def w(E):
        r = np.sqrt(np.maximum(E, 0.0))
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(r > 0, np.sin(t * r) / np.where(r > 0, r, 1.0), t)
    return w


def wave_propagate(u0, u1, t: float, machinery: Machinery, velocity: bool = False):
    """``cos(t sqrt H) u0 + sin(t sqrt H)/sqrt H u1`` (and ``d_t u`` if ``velocity``)."""
    if not math.isfinite(t):
        raise ValueError("t must be finite")
    for u in (u0, u1):
        if machinery.negative_mass(u) > 1e-8:
            raise ValueError("data carry negative spectral mass; the positive-branch formula does not apply")
    cos_w = lambda E: np.cos(t * np.sqrt(np.maximum(E, 0.0)))
    u, _ = spectral_multiplier(cos_w, None, machinery, u0)
    v, _ = spectral_multiplier(_sinc_weight(t), None, machinery, u1)
    out = SampledFunction(machinery.grid, u.values + v.values)
    if not velocity:
        return out
    msin = lambda E: -np.sqrt(np.maximum(E, 0.0)) * np.sin(t * np.sqrt(np.maximum(E, 0.0)))
    a, _ = spectral_multiplier(msin, None, machinery, u0)
    b, _ = spectral_multiplier(cos_w, None, machinery, u1)
    return out, SampledFunction(machinery.grid, a.values + b.values)


def wave_energy(u, ut, machinery: Machinery) -> float:
    """``||sqrt(H) u||^2 + ||u_t||^2`` through the spectral calculus."""
    root, _ = spectral_multiplier(lambda E: np.sqrt(np.maximum(E, 0.0)), None, machinery, u)
    w = machinery.weights
    uv = ut.values if isinstance(ut, SampledFunction) else ut
    return float(np.sum(w * np.abs(root.values) ** 2) + np.sum(w * np.abs(uv) ** 2))
