"""Besov and Triebel-Lizorkin norms attached to H, maximal functions and equivalence checks."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import Grid1D, SampledFunction
from .dyadic import DyadicSystem, make_dyadic_system
from .speccalc import Machinery, spectral_multiplier

TAIL_REPORT = 0.01
TAIL_FLAG = 0.10

# declared bracket constants per check
C_PLANCHEREL = 3.0
C_CHARACTERIZATION = 20.0
C_LIFTING = 10.0
C_SOBOLEV = 10.0
C_SYSTEMS = 10.0
C_LP = 10.0
STABLE_RATIO = 10.0


@dataclass(frozen=True)
class BesovParams:
    alpha: float = 0.0
    p: float = 2.0
    q: float = 2.0
    s: float = 1.0

    def __post_init__(self):
        if not (self.p > 0 and self.q > 0):
            raise ValueError("p and q must be positive")
        if self.s <= 0:
            raise ValueError("the Peetre exponent s must be positive")


@dataclass
class NormReport:
    kind: str
    params: BesovParams
    band_norms: dict
    norm: float
    tail: float
    tail_flag: bool = False
    ratios: dict = field(default_factory=dict)

    def to_json(self) -> str:
        d = {"kind": self.kind, "params": self.params.__dict__,
             "band_norms": {str(k): v for k, v in self.band_norms.items()},
             "norm": self.norm, "tail": self.tail, "tail_flag": self.tail_flag, "ratios": self.ratios}
        return json.dumps(d, sort_keys=True)


def lq(values, q: float) -> float:
    v = np.abs(np.asarray(values, float))
    if v.size == 0:
        return 0.0
    if math.isinf(q):
        return float(v.max())
    return float(np.sum(v**q) ** (1.0 / q))


def lp(machinery: Machinery, g, p: float) -> float:
    a = np.abs(np.asarray(g))
    if math.isinf(p):
        return float(a.max())
    return float(np.sum(machinery.weights * a**p) ** (1.0 / p))


def _values(f) -> np.ndarray:
    return np.asarray(f.values if isinstance(f, SampledFunction) else f)


def _real_if_possible(v):
    v = np.asarray(v)
    return v.real if np.iscomplexobj(v) and not np.any(v.imag) else v


def band_functions(f, machinery: Machinery, ell: int = 0) -> dict:
    fv = _real_if_possible(_values(f))
    return {j: machinery.band_function(j, fv, ell) for j in machinery.js}


def _tail(terms: dict, q: float, js: list) -> float:
    """Share of the two edge bands in the assembled sum."""
    if not terms:
        return 0.0
    edges = {js[0], js[-1]}
    total = lq(list(terms.values()), q)
    if total == 0:
        return 0.0
    if math.isinf(q):
        return max(terms[j] for j in edges) / total
    return float(sum(terms[j] ** q for j in edges) / total**q)


def _flag(tail: float, what: str) -> bool:
    if tail > TAIL_FLAG:
        warnings.warn(f"{what}: edge bands carry {tail:.1%} of the norm; extend jrange", RuntimeWarning,
                      stacklevel=3)
        return True
    return False


def besov_norm(f, machinery: Machinery, P: BesovParams, bands: Optional[dict] = None) -> NormReport:
    """``(sum_j 2^{j alpha q} ||phi_j(H) f||_p^q)^{1/q}`` over the machinery's jrange."""
    bands = bands if bands is not None else band_functions(f, machinery)
    js = sorted(bands)
    terms = {j: 2.0 ** (j * P.alpha) * lp(machinery, bands[j], P.p) for j in js}
    tail = _tail(terms, P.q, js)
    return NormReport("B", P, terms, lq([terms[j] for j in js], P.q), tail, _flag(tail, "Besov norm"))


def triebel_norm(f, machinery: Machinery, P: BesovParams, bands: Optional[dict] = None) -> NormReport:
    """``|| (sum_j |2^{j alpha} phi_j(H) f|^q)^{1/q} ||_p``."""
    if math.isinf(P.p):
        raise ValueError("Triebel-Lizorkin norms need p < infinity")
    bands = bands if bands is not None else band_functions(f, machinery)
    js = sorted(bands)
    stack = np.array([2.0 ** (j * P.alpha) * np.abs(bands[j]) for j in js])
    inner = stack.max(axis=0) if math.isinf(P.q) else np.sum(stack**P.q, axis=0) ** (1.0 / P.q)
    terms = {j: lp(machinery, stack[i], P.p) for i, j in enumerate(js)}
    # tail measured on the pointwise sum with the edge bands removed
    keep = [i for i, j in enumerate(js) if j not in (js[0], js[-1])]
    core = stack[keep]
    if keep:
        core_inner = core.max(axis=0) if math.isinf(P.q) else np.sum(core**P.q, axis=0) ** (1.0 / P.q)
    else:
        core_inner = np.zeros_like(inner)
    total = lp(machinery, inner, P.p)
    tail = 0.0 if total == 0 else max(0.0, 1.0 - lp(machinery, core_inner, P.p) / total)
    return NormReport("F", P, terms, total, tail, _flag(tail, "Triebel-Lizorkin norm"))


# --------------------------------------------------------------------------
# maximal functions
# --------------------------------------------------------------------------


def _pairwise_sup(values: np.ndarray, x: np.ndarray, scale: float, s: float) -> np.ndarray:
    out = np.empty(x.size)
    a = np.abs(values)
    for start in range(0, x.size, 512):
        xs = x[start:start + 512]
        w = (1.0 + scale * np.abs(xs[:, None] - x[None, :])) ** s
        out[start:start + 512] = np.max(a[None, :] / w, axis=1)
    return out


def peetre_maximal(f, machinery: Machinery, j: int, s: float, band: Optional[np.ndarray] = None,
                   ell: int = 0) -> SampledFunction:
    """``sup_t |d^ell phi_j(H) f(t)| / (1 + 2^{j/2}|x - t|)^s`` on the grid."""
    b = band if band is not None else machinery.band_function(j, _real_if_possible(_values(f)), ell)
    x = machinery.grid.points
    return SampledFunction(machinery.grid, _pairwise_sup(b, x, 2.0 ** (j / 2), s))


def hl_maximal(g: SampledFunction, centered: bool = True) -> SampledFunction:
    """Hardy-Littlewood maximal function over grid-aligned intervals (zero outside the grid).

    ``centered`` uses intervals centred at x; otherwise all grid intervals
    containing x.
    """
    a = np.abs(np.asarray(g.values))
    h = g.grid.spacing
    n = a.size
    # cumulative trapezoid integral at grid points
    C = np.concatenate([[0.0], np.cumsum(0.5 * h * (a[1:] + a[:-1]))])
    out = np.empty(n)
    if centered:
        for i in range(n):
            m = np.arange(1, n)
            lo = np.clip(i - m, 0, n - 1)
            hi = np.clip(i + m, 0, n - 1)
            avg = (C[hi] - C[lo]) / (2 * m * h)
            out[i] = max(a[i], float(avg.max()))
        return SampledFunction(g.grid, out)
    # uncentred: best interval [l, r] with l <= i <= r
    for i in range(n):
        l = np.arange(0, i + 1)[:, None]
        r = np.arange(i, n)[None, :]
        length = (r - l) * h
        with np.errstate(invalid="ignore", divide="ignore"):
            avg = np.where(length > 0, (C[r] - C[l]) / np.where(length > 0, length, 1.0), a[i])
        out[i] = float(avg.max())
    return SampledFunction(g.grid, out)


def peetre_hl_check(f, machinery: Machinery, r: float = 1.0, js: Optional[Sequence[int]] = None) -> dict:
    """Fit ``c_j = sup phi*_{j,1/r} f / [M(|phi_j(H) f|^r)]^{1/r}``; stable over j."""
    js = list(js if js is not None else machinery.js)
    c = {}
    for j in js:
        b = machinery.band_function(j, _real_if_possible(_values(f)))
        if not np.any(b):
            continue
        star = peetre_maximal(f, machinery, j, 1.0 / r, band=b).values.real
        Mr = hl_maximal(SampledFunction(machinery.grid, np.abs(b) ** r)).values.real ** (1.0 / r)
        sel = Mr > 1e-12 * Mr.max()
        c[j] = float(np.max(star[sel] / Mr[sel]))
    vals = np.array(list(c.values()))
    ratio = float(vals.max() / vals.min()) if vals.size else 1.0
    return {"r": r, "c": c, "ratio": ratio, "pass": bool(ratio <= STABLE_RATIO)}


def bernstein_check(f, machinery: Machinery, js: Sequence[int], s: float = 2.0) -> dict:
    """Ratio ``sup_x phi**_{j,s} f / (2^{j/2} phi*_{j,s} f)`` per j; PASS when stable over j."""
    fv = _real_if_possible(_values(f))
    c = {}
    for j in js:
        b = machinery.band_function(j, fv)
        if not np.any(np.abs(b) > 1e-14):
            continue
        db = machinery.band_function(j, fv, ell=1)
        star = peetre_maximal(f, machinery, j, s, band=b).values.real
        dstar = peetre_maximal(f, machinery, j, s, band=db).values.real
        sel = star > 1e-10 * star.max()
        c[j] = float(np.max(dstar[sel] / (2.0 ** (j / 2) * star[sel])))
    vals = np.array(list(c.values()))
    ratio = float(vals.max() / vals.min()) if vals.size else 1.0
    return {"s": s, "c": c, "ratio": ratio, "pass": bool(ratio <= STABLE_RATIO)}


# --------------------------------------------------------------------------
# equivalence checks
# --------------------------------------------------------------------------


def _bracket(ratios: Sequence[float], C: float) -> dict:
    r = np.asarray(ratios, float)
    lo, hi = float(r.min()), float(r.max())
    return {"min_ratio": lo, "max_ratio": hi, "C": C, "pass": bool(lo >= 1.0 / C and hi <= C)}


def characterization_check(fset: Sequence, machinery: Machinery, P: BesovParams, kind: str = "B",
                           C: float = C_CHARACTERIZATION) -> dict:
    """Band norms against the same norms of Peetre maximal functions."""
    if kind == "B" and not P.s > 1.0 / P.p:
        raise ValueError("need s > 1/p for the Besov characterisation")
    if kind == "F" and not P.s > 1.0 / min(P.p, P.q):
        raise ValueError("need s > 1/min(p, q) for the Triebel-Lizorkin characterisation")
    ratios = []
    for f in fset:
        bands = band_functions(f, machinery)
        star = {j: peetre_maximal(f, machinery, j, P.s, band=bands[j]).values.real for j in bands}
        if kind == "B":
            lhs = besov_norm(f, machinery, P, bands).norm
            rhs = besov_norm(f, machinery, P, star).norm
        else:
            lhs = triebel_norm(f, machinery, P, bands).norm
            rhs = triebel_norm(f, machinery, P, star).norm
        ratios.append(rhs / lhs)
    return {"kind": kind, "ratios": ratios, **_bracket(ratios, C)}


def lifting_check(fset: Sequence, machinery: Machinery, s: float, P: BesovParams,
                  C: float = C_LIFTING) -> dict:
    """``||H^s f||_{B^{alpha-s}} / ||f||_{B^alpha}`` across the set."""
    ratios = []
    for f in fset:
        fv = _real_if_possible(_values(f))
        if s != int(s) and machinery.negative_mass(fv) > 1e-12:
            raise ValueError("H^s is not defined on the negative spectrum for non-integer s")
        mu = (lambda E: E ** int(s)) if s == int(s) else (lambda E: np.maximum(E, 0.0) ** s)
        if s == 0:
            g = fv
        else:
            g = _real_if_possible(spectral_multiplier(mu, None, machinery, fv)[0].values)
        num = besov_norm(g, machinery, BesovParams(P.alpha - s, P.p, P.q, P.s)).norm
        den = besov_norm(fv, machinery, P).norm
        ratios.append(num / den)
    return {"s": s, "ratios": ratios, **_bracket(ratios, C)}


def fourier_sobolev_norm(f, grid: Grid1D, order: float, p: float) -> float:
    """``|| F^{-1}[(1 + xi^2)^{order/2} F f] ||_p`` by FFT (Bessel-potential norm)."""
    fv = _values(f)
    xi = 2 * np.pi * np.fft.fftfreq(fv.size, grid.spacing)
    g = np.fft.ifft((1 + xi**2) ** (order / 2) * np.fft.fft(fv))
    w = np.full(fv.size, grid.spacing)
    return float(np.sum(w * np.abs(g) ** p) ** (1.0 / p))


def inhomogeneous_pieces(f, machinery: Machinery, system: DyadicSystem):
    """``Phi(H) f`` and ``{phi_j(H) f}_{j >= 1}`` using the machinery's homogeneous bands below 1."""
    if system.homogeneous or system.Phi is None:
        raise ValueError("an inhomogeneous system with a low-energy cap is required")
    base = machinery.system
    if base.name != system.name:
        raise ValueError("the inhomogeneous system must share the machinery's mother")
    fv = _real_if_possible(_values(f))
    low = machinery.apply_ac("cap", lambda E: np.ones_like(E), fv)
    for j in machinery.js:
        if j <= 0:
            low = low + machinery.apply_ac(j, lambda E: np.ones_like(E), fv)
    low = low + machinery.apply_pp(system.Phi, fv)
    highs = {j: machinery.band_function(j, fv) for j in system.js if j >= 1}
    return low, highs


def sobolev_check(fset: Sequence, machinery: Machinery, alpha: float, p: float,
                  system: Optional[DyadicSystem] = None, C: float = C_SOBOLEV) -> dict:
    """``||Phi(H)f||_p + ||(sum_{j>=1} 2^{2j alpha}|phi_j(H)f|^2)^{1/2}||_p`` against ``||f||_{W^{2 alpha}_p}``."""
    if system is None:
        raise ValueError("sobolev_check needs an inhomogeneous dyadic system")
    ratios = []
    for f in fset:
        low, highs = inhomogeneous_pieces(f, machinery, system)
        sq = sum((2.0 ** (j * alpha) * np.abs(b)) ** 2 for j, b in highs.items())
        rhs = lp(machinery, low, p) + lp(machinery, np.sqrt(sq), p)
        ratios.append(rhs / fourier_sobolev_norm(f, machinery.grid, 2 * alpha, p))
    return {"alpha": alpha, "p": p, "ratios": ratios, **_bracket(ratios, C)}


def lp_square_function_check(fset: Sequence, machinery: Machinery, p: float, C: float = C_LP) -> dict:
    """``||f||_p`` against ``||(sum_j |phi_j(H) f|^2)^{1/2}||_p``."""
    P = BesovParams(0.0, p, 2.0, 1.0)
    ratios = [triebel_norm(f, machinery, P).norm / lp(machinery, _values(f), p) for f in fset]
    return {"p": p, "ratios": ratios, **_bracket(ratios, C)}


def plancherel_check(fset: Sequence, machinery: Machinery, C: float = C_PLANCHEREL) -> dict:
    P = BesovParams(0.0, 2.0, 2.0, 1.0)
    ratios = [besov_norm(f, machinery, P).norm / lp(machinery, _values(f), 2.0) for f in fset]
    return {"ratios": ratios, **_bracket(ratios, C)}


def system_equivalence_check(fset: Sequence, machinery: Machinery, P: BesovParams, other: str = "bump",
                             kind: str = "B", C: float = C_SYSTEMS) -> dict:
    """Norms from the machinery's system against an independently built mother."""
    lo, hi = machinery.system.jrange
    alt = machinery.with_system(make_dyadic_system(lo, hi, True, other))
    norm = besov_norm if kind == "B" else triebel_norm
    ratios = [norm(f, alt, P).norm / norm(f, machinery, P).norm for f in fset]
    return {"other": other, "kind": kind, "ratios": ratios, **_bracket(ratios, C)}


# --------------------------------------------------------------------------
# probe functions
# --------------------------------------------------------------------------


def probe_set(grid: Grid1D, seed: int = 20240607, n_random: int = 10) -> list:
    """Ten seeded random wave-packet sums plus five structured functions.

    Random packets have envelope width 3 to 5 and carrier 1.5 to 3.5, so their
    spectra sit inside the default covered band.
    """
    rng = np.random.default_rng(seed)
    x = grid.points
    out = []
    for _ in range(n_random):
        f = np.zeros_like(x)
        for _ in range(3):
            a = rng.uniform(0.3, 1.0)
            c = rng.uniform(-8.0, 8.0)
            sig = rng.uniform(3.0, 5.0)
            xi = rng.uniform(1.5, 3.5)
            th = rng.uniform(0, 2 * np.pi)
            f += a * np.exp(-((x - c) ** 2) / (2 * sig**2)) * np.cos(xi * (x - c) + th)
        out.append(SampledFunction(grid, f))
    structured = [
        np.exp(-x**2 / 2),
        np.exp(-((x - 5.0) ** 2) / 2),
        np.exp(-x**2 / 8) * np.cos(2 * x),
        np.exp(-((x - 4) ** 2)) + np.exp(-((x + 4) ** 2)),
        x * np.exp(-x**2 / 4),
    ]
    out.extend(SampledFunction(grid, f) for f in structured)
    return out


PROBE_NAMES = [f"random-{i}" for i in range(10)] + ["gaussian", "shifted-gaussian", "wave-packet",
                                                     "two-bump", "odd-packet"]
