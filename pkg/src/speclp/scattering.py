"""Wronskian, transmission/reflection, zero-energy resonance and bound states."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .config import DEFAULT, Settings
from .core import Grid1D, Potential, SampledFunction, simpson_weights
from .jost import JostSolution, MarchenkoKernel, filon_rows, filon_weights, panel_integrals, solve_m


class WronskianError(RuntimeError):
    pass


class BranchMismatchError(RuntimeError):
    pass


@dataclass
class BoundState:
    kappa: float
    energy: float
    eigenfunction: SampledFunction
    derivative: np.ndarray
    l2norm: float = 1.0
    scale: float = 1.0

    def evaluate(self, V: Potential, x, settings: Settings = DEFAULT):
        """Normalised eigenfunction and its derivative at arbitrary points."""
        e, de = _raw_eigenfunction(V, self.kappa, np.atleast_1d(np.asarray(x, float)), settings)
        return e * self.scale, de * self.scale

    def as_dict(self) -> dict:
        return {"kappa": self.kappa, "energy": self.energy, "l2norm": self.l2norm}


@dataclass(eq=False)
class ScatteringData:
    k: np.ndarray
    W: np.ndarray
    t: np.ndarray
    r_plus: np.ndarray
    r_minus: np.ndarray
    nu: complex
    resonant: bool = False
    bound_states: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def unitarity_defect(self, kmin: float = 0.05) -> float:
        sel = np.abs(self.k) >= kmin
        if not np.any(sel):
            return 0.0
        t2 = np.abs(self.t[sel]) ** 2
        return float(max(np.max(np.abs(t2 + np.abs(self.r_plus[sel]) ** 2 - 1)),
                         np.max(np.abs(t2 + np.abs(self.r_minus[sel]) ** 2 - 1))))

    def to_csv(self) -> str:
        rows = ["k,re_t,im_t,abs_t,re_r_plus,im_r_plus,abs_W"]
        for k, t, r, w in zip(self.k, self.t, self.r_plus, self.W):
            rows.append(",".join(repr(float(v)) for v in (np.real(k), t.real, t.imag, abs(t), r.real, r.imag, abs(w))))
        return "\n".join(rows) + "\n"

    def report(self) -> dict:
        return {
            "nu": [float(np.real(self.nu)), float(np.imag(self.nu))],
            "resonant": bool(self.resonant),
            "bound_states": [b.as_dict() for b in self.bound_states],
            "diagnostics": {k: v for k, v in self.diagnostics.items() if np.isscalar(v) or isinstance(v, (list, dict, str))},
        }


# --------------------------------------------------------------------------


def _wronskian_at(mp, dmp, mm, dmm, k):
    return mp * dmm - dmp * mm - 2j * k * mp * mm


def compute_wronskian(J: JostSolution, x0: float = 0.0, tol: float = 1e-8) -> np.ndarray:
    """``W = f+ f-' - f+' f-`` at the sample nearest ``x0``; spread over 5 samples checked."""
    x = J.x
    mp, mm = J.m_plus, J.m_minus
    dmp, dmm = J.deriv("+", 1, 0), J.deriv("-", 1, 0)
    i0 = int(np.argmin(np.abs(x - x0)))
    W = _wronskian_at(mp[i0], dmp[i0], mm[i0], dmm[i0], J.k)
    picks = np.unique(np.clip(np.searchsorted(x, x0 + np.array([-2.0, -1.0, 0.0, 1.0, 2.0])), 0, x.size - 1))
    spread = 0.0
    for i in picks:
        Wi = _wronskian_at(mp[i], dmp[i], mm[i], dmm[i], J.k)
        spread = max(spread, float(np.max(np.abs(Wi - W) / np.maximum(1.0, np.abs(W)))))
    if spread > tol:
        raise WronskianError(f"Wronskian depends on the reference point (relative spread {spread:.2e})")
    return W


def _nu_from_volterra(V: Potential, settings: Settings) -> complex:
    J = solve_m(V, np.array([0.0]), np.array([0.0]), side="+", settings=settings)
    return complex(J.moments_plus["int_Vm"][0])


def _support_rows(B: MarchenkoKernel):
    M = B.tri.shape[0] - 1
    xs = B.a + B.h * np.arange(M + 1)
    return xs, M


def _low_energy_W_case_a(V: Potential, B: MarchenkoKernel, k: np.ndarray, nu: complex) -> np.ndarray:
    """``W(k) = -2ik + nu + int V(t) int_0^inf B+(t,y)(e^{2iky}-1) dy dt``."""
    xs, M = _support_rows(B)
    Vt = V(xs)
    wt = simpson_weights(M + 1, B.h) * Vt
    n = M + 1 - np.arange(M + 1)
    acc = filon_rows(B.tri, n, wt, B.h, k) - filon_rows(B.tri, n, wt, B.h, np.zeros(1))
    return -2j * k + nu + acc


def _low_energy_tinv_case_b(V: Potential, B: MarchenkoKernel, k: np.ndarray) -> np.ndarray:
    """``1/t = 1 - int V(t) int_0^inf (int_xi^inf B+(t,eta) d eta) e^{2ik xi} d xi dt``."""
    xs, M = _support_rows(B)
    Vt = V(xs)
    wt = simpson_weights(M + 1, B.h) * Vt
    n = M + 1 - np.arange(M + 1)
    # tail function by cumulative quadrature from the far end of each row
    tails = np.zeros_like(B.tri)
    for p in range(M - 1):
        row = B.tri[p, : n[p]]
        tails[p, : n[p] - 1] = np.cumsum(panel_integrals(row, B.h)[::-1])[::-1]
    wt = np.where(n >= 3, wt, 0.0)
    acc = filon_rows(tails, n, wt, B.h, k)
    return 1 - acc


def compute_coefficients(J: JostSolution, B: MarchenkoKernel, V: Potential,
                         settings: Settings = DEFAULT, check_branches: bool = True) -> ScatteringData:
    """Transmission and reflection on the k-grid of ``J`` (real k).

    High energy (|k| >= 1) uses the Volterra integrals; low energy uses the
    Marchenko-kernel formulas with the case split on ``nu = W(0)``.
    """
    k = np.real(J.k).astype(float)
    if V.is_free:
        one = np.ones(k.size, dtype=complex)
        S = ScatteringData(k, -2j * k, one, 0 * one, 0 * one, 0j, True)
        S.diagnostics.update(branch_gap=0.0, tol_res=settings.tol_res_rel, nu_marchenko=0.0)
        return S
    mp, mm = J.moments_plus, J.moments_minus
    nu = _nu_from_volterra(V, settings)
    # nu via the Marchenko kernel: int V + int V int B
    xs, M = _support_rows(B)
    wt = simpson_weights(M + 1, B.h) * V(xs)
    nu_B = complex(np.sum(wt) + filon_rows(B.tri, M + 1 - np.arange(M + 1), wt, B.h, np.zeros(1))[0])
    if V.support is None:
        nu_B += 0  # effective support already covers the numerically nonzero mass

    with np.errstate(divide="ignore", invalid="ignore"):
        tinv_hi = 1 - mp["int_Vm"] / (2j * k)
        W_hi = -2j * k * tinv_hi
    low = np.abs(k) < 1
    scale = max(1.0, float(np.max(np.abs(W_hi[~low])) if np.any(~low) else 1.0))
    t = np.empty(k.size, dtype=complex)
    t[~low] = 1 / tinv_hi[~low]
    # provisional tolerance; refined in detect_resonance
    tol_res = settings.tol_res_rel * max(1.0, float(np.max(np.abs(-2j * k[low] + mp["int_Vm"][low])) if np.any(low) else 1.0))
    case = "a" if abs(nu) > tol_res else "b"

    def low_t(kk):
        if case == "a":
            Wk = _low_energy_W_case_a(V, B, kk, nu)
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(kk == 0, 0.0, -2j * kk / Wk)
        return 1 / _low_energy_tinv_case_b(V, B, kk)

    if np.any(low):
        t[low] = low_t(k[low])
    with np.errstate(divide="ignore", invalid="ignore"):
        W = np.where(k == 0, nu, -2j * k / t)
    r_minus = t * (1 + mp["int_hVm"]) - 1
    r_plus = t * (1 + mm["int_hVm"]) - 1
    S = ScatteringData(k, W, t, r_plus, r_minus, nu)
    S.diagnostics.update(case=case, tol_res=tol_res, nu_marchenko=abs(nu_B - nu), wronskian_scale=scale)
    with np.errstate(divide="ignore", invalid="ignore"):
        S.diagnostics["t_near_zero"] = complex(low_t(np.array([1e-6]))[0])
    if check_branches:
        ov = (np.abs(k) >= settings.branch_overlap[0]) & (np.abs(k) <= settings.branch_overlap[1])
        if np.any(ov):
            gap = float(np.max(np.abs(low_t(k[ov]) - 1 / tinv_hi[ov])))
        else:
            kk = np.linspace(*settings.branch_overlap, 7)
            Jo = solve_m(V, np.array([0.0]), kk, side="+", settings=settings)
            gap = float(np.max(np.abs(low_t(kk) - 1 / (1 - Jo.moments_plus["int_Vm"] / (2j * kk)))))
        S.diagnostics["branch_gap"] = gap
        if gap > 1e-4:
            raise BranchMismatchError(f"high/low energy transmission branches differ by {gap:.2e}")
    return S


def detect_resonance(S: ScatteringData, settings: Settings = DEFAULT) -> tuple[bool, dict]:
    """``nu = W(0)`` small relative to ``sup |W|`` on ``|k| <= 1``; cross-checked with ``inf |t|``."""
    low = np.abs(S.k) <= 1
    supW = float(np.max(np.abs(S.W[low]))) if np.any(low) else 1.0
    tol = settings.tol_res_rel * max(1.0, supW)
    resonant = bool(abs(S.nu) <= tol)
    inf_t = float(np.min(np.abs(S.t[low]))) if np.any(low) else float("nan")
    # the infimum lives at k -> 0; extrapolate t there from the smallest samples
    kp = np.argsort(np.where(S.k > 0, S.k, np.inf))[:3]
    if "t_near_zero" in S.diagnostics:
        inf_t = min(inf_t, abs(S.diagnostics["t_near_zero"]))
    elif np.all(S.k[kp] > 0) and np.all(np.isfinite(S.k[kp])) and not np.any(S.k == 0):
        t0 = complex(np.polyval(np.polyfit(S.k[kp], S.t[kp], 2), 0.0))
        inf_t = min(inf_t, abs(t0))
    by_t = bool(inf_t >= settings.t_floor)
    diag = {"nu_abs": abs(S.nu), "tol_res": tol, "inf_abs_t": inf_t, "t_criterion": by_t,
            "agree": resonant == by_t, "near_threshold": bool(tol < abs(S.nu) < 10 * tol)}
    if not diag["agree"]:
        warnings.warn("resonance flag disagrees with the |t| lower-bound criterion", RuntimeWarning, stacklevel=2)
    if diag["near_threshold"]:
        warnings.warn("|nu| lies in the warning band above tol_res", RuntimeWarning, stacklevel=2)
    S.resonant = resonant
    S.diagnostics.update(resonance=diag)
    return resonant, diag


# --------------------------------------------------------------------------
# bound states
# --------------------------------------------------------------------------


def wronskian_imag_axis(V: Potential, kappa, settings: Settings = DEFAULT) -> np.ndarray:
    """``W(i kappa)``; real for real potentials."""
    kappa = np.atleast_1d(np.asarray(kappa, float))
    J = solve_m(V, np.array([0.0]), 1j * kappa, settings=settings, ell_max=1)
    W = _wronskian_at(J.m_plus[0], J.deriv("+", 1, 0)[0], J.m_minus[0], J.deriv("-", 1, 0)[0], 1j * kappa)
    return W.real


def _raw_eigenfunction(V: Potential, kappa: float, x: np.ndarray, settings: Settings):
    J = solve_m(V, np.concatenate([x, [0.0]]), np.array([1j * kappa]), settings=settings, ell_max=1)
    fp = np.exp(-kappa * x) * J.m_plus[:-1, 0]
    fm = np.exp(kappa * x) * J.m_minus[:-1, 0]
    dfp = np.exp(-kappa * x) * (-kappa * J.m_plus[:-1, 0] + J.deriv("+", 1, 0)[:-1, 0])
    dfm = np.exp(kappa * x) * (kappa * J.m_minus[:-1, 0] + J.deriv("-", 1, 0)[:-1, 0])
    c = J.m_plus[-1, 0] / J.m_minus[-1, 0]  # f+(0) / f-(0)
    e = np.where(x >= 0, fp, c * fm).real
    de = np.where(x >= 0, dfp, c * dfm).real
    return e, de


def _eigenfunction(V: Potential, kappa: float, xgrid: Grid1D, settings: Settings):
    e, de = _raw_eigenfunction(V, kappa, xgrid.points, settings)
    norm = math.sqrt(float(np.dot(simpson_weights(e.size, xgrid.spacing), e * e)))
    sgn = 1.0 if e[np.argmax(np.abs(e))] > 0 else -1.0
    return e * sgn / norm, de * sgn / norm, sgn / norm


def find_bound_states(V: Potential, xgrid: Optional[Grid1D] = None, settings: Settings = DEFAULT,
                      _retry: bool = True, kappa_max: Optional[float] = None) -> list:
    """Zeros of ``kappa -> W(i kappa)`` on ``(0, kappa_max]`` with normalised eigenfunctions."""
    if V.is_free:
        return []
    xgrid = xgrid or Grid1D.from_spacing(*settings.x_window, settings.dx)
    xs = np.linspace(*V.effective_support(settings), 4001)
    neg = float(np.max(np.maximum(-V(xs), 0.0)))
    if neg == 0.0:
        return []
    kmax = kappa_max or 1.0 + math.sqrt(neg)
    n = settings.bound_kappa_samples
    kap = kmax * np.arange(1, n + 1) / n
    Wv = wronskian_imag_axis(V, kap, settings)
    if _retry and (abs(Wv[-1]) < 1e-12 or Wv[-1] * Wv[-2] < 0):
        return find_bound_states(V, xgrid, settings, _retry=False, kappa_max=2 * kmax)
    f = lambda q: float(wronskian_imag_axis(V, [q], settings)[0])
    roots = []
    for i in range(n - 1):
        if Wv[i] == 0:
            roots.append(kap[i])
        elif Wv[i] * Wv[i + 1] < 0:
            roots.append(brentq(f, kap[i], kap[i + 1], xtol=1e-12, rtol=1e-14))
    roots = sorted(roots, reverse=True)
    states = []
    for q in roots:
        e, de, scale = _eigenfunction(V, q, xgrid, settings)
        states.append(BoundState(float(q), -float(q) ** 2, SampledFunction(xgrid, e), de, scale=scale))
    return states


# --------------------------------------------------------------------------


def asymptotics_report(S: ScatteringData, kmin: float = 5.0) -> dict:
    """High-energy decay fits for ``t - 1``, ``t'`` and ``r+-``."""
    k = S.k
    sel = k >= kmin
    if not np.any(sel) or k.max() < 20:
        raise ValueError("k-grid must reach |k| >= 20")
    order = np.argsort(k)
    ks, ts = k[order], S.t[order]
    dt = np.gradient(ts, ks)
    q = {
        "k_t_minus_1": np.abs(ks * (ts - 1)),
        "k2_dt": np.abs(ks**2 * dt),
        "k_r_plus": np.abs(ks * S.r_plus[order]),
        "k_r_minus": np.abs(ks * S.r_minus[order]),
    }
    kmax = ks.max()
    last = (ks >= kmax / 2) & (ks >= kmin)
    prev = (ks >= kmax / 4) & (ks < kmax / 2) & (ks >= kmin)
    out = {}
    for name, v in q.items():
        s_all = float(np.max(v[ks >= kmin]))
        s_last = float(np.max(v[last])) if np.any(last) else 0.0
        s_prev = float(np.max(v[prev])) if np.any(prev) else s_last
        ok = math.isfinite(s_all) and s_last <= 1.05 * s_prev + 1e-12
        out[name] = {"sup": s_all, "sup_last_block": s_last, "sup_prev_block": s_prev, "pass": bool(ok)}
    out["pass"] = all(v["pass"] for v in out.values() if isinstance(v, dict))
    return out


def scattering_pipeline(V: Potential, k, settings: Settings = DEFAULT, xgrid: Optional[Grid1D] = None,
                        bound_states: bool = True):
    """Jost data, Marchenko kernel, coefficients, resonance flag and bound states."""
    from .jost import solve_marchenko

    k = np.asarray(k, float)
    J = solve_m(V, np.linspace(-2.0, 2.0, 5), k, settings=settings, ell_max=1)
    B = solve_marchenko(V, "+", settings)
    S = compute_coefficients(J, B, V, settings)
    S.W_jost = compute_wronskian(J)
    detect_resonance(S, settings)
    if bound_states:
        S.bound_states = find_bound_states(V, xgrid, settings)
    return J, B, S
