"""Batch runs: config schema, task scheduling and report assembly."""
from __future__ import annotations

import configparser
import copy
import hashlib
import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .config import DEFAULT, Settings
from .core import POTENTIAL_KINDS, Grid1D, SampledFunction, make_potential
from .io import csv_text, dumps, atomic_write

TASKS = ("scattering", "kernels", "decay", "weighted", "besov", "heat", "multiplier", "propagate")
DEPENDS = {
    "scattering": (),
    "kernels": ("scattering",),
    "decay": ("kernels",),
    "weighted": ("kernels",),
    "besov": ("kernels",),
    "heat": (),
    "multiplier": ("scattering",),
    "propagate": ("scattering",),
}
NEEDS_POTENTIAL = {t for t in TASKS if t != "heat"}

RUN_DEFAULTS = {"name": "run", "tasks": [], "jrange": [-5, 5], "seed": 20240607, "grid_scale": 1.0}

TASK_DEFAULTS = {
    "scattering": {"kmin": 0.05, "kmax": 20.0, "nk": 200, "bound_states": True, "unitarity_tol": 1e-6,
                   "branch_tol": 1e-6, "asymptotics": False, "asym_kmin": 5.0, "asym_kmax": 50.0,
                   "marchenko_bounds": False, "bounds_s": [0, 1, 2], "bounds_deriv": ["none", "dx", "dy"]},
    "kernels": {"mother": "partition", "ells": [0, 1], "rows": [-10.0, 10.0], "cols": [-200.0, 200.0],
                "write_csv": False},
    "decay": {"N": [1, 2, 4]},
    "weighted": {"s": 1.0, "eps": 0.5},
    "besov": {"checks": ["plancherel", "characterization", "lifting", "sobolev", "lp", "systems",
                         "bernstein", "peetre"],
              "alpha": 0.5, "p": 2.0, "q": 2.0, "s": 1.0, "lift_s": 1.0, "lp_p": [1.5, 2.0, 3.0],
              "other": "bump", "jrange": [-6, 6]},
    "heat": {"operator": "hermite-1", "checks": ["gaussian", "series", "decay"], "ells": [0, 1],
             "series_t": [0.1, 1.0], "series_tol": 1e-7, "series_K": 60, "N": [2], "jrange": [1, 6], "K": 200},
    "multiplier": {"mu": "imaginary-power", "gamma": 1.0, "semigroup_times": [0.5, 1.0], "tol": 1e-6,
                   "C": 10.0, "jrange": [-6, 6]},
    "propagate": {"times": [0.0, 1.0, 2.0, 3.0, 4.0, 5.0], "norm_tol": 1e-6, "energy_tol": 1e-5,
                  "dalembert_tol": 1e-4, "jrange": [-6, 6]},
}
VERDICTS = ("PASS", "FAIL", "FAIL-LOW-ENERGY", "FAIL-UNSTABLE")


class ConfigError(ValueError):
    """Invalid or incomplete run configuration (exit status 2)."""


class TaskFailure(RuntimeError):
    """A task raised during numerical work (exit status 1)."""

    def __init__(self, task: str, cause: BaseException):
        super().__init__(f"task {task!r} failed: {type(cause).__name__}: {cause}")
        self.task = task
        self.cause = cause


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


def _scalar(text: str):
    t = text.strip()
    low = t.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for conv in (int, float):
        try:
            return conv(t)
        except ValueError:
            pass
    return t


def _parse_value(text: str):
    t = text.strip()
    if t.startswith("[") and t.endswith("]"):
        t = t[1:-1]
        return [_scalar(v) for v in t.split(",") if v.strip()]
    if "," in t:
        return [_scalar(v) for v in t.split(",") if v.strip()]
    return _scalar(t)


def parse_config_text(text: str) -> dict:
    """Raw nested dict from INI (section headers, ``key = value``) or JSON text."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON config: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("JSON config must be an object")
        return raw
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return {sec: {k: _parse_value(v) for k, v in cp[sec].items()} for sec in cp.sections()}


def _as_list(v) -> list:
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _coerce(default, value, where: str):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"{where} must be an integer")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ConfigError(f"{where} must be a finite number")
        return float(value)
    if isinstance(default, list):
        items = _as_list(value)
        if not default:
            return items
        proto = default[0]
        if isinstance(proto, (int, float)) and not isinstance(proto, bool):
            nums = [_coerce(0.0, v, where) for v in items]
            return [int(v) if isinstance(proto, int) and v == int(v) else v for v in nums]
        return [_coerce(proto, v, where) for v in items]
    return str(value)


@dataclass
class RunConfig:
    name: str
    tasks: list
    jrange: tuple
    seed: int
    grid_scale: float
    potential: Optional[dict]
    params: dict = field(default_factory=dict)
    expect: dict = field(default_factory=dict)

    def canonical(self) -> dict:
        return {
            "run": {"name": self.name, "tasks": list(self.tasks), "jrange": list(self.jrange),
                    "seed": self.seed, "grid_scale": self.grid_scale},
            "potential": self.potential,
            "params": {t: self.params[t] for t in self.tasks},
            "expect": dict(self.expect),
        }

    def config_hash(self) -> str:
        return hashlib.sha256(dumps(self.canonical()).encode("utf-8")).hexdigest()

    def to_ini(self) -> str:
        def fmt(v):
            if isinstance(v, bool):
                return "true" if v else "false"
            if isinstance(v, list):
                return ", ".join(fmt(x) for x in v)
            return repr(v) if isinstance(v, float) else str(v)

        lines = ["[run]"]
        for k, v in self.canonical()["run"].items():
            lines.append(f"{k} = {fmt(v)}")
        if self.potential is not None:
            lines += ["", "[potential]"] + [f"{k} = {fmt(v)}" for k, v in self.potential.items()]
        for t in self.tasks:
            defaults = TASK_DEFAULTS[t]
            changed = {k: v for k, v in self.params[t].items() if v != defaults[k]}
            if changed:
                lines += ["", f"[{t}]"] + [f"{k} = {fmt(v)}" for k, v in changed.items()]
        if self.expect:
            lines += ["", "[expect]"] + [f"{k} = {v}" for k, v in self.expect.items()]
        return "\n".join(lines) + "\n"


def validate(raw: dict) -> RunConfig:
    """Normalise a raw config dict, applying defaults; raises :class:`ConfigError`."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping of sections")
    unknown = set(raw) - {"run", "potential", "expect", *TASKS}
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
    run = dict(RUN_DEFAULTS)
    for k, v in (raw.get("run") or {}).items():
        if k not in RUN_DEFAULTS:
            raise ConfigError(f"unknown key run.{k}")
        run[k] = v
    tasks = [str(t) for t in _as_list(run["tasks"])]
    if not tasks:
        raise ConfigError("run.tasks is empty")
    for t in tasks:
        if t not in TASKS:
            raise ConfigError(f"unknown task {t!r}; expected one of {', '.join(TASKS)}")
    if len(set(tasks)) != len(tasks):
        raise ConfigError("duplicate task in run.tasks")
    for t in tasks:
        missing = [d for d in DEPENDS[t] if d not in tasks]
        if missing:
            raise ConfigError(f"task {t!r} requires {', '.join(missing)} to be scheduled")
    order = [t for t in TASKS if t in tasks]
    jr = _as_list(run["jrange"])
    if len(jr) != 2 or any(isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v for v in jr):
        raise ConfigError("run.jrange must be two integers")
    jrange = (int(jr[0]), int(jr[1]))
    if jrange[0] > jrange[1]:
        raise ConfigError("run.jrange must be increasing")
    seed = _coerce(0, run["seed"], "run.seed")
    scale = _coerce(1.0, run["grid_scale"], "run.grid_scale")
    if scale <= 0:
        raise ConfigError("run.grid_scale must be positive")

    potential = None
    if "potential" in raw:
        pot = dict(raw["potential"])
        kind = pot.pop("kind", None)
        if kind not in POTENTIAL_KINDS:
            raise ConfigError(f"potential.kind must be one of {', '.join(POTENTIAL_KINDS)}")
        try:
            make_potential(kind, **pot)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid potential: {exc}") from None
        potential = {"kind": kind, **{k: float(v) for k, v in sorted(pot.items())}}
    if potential is None and any(t in NEEDS_POTENTIAL for t in order):
        raise ConfigError("a [potential] section is required by the scheduled tasks")

    params = {}
    for t in order:
        p = copy.deepcopy(TASK_DEFAULTS[t])
        for k, v in (raw.get(t) or {}).items():
            if k not in p:
                raise ConfigError(f"unknown key {t}.{k}")
            p[k] = _coerce(p[k], v, f"{t}.{k}")
        params[t] = p
    for t in raw:
        if t in TASKS and t not in order:
            raise ConfigError(f"section [{t}] given but the task is not scheduled")

    expect = {}
    for k, v in (raw.get("expect") or {}).items():
        task = k.split(".")[0]
        if task not in order:
            raise ConfigError(f"expectation for unscheduled task {task!r}")
        if str(v) not in VERDICTS:
            raise ConfigError(f"expected verdict must be one of {', '.join(VERDICTS)}")
        expect[k] = str(v)
    return RunConfig(str(run["name"]), order, jrange, seed, scale, potential, params, expect)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return validate(parse_config_text(text))


# --------------------------------------------------------------------------
# tasks
# --------------------------------------------------------------------------


@dataclass
class Context:
    config: RunConfig
    settings: Settings
    out: Optional[Path]
    V: object = None
    J: object = None
    S: object = None
    kernels: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)
    machineries: dict = field(default_factory=dict)

    def write(self, name: str, text: str):
        if self.out is not None:
            atomic_write(self.out / name, text)
        self.files[name] = hashlib.sha256(text.encode("utf-8")).hexdigest()

    def machinery(self, jrange, mother: str = "partition", homogeneous: bool = True):
        from .dyadic import make_dyadic_system
        from .speccalc import Machinery

        key = tuple(jrange)
        if key not in self.machineries:
            bound = self.S.bound_states if self.S is not None else None
            self.machineries[key] = Machinery(self.V, self.settings, system=make_dyadic_system(*key),
                                              bound_states=bound)
        base = self.machineries[key]
        if mother == "partition" and homogeneous:
            return base
        return base.with_system(make_dyadic_system(*key, homogeneous=homogeneous, mother=mother))


def _verdict(ok: bool) -> str:
    return "PASS" if ok else "FAIL"


def _task_scattering(ctx: Context, p: dict) -> dict:
    from .jost import check_weighted_bounds
    from .scattering import asymptotics_report, detect_resonance, scattering_pipeline

    if not 0 < p["kmin"] < p["kmax"]:
        raise ConfigError("scattering needs 0 < kmin < kmax")
    kp = np.geomspace(p["kmin"], p["kmax"], p["nk"])
    if p["asymptotics"]:
        kp = np.union1d(kp, np.linspace(p["asym_kmin"], p["asym_kmax"], 91))
    k = np.concatenate([-kp[::-1], kp])
    ctx.J, B, ctx.S = scattering_pipeline(ctx.V, k, ctx.settings, bound_states=p["bound_states"])
    S = ctx.S
    resonant, diag = detect_resonance(S, ctx.settings)
    sel = np.abs(S.k) <= p["kmax"]
    t2 = np.abs(S.t[sel]) ** 2
    unit = float(max(np.max(np.abs(t2 + np.abs(S.r_plus[sel]) ** 2 - 1)),
                     np.max(np.abs(t2 + np.abs(S.r_minus[sel]) ** 2 - 1))))
    checks = {
        "unitarity": {"defect": unit, "tol": p["unitarity_tol"], "pass": unit <= p["unitarity_tol"]},
        "resonance_agreement": {"pass": bool(diag["agree"])},
    }
    gap = S.diagnostics.get("branch_gap", 0.0)
    checks["branch_consistency"] = {"gap": gap, "tol": p["branch_tol"], "pass": gap <= p["branch_tol"]}
    out = {"resonant": resonant, "nu": S.nu, "bound_states": [b.as_dict() for b in S.bound_states],
           "resonance": diag, "marchenko_nodes": int(B.tri.shape[0])}
    if p["asymptotics"]:
        rep = asymptotics_report(S, p["asym_kmin"])
        checks["asymptotics"] = rep
    if p["marchenko_bounds"]:
        bounds = {}
        for s in p["bounds_s"]:
            for d in p["bounds_deriv"]:
                bounds[f"s={s},{d}"] = check_weighted_bounds(B, int(s), d)
        checks["marchenko_bounds"] = {"cases": bounds, "pass": all(b["pass"] for b in bounds.values())}
    ctx.write("scattering.csv", S.to_csv())
    out["checks"] = checks
    out["verdict"] = _verdict(all(c["pass"] for c in checks.values()))
    return out


def _task_kernels(ctx: Context, p: dict) -> dict:
    from .dyadic import make_dyadic_system
    from .speccalc import dyadic_kernels

    system = make_dyadic_system(*ctx.config.jrange, mother=p["mother"])
    s = ctx.settings
    xg = Grid1D.from_spacing(*p["rows"], s.kernel_dx)
    yg = Grid1D.from_spacing(*p["cols"], s.kernel_dx)
    ctx.kernels = dyadic_kernels(ctx.V, ctx.S, system, system.js, p["ells"], xgrid=xg, ygrid=yg, settings=s)
    # symmetry on the square block shared by rows and columns
    cols = np.searchsorted(yg.points, xg.points[0] - 1e-9)
    sym = 0.0
    for (j, ell), K in ctx.kernels.items():
        if ell == 0:
            blk = K.K[:, cols: cols + xg.size]
            sym = max(sym, float(np.max(np.abs(blk - blk.T)) / max(np.max(np.abs(blk)), 1e-300)))
        if p["write_csv"]:
            ctx.write(f"kernel_j{j}_l{ell}.csv", K.to_csv())
    checks = {"symmetry": {"relative_defect": sym, "tol": 1e-8, "pass": sym <= 1e-8}}
    summary = {f"{j},{ell}": {"sup": float(np.max(np.abs(K.K))), "lambda_points": K.lam_points}
               for (j, ell), K in sorted(ctx.kernels.items())}
    return {"kernels": summary, "checks": checks, "verdict": _verdict(checks["symmetry"]["pass"])}


def _task_decay(ctx: Context, p: dict) -> dict:
    from .speccalc import decay_fit

    kernels = [ctx.kernels[key] for key in sorted(ctx.kernels)]
    rep = decay_fit(kernels, p["N"], ctx.settings)
    ctx.write("decay.csv", csv_text(["j", "ell", "N", "cN"], [[e["j"], e["ell"], e["N"], e["cN"]]
                                                            for e in rep.entries]))
    per_ell = {}
    for ell in sorted({K.ell for K in kernels}):
        vs = [rep.verdicts[(ell, n)] for n in p["N"]]
        if all(v == "PASS" for v in vs):
            v = "PASS"
        elif "FAIL-LOW-ENERGY" in vs:
            v = "FAIL-LOW-ENERGY"
        else:
            v = "FAIL-UNSTABLE"
        per_ell[f"ell{ell}"] = {
            "verdict": v,
            "by_N": {str(n): {"verdict": rep.verdicts[(ell, n)], "stability_ratio": rep.ratios[(ell, n)],
                              "low_energy_growth": rep.growth[(ell, n)],
                              "cN": {str(j): c for j, c in sorted(rep.constants(ell, n).items())}}
                     for n in p["N"]},
        }
    worst = [v["verdict"] for v in per_ell.values()]
    verdict = "PASS" if all(v == "PASS" for v in worst) else next(v for v in worst if v != "PASS")
    return {"by_ell": per_ell, "verdict": verdict,
            "checks": {k: {"pass": v["verdict"] == "PASS"} for k, v in per_ell.items()}}


def _task_weighted(ctx: Context, p: dict) -> dict:
    from .speccalc import weighted_l2_check, weighted_pointwise_check

    k0 = [ctx.kernels[key] for key in sorted(ctx.kernels) if key[1] == 0]
    if not k0:
        raise ConfigError("weighted task needs ell = 0 kernels")
    l2 = weighted_l2_check(k0, p["s"], ctx.settings)
    pw = weighted_pointwise_check(k0, p["eps"], ctx.settings)
    checks = {"weighted_l2": l2, "pointwise": pw}
    return {"checks": checks, "verdict": _verdict(l2["pass"] and pw["pass"])}


def _task_besov(ctx: Context, p: dict) -> dict:
    from . import besov as bv
    from .dyadic import make_dyadic_system

    M = ctx.machinery(p["jrange"])
    fset = bv.probe_set(M.grid, seed=ctx.config.seed)
    P = bv.BesovParams(p["alpha"], p["p"], p["q"], p["s"])
    checks = {}
    for name in p["checks"]:
        if name == "plancherel":
            checks[name] = bv.plancherel_check(fset, M)
        elif name == "characterization":
            checks["characterization_B"] = bv.characterization_check(fset, M, P, "B")
            checks["characterization_F"] = bv.characterization_check(fset, M, P, "F")
        elif name == "lifting":
            lift = bv.BesovParams(p["alpha"] + p["lift_s"], p["p"], p["q"], p["s"])
            checks[name] = bv.lifting_check(fset, M, p["lift_s"], lift)
        elif name == "sobolev":
            inh = make_dyadic_system(1, p["jrange"][1], homogeneous=False)
            checks[name] = bv.sobolev_check(fset, M, p["alpha"], p["p"], inh)
        elif name == "lp":
            for q in p["lp_p"]:
                checks[f"lp_p={q}"] = bv.lp_square_function_check(fset, M, q)
        elif name == "systems":
            checks["systems_B"] = bv.system_equivalence_check(fset, M, P, p["other"], "B")
            checks["systems_F"] = bv.system_equivalence_check(fset, M, P, p["other"], "F")
        elif name == "bernstein":
            js = [j for j in M.js if j >= -2]
            checks[name] = bv.bernstein_check(fset[-5], M, js)
        elif name == "peetre":
            checks[name] = bv.peetre_hl_check(fset[-5], M, js=[j for j in M.js if j >= -2])
        else:
            raise ConfigError(f"unknown besov check {name!r}")
    return {"checks": checks, "probe_functions": bv.PROBE_NAMES,
            "verdict": _verdict(all(c["pass"] for c in checks.values()))}


def _task_heat(ctx: Context, p: dict) -> dict:
    from . import hermlag as hl
    from .dyadic import make_dyadic_system

    tag = p["operator"]
    kind, arg = hl._parse_tag(tag)
    checks = {}
    for name in p["checks"]:
        if name == "gaussian":
            for ell in p["ells"]:
                checks[f"gaussian_ell{ell}"] = hl.gaussian_bound_check(tag, ell, ctx.settings.gauss_c)
        elif name == "series":
            res = {}
            for t in p["series_t"]:
                if kind == "hermite":
                    x = np.linspace(-4, 4, 81)
                    X, Y = np.meshgrid(x, x, indexing="ij")
                    exact = hl.mehler_kernel(1, t, X, Y)
                    series = hl.mehler_series(t, X, Y, p["series_K"])
                else:
                    x = np.linspace(0.05, 4, 80)
                    X, Y = np.meshgrid(x, x, indexing="ij")
                    exact = hl.laguerre_kernel(arg, t, X, Y)
                    series = hl.laguerre_series(arg, t, X, Y, p["series_K"])
                err = float(np.max(np.abs(exact - series)))
                res[str(t)] = {"error": err, "pass": err <= p["series_tol"]}
            checks["series"] = {"cases": res, "tol": p["series_tol"], "pass": all(v["pass"] for v in res.values())}
        elif name == "decay":
            system = make_dyadic_system(*p["jrange"])
            res = {}
            for ell in p["ells"]:
                rep = hl.dyadic_kernel_decay(tag, system, system.js, p["N"], ell, p["K"], ctx.settings)
                res[f"ell{ell}"] = {str(n): {"verdict": rep.verdicts[(ell, n)], "stability_ratio": rep.ratios[(ell, n)]}
                                    for n in p["N"]}
            checks["dyadic_decay"] = {"cases": res, "pass": all(v["verdict"] == "PASS" for r in res.values()
                                                                for v in r.values())}
        else:
            raise ConfigError(f"unknown heat check {name!r}")
    return {"operator": tag, "checks": checks, "verdict": _verdict(all(c["pass"] for c in checks.values()))}


def _multiplier_fn(p: dict) -> Callable:
    if p["mu"] == "imaginary-power":
        g = p["gamma"]
        return lambda E: np.exp(1j * g * np.log(np.maximum(np.abs(np.asarray(E, float)), 1e-300)))
    if p["mu"] == "resolvent":
        return lambda E: 1.0 / (1.0 + np.asarray(E, float) ** 2)
    raise ConfigError(f"unknown multiplier {p['mu']!r}")


def _task_multiplier(ctx: Context, p: dict) -> dict:
    from . import besov as bv
    from .speccalc import spectral_multiplier

    M = ctx.machinery(p["jrange"])
    fset = bv.probe_set(M.grid, seed=ctx.config.seed)
    mu = _multiplier_fn(p)
    P = bv.BesovParams(0.5, 2.0, 2.0, 1.0)
    one = lambda E: np.ones_like(np.asarray(E, float))
    ratios_B, ratios_F, ident = [], [], 0.0
    mih = None
    for f in fset:
        g, mih = spectral_multiplier(mu, None, M, f)
        ratios_B.append(bv.besov_norm(g.values, M, P).norm / bv.besov_norm(f, M, P).norm)
        ratios_F.append(bv.triebel_norm(g.values, M, P).norm / bv.triebel_norm(f, M, P).norm)
        h, _ = spectral_multiplier(one, None, M, f)
        ident = max(ident, float(np.max(np.abs(h.values - f.values)) / np.max(np.abs(f.values))))
    a, b = p["semigroup_times"]
    semi = 0.0
    for f in fset[-5:]:
        u, _ = spectral_multiplier(lambda E: np.exp(-b * np.asarray(E, float)), None, M, f)
        u, _ = spectral_multiplier(lambda E: np.exp(-a * np.asarray(E, float)), None, M, u.values)
        w, _ = spectral_multiplier(lambda E: np.exp(-(a + b) * np.asarray(E, float)), None, M, f)
        semi = max(semi, float(np.max(np.abs(u.values - w.values)) / np.max(np.abs(w.values))))
    bound = p["C"] * max(1.0, mih["sup"])
    checks = {
        "besov_bound": {"ratios": ratios_B, "max_ratio": max(ratios_B), "C": bound, "pass": max(ratios_B) <= bound},
        "triebel_bound": {"ratios": ratios_F, "max_ratio": max(ratios_F), "C": bound, "pass": max(ratios_F) <= bound},
        "identity": {"relative_error": ident, "tol": 1e-4, "pass": ident <= 1e-4},
        "semigroup": {"relative_error": semi, "tol": p["tol"], "pass": semi <= p["tol"]},
    }
    return {"multiplier": p["mu"], "mihlin": mih, "checks": checks,
            "verdict": _verdict(all(c["pass"] for c in checks.values()))}


def _task_propagate(ctx: Context, p: dict) -> dict:
    from .speccalc import Machinery, spectral_multiplier, wave_energy, wave_propagate
    from .dyadic import make_dyadic_system

    M = ctx.machinery(p["jrange"])
    x = M.grid.points
    # slow packet: stays well inside the window up to t = 5
    f = np.exp(-x**2 / 8) * np.cos(x)
    w = M.weights
    nrm = lambda v: math.sqrt(float(np.sum(w * np.abs(v) ** 2)))
    base = nrm(spectral_multiplier(lambda E: np.ones_like(E), None, M, f)[0].values)
    schr = {}
    for t in p["times"]:
        u, _ = spectral_multiplier(lambda E, t=t: np.exp(-1j * t * np.asarray(E, float)), None, M, f)
        schr[str(t)] = abs(nrm(u.values) / base - 1)
    checks = {"schrodinger_norm": {"defects": schr, "tol": p["norm_tol"],
                                   "pass": max(schr.values()) <= p["norm_tol"]}}
    # free wave against d'Alembert
    free = Machinery(make_potential("free"), ctx.settings, grid=M.grid, system=make_dyadic_system(*p["jrange"]),
                     bound_states=[])
    u0 = lambda s: np.exp(-(s**2))
    dal = 0.0
    for t in p["times"]:
        u = wave_propagate(u0(x), np.zeros_like(x), t, free)
        ref = 0.5 * (u0(x - t) + u0(x + t))
        dal = max(dal, float(np.max(np.abs(u.values - ref))))
    checks["dalembert"] = {"error": dal, "tol": p["dalembert_tol"], "pass": dal <= p["dalembert_tol"]}
    if M.negative_mass(u0(x)) > 1e-8:
        checks["wave_energy"] = {"skipped": "initial data carry negative spectral mass", "pass": True}
    else:
        e0 = None
        drift = {}
        for t in p["times"]:
            u, ut = wave_propagate(u0(x), np.zeros_like(x), t, M, velocity=True)
            e = wave_energy(u, ut, M)
            e0 = e if e0 is None else e0
            drift[str(t)] = abs(e / e0 - 1)
        checks["wave_energy"] = {"relative_drift": drift, "tol": p["energy_tol"],
                                 "pass": max(drift.values()) <= p["energy_tol"]}
    return {"checks": checks, "verdict": _verdict(all(c["pass"] for c in checks.values()))}


RUNNERS = {
    "scattering": _task_scattering,
    "kernels": _task_kernels,
    "decay": _task_decay,
    "weighted": _task_weighted,
    "besov": _task_besov,
    "heat": _task_heat,
    "multiplier": _task_multiplier,
    "propagate": _task_propagate,
}


# --------------------------------------------------------------------------
# run
# --------------------------------------------------------------------------


@dataclass
class RunResult:
    report: dict
    timing: dict
    exit_code: int
    failed: list


def _meets(cfg: RunConfig, task: str, result: dict) -> bool:
    exp = {k: v for k, v in cfg.expect.items() if k.split(".")[0] == task}
    if not exp:
        return result["verdict"] == "PASS"
    ok = True
    for key, want in exp.items():
        node = result
        for part in key.split(".")[1:]:
            node = node["by_ell"][part] if "by_ell" in node and part in node["by_ell"] else node[part]
        ok &= node["verdict"] == want
    return ok


def run(cfg: RunConfig, out: Optional[Path] = None, settings: Optional[Settings] = None) -> RunResult:
    """Execute the scheduled tasks in dependency order and write ``report.json``."""
    settings = (settings or DEFAULT)
    if cfg.grid_scale != 1.0:
        settings = settings.scaled(cfg.grid_scale)
    settings = replace(settings, jrange=cfg.jrange)
    if out is not None:
        out = Path(out)
        try:
            out.mkdir(parents=True, exist_ok=True)
            probe = out / ".write-test"
            probe.write_text("")
            probe.unlink()
        except OSError as exc:
            raise ConfigError(f"output directory not writable: {exc}") from None
    ctx = Context(cfg, settings, out)
    if cfg.potential is not None:
        pot = dict(cfg.potential)
        ctx.V = make_potential(pot.pop("kind"), **pot)
    results, timing, failed = {}, {}, []
    error = None
    for task in cfg.tasks:
        t0 = time.perf_counter()
        try:
            res = RUNNERS[task](ctx, cfg.params[task])
        except ConfigError:
            raise
        except Exception as exc:  # numerical failure: report and stop
            error = TaskFailure(task, exc)
            results[task] = {"verdict": "ERROR", "error": str(error)}
            timing[task] = time.perf_counter() - t0
            failed.append(task)
            break
        timing[task] = time.perf_counter() - t0
        res["expectation_met"] = _meets(cfg, task, res)
        results[task] = res
        if not res["expectation_met"]:
            failed.append(task)
    report = {
        "artifact_version": __version__,
        "config": cfg.canonical(),
        "config_hash": cfg.config_hash(),
        "tasks": results,
        "files": dict(sorted(ctx.files.items())),
        "status": "ERROR" if error else ("PASS" if not failed else "FAIL"),
        "failed_tasks": failed,
    }
    if out is not None:
        atomic_write(out / "report.json", dumps(report))
        atomic_write(out / "timing.json", dumps({"config_hash": report["config_hash"], "seconds": timing}))
    return RunResult(report, timing, 0 if not failed else 1, failed)
