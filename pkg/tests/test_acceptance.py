"""Acceptance criteria 1-12; each test prints one PASS/FAIL line."""
import json
import math
import time
import warnings

import numpy as np
import pytest

from speclp import Grid1D, make_potential
from speclp.cli import main as cli_main
from speclp.dyadic import make_dyadic_system
from speclp.hermlag import (dyadic_kernel_decay, gaussian_bound_check, laguerre_kernel, laguerre_series,
                            mehler_kernel, mehler_series)
from speclp.jost import check_weighted_bounds, reconstruct_m_from_B, solve_m, solve_marchenko
from speclp.oracles import free_kernel, ode_jost
from speclp.recipes import recipe_names
from speclp.runner import run, validate
from speclp.scattering import ScatteringData, asymptotics_report, detect_resonance, scattering_pipeline
from speclp.speccalc import assemble_kernel, kernel_oracle

NONFREE = ["square", "well", "poschl_teller", "bump", "gauss"]


@pytest.fixture
def record(request, capsys):
    def rec(n, ok, detail):
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines = getattr(request.config, "acceptance_lines", {})
        lines[n] = line
        request.config.acceptance_lines = lines
        with capsys.disabled():
            print("\n" + line)
        return ok
    return rec


@pytest.fixture(scope="session")
def suite(tmp_path_factory):
    """The full recipe suite, run twice into separate directories."""
    runs = []
    for r in range(2):
        root = tmp_path_factory.mktemp(f"suite{r}")
        t0 = time.perf_counter()
        codes = {tag: cli_main(["recipe", tag, "--out", str(root / tag)]) for tag in recipe_names()}
        runs.append({"root": root, "codes": codes, "seconds": time.perf_counter() - t0})
    return runs


def _report(suite, tag):
    return json.loads((suite[0]["root"] / tag / "report.json").read_text())


def test_criterion_01_free_oracle(record):
    t0 = time.perf_counter()
    S = make_dyadic_system(-5, 5)
    g = Grid1D.from_spacing(-10, 10, 0.1)
    V = make_potential("free")
    err = 0.0
    for j in S.js:
        for ell in (0, 1):
            K = assemble_kernel(V, None, None, S.phi_fn(j), ell, xgrid=g, band=S.band(j))
            ref = free_kernel(S.phi_fn(j), g.points, g.points, S.band(j)[1], ell)
            err = max(err, float(np.max(np.abs(K.K - ref))))
    dt = time.perf_counter() - t0
    ok = err <= 1e-8 and dt <= 60
    record(1, ok, f"free kernels j in [-5,5], ell in {{0,1}}: sup error {err:.2e} (tol 1e-8), {dt:.1f} s (limit 60 s)")
    assert ok


def test_criterion_02_formula_coincidence(record, scattered):
    S = make_dyadic_system(-3, 3)
    g = Grid1D.from_spacing(-5, 5, 0.25)
    errs = {}
    for name in ("well", "square", "bump"):
        V = make_potential(name, **{"well": dict(V0=1, L=1), "square": dict(c=2, a=0, b=1),
                                    "bump": dict(A=1, a=-1, b=1)}[name])
        Sd = scattered(name)[2]
        e = 0.0
        for j in S.js:
            K = assemble_kernel(V, Sd, None, S.phi_fn(j), xgrid=g, band=S.band(j))
            ref = kernel_oracle(V, Sd, None, S.phi_fn(j), xgrid=g, band=S.band(j))
            e = max(e, float(np.max(np.abs(K.K - ref.K))))
        errs[name] = e
    ok = max(errs.values()) <= 1e-4
    record(2, ok, "assemble_kernel vs ODE eigenfunction oracle, j in [-3,3]: "
           + ", ".join(f"{k} {v:.1e}" for k, v in errs.items()) + " (tol 1e-4)")
    assert ok


def test_criterion_03_jost_cross_validation(record, builtins):
    x = np.array([-3.0, -0.7, 0.0, 0.5, 2.0])
    k = np.array([-6.0, -1.0, -0.2, 0.1, 0.8, 3.0, 12.0])
    vol, mar = {}, {}
    for name in NONFREE:
        V = builtins[name]
        J = solve_m(V, x, k)
        vol[name] = max(float(np.max(np.abs(J.m_plus - ode_jost(V, x, k, "+")[0]))),
                        float(np.max(np.abs(J.m_minus - ode_jost(V, x, k, "-")[0]))))
        e = 0.0
        for side in "+-":
            B = solve_marchenko(V, side)
            xs = B.a + B.h * np.array([0, 150, 400, 700])
            xs = xs if side == "+" else -xs
            Jx = solve_m(V, xs, k, side=side)
            m = Jx.m_plus if side == "+" else Jx.m_minus
            e = max(e, float(np.max(np.abs(reconstruct_m_from_B(B, xs, k) - m))))
        mar[name] = e
    ok = max(vol.values()) <= 1e-6 and max(mar.values()) <= 1e-4
    record(3, ok, f"Volterra vs ODE max {max(vol.values()):.1e} (tol 1e-6); "
           f"Marchenko vs Volterra max {max(mar.values()):.1e} (tol 1e-4) over {', '.join(NONFREE)}")
    assert ok


def test_criterion_04_scattering_identities(record, scattered):
    unit, asym = {}, {}
    for name in NONFREE:
        S = scattered(name)[2]
        sel = (np.abs(S.k) >= 0.05) & (np.abs(S.k) <= 20)
        t2 = np.abs(S.t[sel]) ** 2
        unit[name] = float(max(np.max(np.abs(t2 + np.abs(S.r_plus[sel]) ** 2 - 1)),
                               np.max(np.abs(t2 + np.abs(S.r_minus[sel]) ** 2 - 1))))
        rep = asymptotics_report(S, 5.0)
        asym[name] = (rep["k_t_minus_1"]["sup"], rep["pass"])
    ok = max(unit.values()) <= 1e-6 and all(p for _, p in asym.values())
    record(4, ok, f"max unitarity defect {max(unit.values()):.1e} (tol 1e-6); sup |k(t-1)| on [5,50]: "
           + ", ".join(f"{k} {v[0]:.2f}" for k, v in asym.items()))
    assert ok


def test_criterion_05_resonance_dichotomy(record, scattered, kgrid):
    agree = {}
    _, _, free = scattering_pipeline(make_potential("free"), kgrid)
    agree["free"] = detect_resonance(free)[1]["agree"]
    sq = scattered("square")[2]
    agree["square"] = sq.diagnostics["resonance"]["agree"]
    kp = np.geomspace(0.05, 20, 60)
    k = np.concatenate([-kp[::-1], kp])
    wells = {}
    for label, V0 in (("pi/2", math.pi**2 / 4), ("pi", math.pi**2)):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            _, _, S = scattering_pipeline(make_potential("well", V0=V0, L=1.0), k, bound_states=False)
        wells[label] = S
        agree[f"well {label}"] = S.diagnostics["resonance"]["agree"]
    nu_half = abs(wells["pi/2"].nu)
    ok = free.resonant and nu_half <= 1e-3 and abs(sq.nu) >= 0.1 and all(agree.values())
    record(5, ok, f"free resonant={free.resonant}; well sqrt(V0)L=pi/2 |nu|={nu_half:.3g} (need <= 1e-3); "
           f"square |nu|={abs(sq.nu):.3g}; inf|t| agreement {all(agree.values())}; "
           f"[info] well sqrt(V0)L=pi |nu|={abs(wells['pi'].nu):.1e}, resonant={wells['pi'].resonant}")
    assert ok


def test_criterion_06_bound_states(record, scattered):
    bs = scattered("poschl_teller")[2].bound_states
    kappa = bs[0].kappa if bs else float("nan")
    cos = 0.0
    if bs:
        x = bs[0].eigenfunction.grid.points
        e = bs[0].eigenfunction.values
        ref = 1 / np.cosh(x)
        cos = float(abs(np.dot(e, ref)) / (np.linalg.norm(e) * np.linalg.norm(ref)))
    ok = len(bs) == 1 and abs(kappa - 1) <= 1e-6 and cos > 1 - 1e-8
    record(6, ok, f"poschl_teller(1): {len(bs)} state(s), |kappa-1|={abs(kappa - 1):.1e}, cosine 1-{1 - cos:.1e}")
    assert ok


def test_criterion_07_decay_dichotomy(record, suite, tmp_path):
    cfg = validate({"run": {"name": "bump-decay", "tasks": ["scattering", "kernels", "decay"], "jrange": [-5, 5]},
                    "potential": {"kind": "bump", "A": 1, "a": -1, "b": 1}, "decay": {"N": [1, 2, 4]}})
    bump = run(cfg, tmp_path).report["tasks"]["decay"]["by_ell"]
    bump_ratio = max(v["stability_ratio"] for e in bump.values() for v in e["by_N"].values())
    pt = _report(suite, "counterexample")["tasks"]["decay"]["by_ell"]
    growth = {n: v["cN"]["-5"] / v["cN"]["-1"] for n, v in pt["ell1"]["by_N"].items()}
    pt0 = max(v["stability_ratio"] for v in pt["ell0"]["by_N"].values())
    ok = bump_ratio <= 10 and min(growth.values()) >= 100 and pt0 <= 10
    record(7, ok, f"bump max ratio {bump_ratio:.2f} (<= 10); poschl_teller ell=1 growth c(-5)/c(-1) "
           + ", ".join(f"N={n}: {g:.2f}" for n, g in growth.items())
           + f" (need >= 100); poschl_teller ell=0 max ratio {pt0:.2f} (<= 10)")
    assert ok


def test_criterion_08_marchenko_bounds(record):
    res = {}
    for name, params in (("square", dict(c=2, a=0, b=1)), ("bump", {})):
        B = solve_marchenko(make_potential(name, **params))
        for s in (0, 1, 2):
            for d in ("none", "dx", "dy"):
                res[(name, s, d)] = check_weighted_bounds(B, s, d)
    worst = max(r["growth"] for r in res.values())
    ok = all(r["pass"] and math.isfinite(r["sup"]) for r in res.values())
    record(8, ok, f"square and bump, s in {{0,1,2}}, B and first derivatives: max growth under window "
           f"doubling {worst:.1%} (limit 20%)")
    assert ok


def test_criterion_09_hermite_laguerre(record):
    series = {}
    x = np.linspace(-4, 4, 81)
    X, Y = np.meshgrid(x, x, indexing="ij")
    xl = np.linspace(0.05, 4, 80)
    XL, YL = np.meshgrid(xl, xl, indexing="ij")
    for t in (0.1, 1.0):
        series[f"mehler t={t}"] = float(np.max(np.abs(mehler_kernel(1, t, X, Y) - mehler_series(t, X, Y, 60))))
        for a in (0.5, 1.0, 2.5):
            series[f"laguerre{a} t={t}"] = float(np.max(np.abs(laguerre_kernel(a, t, XL, YL)
                                                               - laguerre_series(a, t, XL, YL, 60))))
    refl = max(float(np.max(np.abs(laguerre_kernel(0.5, t, XL, YL)
                                   - (mehler_kernel(1, t, XL, YL) - mehler_kernel(1, t, XL, -YL)))))
               for t in (0.1, 0.5, 1.0, 3.0))
    gauss = {}
    for tag in ("hermite-1", "hermite-2", "laguerre-0.5", "laguerre-1", "laguerre-2.5"):
        for ell in (0, 1):
            gauss[f"{tag} ell={ell}"] = gaussian_bound_check(tag, ell, 0.2)["pass"]
    rep = dyadic_kernel_decay("hermite-1", make_dyadic_system(1, 6), range(1, 7), N=(2,))
    dec = rep.ratios[(0, 2)]
    worst = max(series, key=series.get)
    ok = max(series.values()) <= 1e-7 and refl <= 1e-8 and all(gauss.values()) and dec <= 10
    record(9, ok, f"series K=60 worst {worst} {series[worst]:.1e} (tol 1e-7); odd reflection {refl:.1e} "
           f"(tol 1e-8); Gaussian bounds {sum(gauss.values())}/{len(gauss)} PASS; Hermite dyadic ratio {dec:.2f}")
    assert ok


def test_criterion_10_function_spaces(record, tmp_path):
    verdicts, failing = {}, []
    for name, pot in (("free", {"kind": "free"}), ("bump", {"kind": "bump", "A": 1, "a": -1, "b": 1}),
                      ("gauss", {"kind": "gauss", "A": 1, "sigma": 1})):
        cfg = validate({"run": {"name": f"spaces-{name}", "tasks": ["scattering", "kernels", "besov"],
                                "jrange": [-2, 2]},
                        "potential": pot, "kernels": {"ells": [0]},
                        "besov": {"checks": ["characterization", "lifting", "sobolev", "systems", "lp"]}})
        checks = run(cfg, tmp_path / name).report["tasks"]["besov"]["checks"]
        verdicts[name] = all(c["pass"] for c in checks.values())
        failing += [f"{name}:{k}" for k, c in checks.items() if not c["pass"]]
    ok = all(verdicts.values())
    record(10, ok, "characterization B/F, lifting, sobolev, systems B/F, L-P p in {1.5,2,3} on free, bump, gauss: "
           + ("all brackets hold" if ok else "failing " + ", ".join(failing)))
    assert ok


def test_criterion_11_propagators(record, suite):
    checks = _report(suite, "m(H)F")["tasks"]["propagate"]["checks"]
    norm = max(checks["schrodinger_norm"]["defects"].values())
    dal = checks["dalembert"]["error"]
    drift = checks["wave_energy"].get("relative_drift", {})
    en = max(drift.values()) if drift else float("nan")
    ok = all(c["pass"] for c in checks.values()) and norm <= 1e-6 and dal <= 1e-4 and en <= 1e-5
    record(11, ok, f"gauss(1,3): Schrodinger norm defect {norm:.1e} (tol 1e-6), d'Alembert {dal:.1e} (tol 1e-4), "
           f"wave energy drift {en:.1e} (tol 1e-5), t in [0,5]")
    assert ok


def test_criterion_12_determinism(record, suite):
    a, b = suite
    same = all((a["root"] / t / "report.json").read_bytes() == (b["root"] / t / "report.json").read_bytes()
               for t in recipe_names())
    slow = max(a["seconds"], b["seconds"])
    codes = ", ".join(f"{t}={c}" for t, c in a["codes"].items() if c != 0)
    ok = same and slow <= 900
    record(12, ok, f"{len(recipe_names())} recipes x 2 runs: byte-identical report.json {same}; slowest suite "
           f"{slow:.0f} s (limit 900 s); nonzero exit codes: {codes or 'none'}")
    assert ok
