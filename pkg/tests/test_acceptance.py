"""Acceptance gate: one PASS/FAIL line per criterion, tolerances pinned."""
import json
import time
from dataclasses import replace

import numpy as np

from klab.cli import main
from klab.config import parse_config
from klab.energy import EnergyConfig, coefficients, derivative_identity_check, rho_weight
from klab.geometry import comparison_check, curvature_metric, euclidean, hyperbolic
from klab.modes import SolveConfig, integrate_mode, solve_modes
from klab.potential import builtin_family, free, manufactured_potential
from klab.profile import expression_profile, nested_log_grid
from klab.thresholds import (cor_hessian_bound, cor_mixed_curvature_bound, goodbound_threshold,
                             gradient_s0_objective, gradient_threshold)
from klab.verify import run_scenario

R_MAX = 40.0
IDENTITY_TOL = 1e-6
VERSIONS = [("basic", None), ("gradient", None), ("mixed", None),
            ("goodbound", 0.0), ("goodbound", 0.5), ("goodbound", 1.0)]
BESSEL_INITIAL = {0: (np.sin(1.0), np.cos(1.0) - np.sin(1.0))}


def identity_scenarios():
    """(name, metric, potential, lambda, a4, a5, initial data) on [1, 40]."""
    h3 = hyperbolic(3, r_max=R_MAX)
    return [
        ("H2 free", hyperbolic(2, r_max=R_MAX), free(1.0, R_MAX), 1.0, 1.0, 0.0, None),
        ("H3 free", h3, free(1.0, R_MAX), 1.5, 2.0, 0.0, None),
        ("H3 power(0.1,1)", h3, builtin_family("power", [0.1, 1.0], 1.0, R_MAX), 1.5, 2.0, 0.0, None),
        ("H3 longrange(0.1,0.5)", h3, builtin_family("longrange", [0.1, 0.5], 1.0, R_MAX), 1.5, 2.0, 0.0, None),
        ("H3 curvature A=0.1", curvature_metric(3, "-1 + 2*A*sin(log(r))/r", 0.1, r_max=R_MAX),
         free(1.0, R_MAX), 1.5, 2.0, 0.0, None),
        ("E3 Bessel", euclidean(3, r_max=R_MAX), free(1.0, R_MAX), 1.0, 0.0, 2.0, BESSEL_INITIAL),
    ]


def test_criterion_1_derivative_identity(criterion):
    start = time.perf_counter()
    worst, where = 0.0, ""
    for name, M, P, lam, a4, a5, initial in identity_scenarios():
        solve = SolveConfig(lam, 1.0, R_MAX, l_max=0 if initial else 2, initial=initial, points_per_decade=64)
        fine, _ = nested_log_grid(1.0, R_MAX, 64, 64)
        modes = solve_modes(M, P, replace(solve, grid=fine))
        for version, sigma in VERSIONS:
            cfg = EnergyConfig(version, lam, a4, a5, m=1.0, t=0.5, s=0.5, sigma=sigma, anchor=1.0)
            err = derivative_identity_check(cfg, M, P, solve, modes=modes).max_rel_error
            if err > worst:
                worst, where = err, f"{name}/{version}" + (f"(sigma={sigma})" if sigma is not None else "")
    elapsed = time.perf_counter() - start
    ok = worst <= IDENTITY_TOL and elapsed < 10.0
    criterion(1, ok, f"derivative identity, 6 scenarios x 6 versions: max rel error {worst:.2e} "
                     f"(at {where}) <= 1e-6, runtime {elapsed:.2f} s < 10 s")
    assert ok


def test_criterion_2_ode_oracles(criterion):
    e3 = euclidean(3, r_max=50.0)
    mode = integrate_mode(e3, free(1.0, 50.0), SolveConfig(1.0, 1.0, 50.0, initial=BESSEL_INITIAL), 0)
    r = mode.grid
    # relative to the envelope 1/r, since sin r / r has zeros
    bessel = float(np.max(np.abs(mode.u - np.sin(r) / r) * r))

    M = hyperbolic(3, r_max=25.0)
    P = manufactured_potential(M, expression_profile("exp(-r)", 1.0, 25.0), 1.0)
    cfg = SolveConfig(1.0, 1.0, 25.0, initial={0: (np.exp(-1.0), -np.exp(-1.0))})
    mode = integrate_mode(M, P, cfg, 0)
    manufactured = float(np.max(np.abs(mode.u / np.exp(-mode.grid) - 1.0)))

    ok = bessel <= 1e-8 and manufactured <= 1e-6
    criterion(2, ok, f"ODE oracles: sin(r)/r rel error {bessel:.2e} <= 1e-8, "
                     f"manufactured exp(-r) rel error {manufactured:.2e} <= 1e-6")
    assert ok


def v0_remainder(a5: float) -> tuple[np.ndarray, np.ndarray]:
    M = hyperbolic(3, r_max=R_MAX)
    a4 = 2.0
    r = np.geomspace(10.0, 40.0, 200)
    cfg = EnergyConfig("basic", 1.5, a4, a5, anchor=1.0)
    c = coefficients(cfg, M, free(1.0, R_MAX), rho_weight(a4, a5, 1.0, 1.0, R_MAX), r)
    rest = c.V0 - a4 * a4 / 4 - a4 * a5 / (2 * r) - a4 * c.dbar / (2 * r)
    return r, rest


def test_criterion_3_v0_expansion(criterion):
    # with a5 = 0 the remainder vanishes identically, so the slope is measured with a5 = 1
    r, rest = v0_remainder(1.0)
    slope = float(np.polyfit(np.log(r), np.log(np.abs(rest)), 1)[0])
    _, rest0 = v0_remainder(0.0)
    vanish = float(np.max(np.abs(rest0)))
    ok = slope <= -1.9 and vanish <= 1e-12
    criterion(3, ok, f"V0 expansion on H3, r in [10, 40]: remainder log-log slope {slope:.4f} <= -1.9 "
                     f"(a5 = 1); remainder {vanish:.1e} <= 1e-12 at a5 = 0")
    assert ok


def brute_min(func, lo: float, hi: float, points: int = 1_000_000) -> float:
    return float(np.min(func(np.linspace(lo, hi, points))))


def test_criterion_4_threshold_arithmetic(criterion):
    # the runtime bound covers the threshold computations; the brute-force oracle is excluded
    elapsed = 0.0
    start = time.perf_counter()
    cor3 = cor_hessian_bound(2, 0.5).lambda_star
    cor4 = cor_mixed_curvature_bound(2, 0.5).lambda_star
    good = goodbound_threshold(2, 0.5)
    printed = (abs(cor3 - 1 / 3) <= 1e-12 and abs(cor4 - 2.25) <= 1e-12
               and abs(good.lambda_star - 1 / 3) <= 1e-12 and good.minimizer == 1.0)

    dominated, cells = True, 0
    for n in range(2, 7):
        for k in range(0, 100):
            A = 0.01 * k
            if (n - 1) * A >= 1:
                break
            cells += 1
            g = goodbound_threshold(n, A).lambda_star
            bound = min(cor_hessian_bound(n, A).lambda_star, cor_mixed_curvature_bound(n, A).lambda_star)
            dominated &= g <= bound + 1e-12
    elapsed += time.perf_counter() - start

    rng = np.random.default_rng(20240601)
    worst = 0.0
    for _ in range(100):
        a2, a4, delta1 = rng.uniform(0, 2), rng.uniform(0, 3), rng.uniform(0, 1)
        delta2, a3 = rng.uniform(0.01, 2), rng.uniform(1.1, 4)
        start = time.perf_counter()
        rep = gradient_threshold(0.0, a2, a4, 1.0, delta1, delta2, a3)
        elapsed += time.perf_counter() - start
        brute = brute_min(gradient_s0_objective(a2, a4, delta1, delta2, a3), 2.0, 2 * a3 * (1 - 1e-9))
        worst = max(worst, abs(rep.branches["min_s0"] - a4 * a4 / 4 - brute))

    ok = printed and dominated and worst <= 1e-8 and elapsed < 1.0
    criterion(4, ok, f"thresholds: cor3 {cor3!r}, cor4 {cor4!r}, goodbound {good.lambda_star!r} "
                     f"sigma* {good.minimizer!r}; domination on {cells} (n, A) cells {dominated}; "
                     f"golden vs 1e6-point brute force max abs diff {worst:.1e} <= 1e-8; "
                     f"threshold runtime {elapsed:.3f} s < 1 s")
    assert ok


def test_criterion_5_monotonicity_and_growth(criterion):
    start = time.perf_counter()
    flagship = run_scenario(parse_config("h3-free")).summary
    elapsed = time.perf_counter() - start
    sub = run_scenario(parse_config("h3-free-subthreshold")).summary
    mono = flagship["monotonicity"]
    slope = flagship["growth"]["slope"]
    ok = (mono["passed"] and mono["r_from"] == 5.0 and mono["config"]["m"] == 0.0 and mono["config"]["t"] == 0.0
          and abs(mono["config"]["s"] - 0.999) <= 1e-12
          and slope >= -0.05 and flagship["checks"]["growth"] and flagship["verdict"] == "pass"
          and sub["verdict"] == "hypotheses-not-met" and "lambda_above_threshold" in sub["hypotheses"]["failed"]
          and sub["checks"]["growth"] and elapsed < 5.0)
    criterion(5, ok, f"H3 lambda=1.5: {mono['violation_count']} dF violations beyond r=5, growth slope "
                     f"{slope:.4f} >= -0.05; lambda=0.9 verdict {sub['verdict']!r}; runtime {elapsed:.2f} s < 5 s")
    assert ok


def test_criterion_6_initial_energy_decomposition(criterion):
    summary = run_scenario(parse_config("h3-free")).summary
    errors = summary["energy"]["decomposition_max_rel_error"]
    keys = ["1.0", "4.0", "16.0"]
    worst = max(errors[k] for k in keys)
    ok = set(keys) <= set(errors) and worst <= 1e-10
    criterion(6, ok, f"initial-energy decomposition on the flagship, m0 in {{1, 4, 16}}: "
                     f"max rel error {worst:.1e} <= 1e-10")
    assert ok


def test_criterion_7_comparison_check(criterion):
    A, n = 0.5, 2
    M = curvature_metric(n, "-1 + 2*A*sin(log(r))/r", A, r0=1.0, r_max=80.0)
    rep = comparison_check(M, A, 20.0)
    ok = (rep.tail_end == 80.0 and rep.hessian_max <= A + 0.1
          and rep.curvature_derivative_max <= 4 * (n - 1) * A + 0.1)
    criterion(7, ok, f"comparison on [20, 80], A=0.5, n=2: max r|f'/f - 1| {rep.hessian_max:.4f} <= 0.6, "
                     f"max r|d(Delta r)/dr| {rep.curvature_derivative_max:.4f} <= 2.1")
    assert ok


def test_criterion_8_sweep_determinism(criterion, tmp_path, capsys):
    codes = [main(["sweep", "matrix", "--jobs", str(j), "--out", str(tmp_path / f"jobs{j}")]) for j in (1, 8)]
    capsys.readouterr()
    a, b = tmp_path / "jobs1", tmp_path / "jobs8"
    names = sorted(p.relative_to(a) for p in a.rglob("*.json"))
    same = names == sorted(p.relative_to(b) for p in b.rglob("*.json"))
    same &= all((a / p).read_bytes() == (b / p).read_bytes() for p in names)
    merged = json.loads((a / "sweep.json").read_text())
    ok = same and codes == [0, 0] and len(merged["scenarios"]) == len(names) - 1
    criterion(8, ok, f"sweep over {len(merged['scenarios'])} scenarios: {len(names)} JSON files byte-identical "
                     f"for --jobs 1 and --jobs 8 ({same}), exit codes {codes}")
    assert ok
