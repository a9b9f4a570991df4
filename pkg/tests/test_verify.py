from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose

from klab.config import parse_config
from klab.energy import EnergyConfig, energy_F, rho_for
from klab.errors import SphereNormVanishes, TailTooShort
from klab.geometry import euclidean, exp_power, extract_asymptotics, hyperbolic
from klab.modes import ModeSolution, SolveConfig, SphereNorms, solve_modes, sphere_norms, sphere_volume, transform_v
from klab.potential import builtin_family, extract_potential_asymptotics, free, manufactured_potential
from klab.profile import expression_profile, log_grid
from klab.verify import (build_metric, build_potential, check_growth, check_hypotheses, check_monotone_F,
                         initial_positivity, run_scenario, scenario_asymptotics)


def monotone_report(h3, modes, lam):
    cfg = EnergyConfig("basic", lam, 2.0, 0.0, m=0.0, t=0.0, s=0.999)
    rho = rho_for(cfg, modes[0].grid)
    return check_monotone_F(cfg, h3, free(1.0, 40.0), transform_v(modes, rho, 0.0), 5.0)


def test_monotone_above_threshold(h3, h3_modes):
    rep = monotone_report(h3, h3_modes, 1.5)
    assert rep.passed and rep.violations == []
    assert rep.first_positive_radius <= 5.0


def test_monotone_below_threshold_reports_violations(h3):
    modes = solve_modes(h3, free(1.0, 40.0), SolveConfig(0.5, 1.0, 40.0, l_max=2))
    rep = monotone_report(h3, modes, 0.5)
    assert not rep.passed
    assert len(rep.violations) > 0


def test_first_positive_radius_flat_closed_form():
    # f ≡ 1 and V ≡ λ make u ≡ 2 an exact l = 0 solution. With m = 1, s = 0, ρ ≡ 0:
    # F = ω(6 - 2tr + 2λr²), so dF/dr > 0 exactly for r > t/(2λ) = 25
    lam, t = 0.01, 0.5
    M = exp_power(3, 0.0, 0.0, r_max=40.0)
    P = builtin_family("power", [lam, 0.0], 1.0, 40.0)
    r = log_grid(1.0, 40.0)
    mode = ModeSolution(0, 0.0, 3, lam, r, np.full_like(r, 2.0), np.zeros_like(r), np.zeros_like(r))
    cfg = EnergyConfig("basic", lam, 0.0, 0.0, m=1.0, t=t, s=0.0)
    modes_v = transform_v([mode], rho_for(cfg, r), 1.0)
    assert_allclose(energy_F(cfg, M, P, modes_v).F, sphere_volume(3) * (6 - 2 * t * r + 2 * lam * r ** 2), rtol=1e-13)
    rep = check_monotone_F(cfg, M, P, modes_v, 1.0)
    assert rep.first_positive_radius == r[r > t / (2 * lam)][0]
    assert all(x < 25.0 for x, _ in rep.violations)


def test_witness_exists(h3, h3_modes):
    cfg = EnergyConfig("basic", 1.5, 2.0, 0.0, t=0.5)
    w = initial_positivity(cfg, h3, free(1.0, 40.0), h3_modes, 10.0)
    assert w.F_scaled > 0 and w.m0 >= 1
    assert w.m0 & (w.m0 - 1) == 0


def test_vanishing_sphere_norm():
    r = np.linspace(1.0, 20.0, 39)
    R0 = r[10]
    mode = ModeSolution(0, 0.0, 3, 1.0, r, r - R0, np.ones_like(r), np.zeros_like(r))
    cfg = EnergyConfig("basic", 1.0, 0.0, 2.0, t=0.5)
    with pytest.raises(SphereNormVanishes):
        initial_positivity(cfg, euclidean(3, r_max=20.0), free(1.0, 20.0), [mode], R0)


def test_constant_euclidean_witness_is_one():
    r = log_grid(1.0, 100.0)
    mode = ModeSolution(0, 0.0, 3, 1.0, r, np.ones_like(r), np.zeros_like(r), np.zeros_like(r))
    cfg = EnergyConfig("basic", 1.0, 0.0, 2.0, t=0.5)
    w = initial_positivity(cfg, euclidean(3, r_max=100.0), free(1.0, 100.0), [mode], 50.0)
    assert w.m0 == 1


def test_witness_monotone_in_R0(h3, h3_modes):
    cfg = EnergyConfig("basic", 1.5, 2.0, 0.0, t=0.5)
    found = [initial_positivity(cfg, h3, free(1.0, 40.0), h3_modes, R0).m0 for R0 in (2.0, 5.0, 10.0, 20.0, 35.0)]
    assert all(b <= a for a, b in zip(found, found[1:]))


def test_growth_generic_h3():
    M = hyperbolic(3, r_max=100.0)
    modes = solve_modes(M, free(1.0, 100.0), SolveConfig(1.5, 1.0, 100.0, l_max=2))
    rep = check_growth(sphere_norms(M, modes), 1.0, 10.0)
    assert rep.passed
    assert abs(rep.slope) < 0.2
    assert check_growth(sphere_norms(M, modes), 0.06, 10.0).passed


def test_growth_constant_synthetic():
    r = log_grid(1.0, 100.0)
    norms = SphereNorms(r, np.full_like(r, 3.0), np.full_like(r, 1.0), [], [])
    rep = check_growth(norms, 0.1, 10.0)
    assert abs(rep.slope) < 1e-12 and rep.passed


def test_growth_tail_too_short():
    r = log_grid(1.0, 50.0)
    norms = SphereNorms(r, np.ones_like(r), np.ones_like(r), [], [])
    with pytest.raises(TailTooShort):
        check_growth(norms, 1.0, 10.0)


@pytest.mark.parametrize("expr,lam,r_max,tail", [("exp(-r)", 1.0, 25.0, 2.0), ("exp(-2*r)", 1.5, 12.0, 1.2),
                                                 ("exp(-r)/r", 1.0, 25.0, 2.0)])
def test_manufactured_decay_violates_a_hypothesis(expr, lam, r_max, tail):
    M = hyperbolic(3, r_max=r_max)
    P = manufactured_potential(M, expression_profile(expr, 1.0, r_max), lam)
    geo = extract_asymptotics(M, tail, a4_hint=2.0, a5_hint=0.0)
    pot = extract_potential_asymptotics(P, tail)
    rep = check_hypotheses("basic", geo, pot, lam, 1.0, 3)
    assert not rep.passed
    assert rep.failed


def test_manufactured_exp_flags_threshold():
    M = hyperbolic(3, r_max=25.0)
    P = manufactured_potential(M, expression_profile("exp(-r)", 1.0, 25.0), 1.0)
    geo = extract_asymptotics(M, 2.0, a4_hint=2.0, a5_hint=0.0)
    rep = check_hypotheses("basic", geo, extract_potential_asymptotics(P, 2.0), 1.0, 1.0, 3)
    assert "lambda_above_threshold" in rep.failed


def test_run_flagship():
    summary = run_scenario(parse_config("h3-free")).summary
    assert summary["verdict"] == "pass"
    assert all(summary["checks"].values())


def test_run_subthreshold():
    summary = run_scenario(parse_config("h3-free-subthreshold")).summary
    assert summary["verdict"] == "hypotheses-not-met"
    assert "lambda_above_threshold" in summary["hypotheses"]["failed"]


def test_asymptotics_override_is_marked():
    cfg = replace(parse_config("h3-power"), asymptotics={"a4": 2.0, "delta": 0.0})
    M = build_metric(cfg)
    geo, _ = scenario_asymptotics(cfg, M, build_potential(cfg, M))
    assert geo.a4 == 2.0 and geo.a4_source == "override"
    assert geo.delta == 0.0 and geo.a5_source == "extracted"
