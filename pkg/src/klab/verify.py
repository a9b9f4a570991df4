"""Scenario checks: derivative positivity, initial positivity, hypotheses and growth."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .energy import (EnergyConfig, Version, coefficients, derivative_identity_check, energy_dF_analytic,
                     initial_energy_decomposition, local_scale, rho_for, scaled_F, sphere_integrals)
from .errors import ConstraintViolated, SphereNormVanishes, TailTooShort, WitnessNotFound
from .geometry import GeometryAsymptotics, WarpedMetric, extract_asymptotics, metric_from_family
from .io import SCHEMA_VERSION
from .modes import (ModeSolution, SolveConfig, SphereNorms, TransformedMode, modes_table, solve_modes,
                    sphere_norms, transform_v)
from .potential import (PotentialAsymptotics, PotentialSpec, builtin_family, extract_potential_asymptotics,
                        manufactured_potential)
from .profile import expression_profile, nested_log_grid
from .thresholds import (ThresholdReport, basic_threshold, cor_hessian_bound, cor_mixed_curvature_bound,
                         goodbound_threshold, gradient_threshold, mixed_threshold)

POSITIVE_RTOL = 1e-10
NORM_FLOOR = 1e-12
M0_CAP = 2 ** 20


def _config_dict(cfg: EnergyConfig) -> dict:
    return {"version": cfg.version.value, "lambda": cfg.lam, "a4": cfg.a4, "a5": cfg.a5, "m": cfg.m,
            "t": cfg.t, "s": cfg.s, "sigma": cfg.sigma, "anchor": cfg.anchor}


@dataclass(frozen=True)
class MonotonicityReport:
    config: dict
    r_from: float
    r_end: float
    first_positive_radius: Optional[float]
    violations: list
    energy_floor: float

    @property
    def passed(self) -> bool:
        return not self.violations

    def as_dict(self) -> dict:
        return {"config": self.config, "r_from": self.r_from, "r_end": self.r_end,
                "first_positive_radius": self.first_positive_radius,
                "violations": [[r, d] for r, d in self.violations[:50]],
                "violation_count": len(self.violations), "energy_floor": self.energy_floor,
                "passed": self.passed}


def check_monotone_F(cfg: EnergyConfig, M: WarpedMetric, P: PotentialSpec,
                     modes_v: Sequence[TransformedMode], r_from: float) -> MonotonicityReport:
    """Scan ``∂F/∂r`` on ``[r_from, r_end]``.

    A point counts as positive when ``dF > -1e-10`` times the local scale of
    ``|F|``. ``first_positive_radius`` is the smallest grid radius from which
    positivity holds to the end of the grid (``None`` if the last point fails).
    """
    curve = energy_dF_analytic(cfg, M, P, modes_v)
    r, F, dF = curve.grid, curve.F, curve.dF_analytic
    ok = dF > -POSITIVE_RTOL * local_scale(np.abs(F))
    first = None
    if ok[-1]:
        bad = np.flatnonzero(~ok)
        first = float(r[bad[-1] + 1] if bad.size else r[0])
    tail = r >= r_from * (1 - 1e-12)
    violations = [(float(x), float(d)) for x, d, good in zip(r[tail], dF[tail], ok[tail]) if not good]
    floor = float(F[tail].min()) if np.any(tail) else math.nan
    return MonotonicityReport(_config_dict(cfg), float(r_from), float(r[-1]), first, violations, floor)


@dataclass(frozen=True)
class Witness:
    m0: int
    R0: float
    F_scaled: float
    log10_F: float
    trials: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"m0": self.m0, "R0": self.R0, "F_over_R0_pow_2m0": self.F_scaled, "log10_F": self.log10_F,
                "trials": self.trials}


def initial_positivity(cfg: EnergyConfig, M: WarpedMetric, P: PotentialSpec,
                       modes: Sequence[ModeSolution], R0: float) -> Witness:
    """Smallest power of two ``m0`` with ``F(m0, R0, t, 0) > 0``.

    ``R0`` is moved to the nearest grid radius. ``F`` is evaluated divided by
    ``R0^{2m0}`` so large ``m0`` cannot overflow.

    Raises
    ------
    SphereNormVanishes
        If ``M(R0)² ≤ 1e-12 max M²`` (numeric stand-in for unique continuation).
    WitnessNotFound
        If no ``m0 ≤ 2^20`` works.
    """
    grid = modes[0].grid
    i = int(np.argmin(np.abs(grid - R0)))
    norms = sphere_norms(M, modes)
    scale = float(np.max(norms.M2))
    if not norms.M2[i] > NORM_FLOOR * scale:
        raise SphereNormVanishes(f"sphere norm at r = {grid[i]:.6g} is {norms.M2[i]:.3g} (scale {scale:.3g})")
    at = [mode_at(mode, i) for mode in modes]
    rho = rho_for(cfg, grid)
    base = cfg.with_(m=0.0, s=0.0)
    I0 = sphere_integrals(M, transform_v(at, rho, 0.0))
    c = coefficients(base, M, P, rho, at[0].grid)
    trials = []
    m0 = 1
    while m0 <= M0_CAP:
        val = float(scaled_F(base, m0, c, I0)[0])
        trials.append([m0, val])
        if val > 0:
            r = float(grid[i])
            return Witness(m0, r, val, math.log10(val) + 2 * m0 * math.log10(r), trials)
        m0 *= 2
    raise WitnessNotFound(f"F(m0, {grid[i]:.6g}, t, 0) <= 0 for every m0 up to {M0_CAP}")


def mode_at(mode: ModeSolution, index) -> ModeSolution:
    """Mode restricted to ``grid[index]`` (an int or a slice)."""
    sl = slice(index, index + 1) if isinstance(index, (int, np.integer)) else index
    return ModeSolution(mode.l, mode.nu, mode.n, mode.lam, mode.grid[sl], mode.u[sl], mode.up[sl], mode.upp[sl])


@dataclass(frozen=True)
class GrowthReport:
    mu: float
    tail_start: float
    tail_end: float
    slope: float
    slope_stderr: float
    margin: float
    min_over_tail: float
    value_at_start: float

    @property
    def band(self) -> tuple[float, float]:
        return self.slope - 2 * self.slope_stderr, self.slope + 2 * self.slope_stderr

    @property
    def passed(self) -> bool:
        return self.slope >= -self.mu + self.margin

    def as_dict(self) -> dict:
        lo, hi = self.band
        return {"mu": self.mu, "tail_start": self.tail_start, "tail_end": self.tail_end, "slope": self.slope,
                "slope_stderr": self.slope_stderr, "slope_band": [lo, hi], "margin": self.margin,
                "threshold_slope": -self.mu + self.margin, "min_over_tail": self.min_over_tail,
                "value_at_start": self.value_at_start, "passed": self.passed}


def check_growth(norms: SphereNorms, mu: float, tail_start: float, margin: float = 0.05) -> GrowthReport:
    """Least-squares slope of ``log(M² + N²)`` against ``log r`` on the tail.

    Passes when the slope is at least ``-μ + margin``, the finite-window
    stand-in for ``r^μ (M² + N²)`` being unbounded.
    """
    r = norms.grid
    if r[-1] < 10 * tail_start * (1 - 1e-12):
        raise TailTooShort(f"tail [{tail_start}, {r[-1]}] spans less than a decade")
    tail = r >= tail_start * (1 - 1e-12)
    x = np.log(r[tail])
    total = norms.M2[tail] + norms.N2[tail]
    y = np.log(total)
    design = np.column_stack([np.ones_like(x), x])
    coef, res, *_ = np.linalg.lstsq(design, y, rcond=None)
    dof = max(x.size - 2, 1)
    resid = y - design @ coef
    sigma2 = float(resid @ resid) / dof
    stderr = math.sqrt(sigma2 / float(np.sum((x - x.mean()) ** 2)))
    weighted = r[tail] ** mu * total
    return GrowthReport(float(mu), float(r[tail][0]), float(r[-1]), float(coef[1]), stderr, float(margin),
                        float(weighted.min()), float(weighted[0]))


@dataclass(frozen=True)
class HypothesisCheck:
    name: str
    ok: bool
    detail: str

    def as_dict(self) -> dict:
        return {"name": self.name, "ok": self.ok, "detail": self.detail}


@dataclass(frozen=True)
class HypothesisReport:
    checks: tuple
    threshold: Optional[ThresholdReport]

    @property
    def passed(self) -> bool:
        return all(c.ok for c in self.checks)

    @property
    def failed(self) -> list[str]:
        return [c.name for c in self.checks if not c.ok]

    def as_dict(self) -> dict:
        return {"passed": self.passed, "failed": self.failed, "checks": [c.as_dict() for c in self.checks],
                "threshold": None if self.threshold is None else self.threshold.as_dict()}


def version_threshold(version: Version, geo: GeometryAsymptotics, pot: PotentialAsymptotics, mu: float,
                      n: int) -> ThresholdReport:
    if version is Version.BASIC:
        return basic_threshold(pot.a1, pot.a2, geo.a4, mu, geo.delta, geo.a3)
    if version is Version.GRADIENT:
        return gradient_threshold(pot.a1, pot.a2, geo.a4, mu, geo.delta1, geo.delta2, geo.a3)
    if version is Version.MIXED:
        return mixed_threshold(pot.a1, pot.a2, geo.a4, mu, geo.delta, geo.delta1, geo.a3)
    return goodbound_threshold(n, geo.A)


def check_hypotheses(version: Version, geo: GeometryAsymptotics, pot: PotentialAsymptotics, lam: float,
                     mu: float, n: int) -> HypothesisReport:
    """Finite-tail versions of the hypotheses behind the chosen energy version.

    ``r V1`` must not grow across the tail (late max at most twice the early
    one), ``|V2|`` must be below 0.1 on the last dyadic window, the theorem's
    constraints must hold and ``λ`` must exceed its threshold. The good-bound
    version applies to the free Laplacian only.
    """
    version = Version.parse(version)
    checks = [
        HypothesisCheck("V1_short_range", pot.rv1_late <= 2 * pot.rv1_early + 1e-12,
                        f"max|rV1| early {pot.rv1_early:.6g}, late {pot.rv1_late:.6g}"),
        HypothesisCheck("V2_small", pot.v2_late <= 0.1, f"max|V2| on the last window {pot.v2_late:.6g}"),
    ]
    if version is Version.GOODBOUND:
        free = pot.a1 == 0 and pot.a2 == 0 and pot.v2_sup == 0
        checks.append(HypothesisCheck("free_laplacian", free, "good-bound threshold assumes V = 0"))
    threshold = None
    try:
        threshold = version_threshold(version, geo, pot, mu, n)
    except ConstraintViolated as exc:
        checks.append(HypothesisCheck("constraints", False, str(exc)))
    else:
        checks.append(HypothesisCheck("constraints", True,
                                      ", ".join(f"{c.name} ({c.margin:.6g})" for c in threshold.constraints)))
        checks.append(HypothesisCheck("lambda_above_threshold", threshold.excludes(lam),
                                      f"lambda {lam:.17g} vs lambda_star {threshold.lambda_star:.17g}"))
    return HypothesisReport(tuple(checks), threshold)


# -- scenario pipeline ------------------------------------------------------------


def build_metric(cfg) -> WarpedMetric:
    m = cfg.metric
    return metric_from_family(m.family, m.n, m.r_min, m.r_max, m.params)


def build_potential(cfg, M: WarpedMetric) -> PotentialSpec:
    p = cfg.potential
    if p.family == "manufactured":
        u = expression_profile(p.u, M.f.r_min, M.r_max, name="u")
        return manufactured_potential(M, u, cfg.solve.lam)
    return builtin_family(p.family, p.params, cfg.metric.r_min, cfg.metric.r_max, p.split)


def solve_config(cfg, grid=None) -> SolveConfig:
    s = cfg.solve
    return SolveConfig(s.lam, cfg.r_start, cfg.r_end, s.l_max, s.abs_tol, s.rel_tol, s.initial,
                       s.points_per_decade, grid)


def scenario_asymptotics(cfg, M: WarpedMetric, P: PotentialSpec) -> tuple[GeometryAsymptotics, PotentialAsymptotics]:
    """Measured tail constants, with any values declared under ``[asymptotics]`` taking precedence."""
    tail = cfg.verify.tail_start
    geo = extract_asymptotics(M, tail, cfg.metric.a4_hint, cfg.metric.a5_hint)
    pot = extract_potential_asymptotics(P, tail, cfg.r_end)
    over = cfg.asymptotics
    geo_keys = {"a3", "a4", "a5", "delta", "delta1", "delta2", "A"}
    if over.keys() & geo_keys:
        changes = {k: v for k, v in over.items() if k in geo_keys}
        changes.update({f"{k}_source": "override" for k in ("a4", "a5") if k in over})
        geo = replace(geo, **changes)
    if over.keys() & {"a1", "a2"}:
        pot = replace(pot, **{k: v for k, v in over.items() if k in ("a1", "a2")})
    return geo, pot


def all_thresholds(geo: GeometryAsymptotics, pot: PotentialAsymptotics, mu: float, n: int) -> dict:
    """Every applicable bound side by side; failures carry the violated constraint."""
    out = {}
    for version in Version:
        try:
            out[version.value] = version_threshold(version, geo, pot, mu, n).as_dict()
        except ConstraintViolated as exc:
            out[version.value] = {"error": str(exc)}
    for name, func in (("cor3", cor_hessian_bound), ("cor4", cor_mixed_curvature_bound)):
        try:
            out[name] = func(n, geo.A).as_dict()
        except ConstraintViolated as exc:
            out[name] = {"error": str(exc)}
    return out


def decomposition_error(parts: dict) -> float:
    scale = np.abs(parts["first"]) + np.abs(parts["second"]) + np.abs(parts["third"])
    return float(np.max(np.abs(parts["sum"] - parts["direct"]) / np.where(scale > 0, scale, 1.0)))


@dataclass
class ScenarioResult:
    summary: dict
    tables: dict


def run_scenario(cfg) -> ScenarioResult:
    """Full pipeline for one scenario: asymptotics, thresholds, energy identity, monotonicity, growth.

    Verdicts: ``fail`` when the derivative identity breaks, or when the
    hypotheses hold but monotonicity or growth fails; ``hypotheses-not-met``
    when some hypothesis fails (growth is then reported, not asserted);
    ``pass`` otherwise.
    """
    M = build_metric(cfg)
    P = build_potential(cfg, M)
    ver = cfg.verify
    fine, pick = nested_log_grid(cfg.r_start, cfg.r_end, cfg.solve.points_per_decade, ver.fd_refine)
    fine_modes = solve_modes(M, P, solve_config(cfg, fine))
    modes = [mode_at(mode, pick) for mode in fine_modes]
    grid = modes[0].grid
    geo, pot = scenario_asymptotics(cfg, M, P)
    lam, mu, n = cfg.solve.lam, ver.mu, cfg.metric.n
    e = cfg.energy
    ecfg = EnergyConfig(e.version, lam, geo.a4, geo.a5, e.m, e.t, e.s, e.sigma, e.anchor)

    hyp = check_hypotheses(e.version, geo, pot, lam, mu, n)

    identity = derivative_identity_check(ecfg, M, P, solve_config(cfg), ver.fd_refine, modes=fine_modes)
    identity_ok = identity.max_rel_error <= ver.identity_tol
    curve = identity.curve
    coarse_curve = {k: v[pick] for k, v in curve.table().items()}
    coarse_curve["rel_error"] = identity.rel_error

    decomposition = {}
    if e.version is not Version.GRADIENT:
        for m0 in ver.decomposition_m0:
            parts = initial_energy_decomposition(ecfg, m0, M, P, modes)
            decomposition[repr(float(m0))] = decomposition_error(parts)

    r_from = ver.monotone_from if ver.monotone_from is not None else ver.tail_start
    rho = rho_for(ecfg, grid)
    mono_cfg = ecfg.with_(m=0.0, t=0.0, s=mu * (1 - 1e-3))
    mono = check_monotone_F(mono_cfg, M, P, transform_v(modes, rho, 0.0), r_from)

    witness, witness_error = None, None
    try:
        witness = initial_positivity(ecfg, M, P, modes, r_from)
    except (SphereNormVanishes, WitnessNotFound) as exc:
        witness_error = f"{type(exc).__name__}: {exc}"

    positivity = None
    if e.version is not Version.GRADIENT and witness is not None:
        s0 = (2 * geo.a3 - geo.delta) * (1 - 1e-3)
        pos_cfg = ecfg.with_(m=float(witness.m0), s=s0)
        positivity = check_monotone_F(pos_cfg, M, P, transform_v(modes, rho, pos_cfg.m), r_from)

    norms = sphere_norms(M, modes)
    growth = check_growth(norms, mu, ver.tail_start, ver.growth_margin)

    if not identity_ok:
        verdict = "fail"
    elif hyp.passed:
        verdict = "pass" if (mono.passed and growth.passed) else "fail"
    else:
        verdict = "hypotheses-not-met"

    summary = {
        "schema_version": SCHEMA_VERSION,
        "scenario": cfg.as_dict(),
        "geometry": geo.as_dict(),
        "potential": pot.as_dict(),
        "hypotheses": hyp.as_dict(),
        "thresholds": all_thresholds(geo, pot, mu, n),
        "energy": {
            "config": _config_dict(ecfg),
            "identity": dict(identity.as_dict(), tolerance=ver.identity_tol, passed=identity_ok),
            "decomposition_max_rel_error": decomposition,
        },
        "monotonicity": mono.as_dict(),
        "positivity_large_s": None if positivity is None else positivity.as_dict(),
        "initial_positivity": witness.as_dict() if witness is not None else {"error": witness_error},
        "growth": growth.as_dict(),
        "checks": {"identity": identity_ok, "hypotheses": hyp.passed, "monotonicity": mono.passed,
                   "growth": growth.passed},
        "verdict": verdict,
    }
    tables = {
        "geometry": M.table(grid),
        "potential": P.table(grid),
        "modes": modes_table(modes),
        "norms": norms.table(),
        "energy": coarse_curve,
    }
    return ScenarioResult(summary, tables)
