"""Weighted sphere-integral energy ``F(m, r, t, s)`` and its radial derivative.

With ``v_m = r^m e^ρ u`` and the weight ``e^{-2ρ}``, the four sphere integrals

    P = ∫ v_m²,  K = ∫ (∂_r v_m)²,  T = ∫ |∇_ω v_m|²,  X = ∫ v_m ∂_r v_m

give

    F = r^s [ (K - T)/2 + (q1/2) X + (c/2) P ],   c = m(m+1)/r² - t/r + q2 + λ.

``energy_dF_analytic`` evaluates the exact derivative as a sum of seven
groups (one each for T, K, two for X, three for P). Nothing is truncated, so
comparing against finite differences of ``F`` is a genuine identity test.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, GridTooCoarse, VersionParameterMissing
from .geometry import WarpedMetric
from .modes import ModeSolution, SolveConfig, TransformedMode, solve_modes, sphere_volume, transform_v
from .potential import PotentialSpec
from .profile import RadialProfile, nested_log_grid

GROUPS = tuple(f"group{k}" for k in range(1, 8))


class Version(enum.Enum):
    BASIC = "basic"
    GRADIENT = "gradient"
    MIXED = "mixed"
    GOODBOUND = "goodbound"

    @classmethod
    def parse(cls, name) -> "Version":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).lower())
        except ValueError:
            raise DomainError(f"unknown energy version {name!r}; expected one of {[v.value for v in cls]}") from None


@dataclass(frozen=True)
class EnergyConfig:
    """Everything that fixes ``F``: version, ``(m, t, s)``, ``λ`` and the weight ``ρ``.

    ``anchor`` is the radius where ``ρ = 0``; ``None`` means the first grid
    radius. ``sigma`` is required for the good-bound version only.
    """

    version: Version
    lam: float
    a4: float
    a5: float
    m: float = 0.0
    t: float = 0.5
    s: float = 0.0
    sigma: Optional[float] = None
    anchor: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "version", Version.parse(self.version))
        if self.m < 0:
            raise DomainError(f"m must be non-negative, got {self.m}")
        if not 0 <= self.t < 1:
            raise DomainError(f"t must lie in [0, 1), got {self.t}")
        if self.version is Version.GOODBOUND:
            if self.sigma is None:
                raise VersionParameterMissing("goodbound version needs sigma")
            if not 0 <= self.sigma <= 1:
                raise DomainError(f"sigma must lie in [0, 1], got {self.sigma}")
        if self.anchor is not None and not self.anchor > 0:
            raise DomainError(f"anchor must be positive, got {self.anchor}")

    @property
    def shift_weight(self) -> float:
        """Multiplier of ``a4 δ̄/(2r)`` subtracted in ``q2``."""
        if self.version is Version.BASIC:
            return 0.0
        if self.version is Version.GOODBOUND:
            return 1.0 - self.sigma
        return 1.0

    def with_(self, **changes) -> "EnergyConfig":
        return replace(self, **changes)


def rho_weight(a4: float, a5: float, anchor: float, r_min: float, r_max: float = np.inf) -> RadialProfile:
    """``ρ = (a4/2)(r - anchor) + (a5/2) ln(r/anchor)``, so ``2ρ' = a4 + a5/r``."""
    a4, a5, anchor = float(a4), float(a5), float(anchor)
    if not anchor > 0:
        raise DomainError(f"anchor must be positive, got {anchor}")
    return RadialProfile(
        lambda r: 0.5 * a4 * (r - anchor) + 0.5 * a5 * np.log(r / anchor),
        lambda r: 0.5 * a4 + 0.5 * a5 / r,
        lambda r: -0.5 * a5 / r ** 2,
        r_min=r_min, r_max=r_max, name="rho", params={"a4": a4, "a5": a5, "anchor": anchor},
    )


def rho_for(cfg: EnergyConfig, grid: np.ndarray) -> RadialProfile:
    anchor = grid[0] if cfg.anchor is None else cfg.anchor
    return rho_weight(cfg.a4, cfg.a5, anchor, grid[0], grid[-1])


@dataclass(frozen=True)
class Coefficients:
    """Radial coefficient arrays entering ``F`` and its derivative."""

    r: np.ndarray
    hess: np.ndarray  # f'/f
    dr: np.ndarray
    dr1: np.ndarray
    rho1: np.ndarray
    rho2: np.ndarray
    V0: np.ndarray
    V1: np.ndarray
    V2: np.ndarray
    dbar: np.ndarray
    dbar1: np.ndarray
    q1: np.ndarray
    q1p: np.ndarray
    q2: np.ndarray
    q2p: np.ndarray


def coefficients(cfg: EnergyConfig, M: WarpedMetric, P: PotentialSpec, rho: RadialProfile, r: np.ndarray) -> Coefficients:
    a4, a5 = cfg.a4, cfg.a5
    hess = M.hessian_ratio(r)
    dr = M.mean_curvature(r)
    dr1 = M.mean_curvature_prime(r)
    rho1, rho2 = rho(r, 1), rho(r, 2)
    V2 = P.V2(r)
    V2p = P.V2(r, 1)
    # δ̄ = r(Δr - a4 - a5/r); the q2 correction a4 δ̄/(2r) is written without the r/r
    dbar = r * (dr - a4) - a5
    dbar1 = (dr - a4) + r * dr1
    shift = 0.5 * a4 * (dr - a4 - a5 / r)
    shift1 = 0.5 * a4 * (dr1 + a5 / r ** 2)
    w = cfg.shift_weight
    q2 = -0.25 * a4 * a4 - 0.5 * a4 * a5 / r - V2 - w * shift
    q2p = 0.5 * a4 * a5 / r ** 2 - V2p - w * shift1
    if cfg.version is Version.GRADIENT:
        q1 = dr - 2 * rho1
        q1p = dr1 - 2 * rho2
    else:
        q1 = np.zeros_like(r)
        q1p = np.zeros_like(r)
    return Coefficients(
        r=r, hess=hess, dr=dr, dr1=dr1, rho1=rho1, rho2=rho2,
        V0=rho1 * dr + rho2 - rho1 * rho1, V1=P.V1(r), V2=V2,
        dbar=dbar, dbar1=dbar1, q1=q1, q1p=q1p, q2=q2, q2p=q2p,
    )


@dataclass(frozen=True)
class SphereIntegrals:
    P: np.ndarray
    K: np.ndarray
    T: np.ndarray
    X: np.ndarray

    def scaled(self, c: float) -> "SphereIntegrals":
        return SphereIntegrals(c * self.P, c * self.K, c * self.T, c * self.X)


def sphere_integrals(M: WarpedMetric, modes_v: Sequence[TransformedMode]) -> SphereIntegrals:
    """``(P, K, T, X)`` with weight ``e^{-2ρ} f^{n-1} ω_{n-1}`` summed over modes."""
    if not modes_v:
        raise DomainError("no modes given")
    r = modes_v[0].grid
    rho = modes_v[0].rho
    f = M.f(r)
    # combine in logs: e^{-2ρ} and f^{n-1} can each overflow on their own
    W = sphere_volume(M.n) * np.exp((M.n - 1) * np.log(f) - 2 * rho(r))
    P = W * sum(mv.v ** 2 for mv in modes_v)
    K = W * sum(mv.vp ** 2 for mv in modes_v)
    T = W * sum((mv.nu / f ** 2) * mv.v ** 2 for mv in modes_v)
    X = W * sum(mv.v * mv.vp for mv in modes_v)
    return SphereIntegrals(P, K, T, X)


@dataclass(frozen=True)
class EnergyCurve:
    cfg: EnergyConfig
    grid: np.ndarray
    F: np.ndarray
    integrals: SphereIntegrals
    dF_analytic: Optional[np.ndarray] = None
    dF_fd: Optional[np.ndarray] = None
    groups: dict = field(default_factory=dict)

    def table(self) -> dict[str, np.ndarray]:
        nan = np.full_like(self.grid, np.nan)
        cols = {"r": self.grid, "F": self.F,
                "dF_analytic": nan if self.dF_analytic is None else self.dF_analytic,
                "dF_fd": nan if self.dF_fd is None else self.dF_fd}
        for name in GROUPS:
            cols[name] = self.groups.get(name, nan)
        cols.update(P=self.integrals.P, K=self.integrals.K, T=self.integrals.T, X=self.integrals.X)
        return cols


def _check_transform(cfg: EnergyConfig, modes_v: Sequence[TransformedMode]) -> np.ndarray:
    if not modes_v:
        raise DomainError("no modes given")
    grid = modes_v[0].grid
    for mv in modes_v:
        if mv.m != cfg.m:
            raise DomainError(f"modes transformed with m = {mv.m}, config has m = {cfg.m}")
        if mv.rho is not modes_v[0].rho or mv.grid is not grid and not np.array_equal(mv.grid, grid):
            raise DomainError("modes transformed inconsistently")
        if mv.source.lam != cfg.lam:
            raise DomainError(f"modes solved at λ = {mv.source.lam}, config has λ = {cfg.lam}")
    rp = modes_v[0].rho.params
    if (rp.get("a4"), rp.get("a5")) != (float(cfg.a4), float(cfg.a5)):
        raise DomainError("ρ was built with different (a4, a5) than the config")
    if cfg.anchor is not None and rp.get("anchor") != float(cfg.anchor):
        raise DomainError("ρ anchor differs from the config")
    return grid


def _F(cfg: EnergyConfig, c: Coefficients, I: SphereIntegrals) -> np.ndarray:
    r, m = c.r, cfg.m
    cm = m * (m + 1) / r ** 2 - cfg.t / r + c.q2 + cfg.lam
    return r ** cfg.s * (0.5 * (I.K - I.T) + 0.5 * c.q1 * I.X + 0.5 * cm * I.P)


def energy_F(cfg: EnergyConfig, M: WarpedMetric, P: PotentialSpec, modes_v: Sequence[TransformedMode]) -> EnergyCurve:
    grid = _check_transform(cfg, modes_v)
    c = coefficients(cfg, M, P, modes_v[0].rho, grid)
    I = sphere_integrals(M, modes_v)
    return EnergyCurve(cfg, grid, _F(cfg, c, I), I)


def derivative_groups(cfg: EnergyConfig, c: Coefficients, I: SphereIntegrals) -> dict[str, np.ndarray]:
    """The seven groups of ``∂F/∂r``, evaluated exactly."""
    r, m, t, s, lam = c.r, cfg.m, cfg.t, cfg.s, cfg.lam
    rs = r ** s
    rs1 = rs / r
    mm = m * (m + 1)
    gap = c.dr - 2 * c.rho1  # Δr - 2ρ'
    V = c.V1 + c.V2
    return {
        "group1": rs * (c.hess - s / (2 * r) + c.rho1 - c.dr / 2 + c.q1 / 2) * I.T,
        "group2": (2 * m * rs1 - 0.5 * rs * gap + 0.5 * c.q1 * rs + 0.5 * s * rs1) * I.K,
        "group3": (rs * (c.V0 + V + c.q2 - t / r) + rs1 * m * gap) * I.X,
        "group4": (0.5 * s * rs1 * c.q1 + m * rs1 * c.q1 + 0.5 * rs * c.q1p) * I.X,
        "group5": (0.5 * (s - 2) * rs1 / r ** 2 * mm - 0.5 * (s - 1) * t * rs1 / r
                   + 0.5 * rs * c.q2p + 0.5 * s * rs1 * c.q2 + 0.5 * lam * s * rs1) * I.P,
        "group6": 0.5 * rs * gap * (mm / r ** 2 - t / r + c.q2 + lam) * I.P,
        "group7": -0.5 * rs * c.q1 * (mm / r ** 2 - (m / r) * gap - c.V0 - V + lam) * I.P,
    }


def energy_dF_analytic(cfg: EnergyConfig, M: WarpedMetric, P: PotentialSpec,
                       modes_v: Sequence[TransformedMode]) -> EnergyCurve:
    grid = _check_transform(cfg, modes_v)
    c = coefficients(cfg, M, P, modes_v[0].rho, grid)
    I = sphere_integrals(M, modes_v)
    groups = derivative_groups(cfg, c, I)
    dF = sum(groups[name] for name in GROUPS)
    return EnergyCurve(cfg, grid, _F(cfg, c, I), I, dF_analytic=dF, groups=groups)


def _fd_weights(x: np.ndarray, centers: np.ndarray, offsets: Sequence[int]) -> np.ndarray:
    """First-derivative weights on non-uniform stencils (one row per center)."""
    k = len(offsets)
    h = np.stack([x[centers + o] - x[centers] for o in offsets], axis=-1)
    # rows of the Taylor matrix: h^p / p!
    fact = np.cumprod([1.0] + list(range(1, k)))
    A = h[:, None, :] ** np.arange(k)[None, :, None] / fact[None, :, None]
    rhs = np.zeros((centers.size, k))
    rhs[:, 1] = 1.0
    return np.linalg.solve(A, rhs[..., None])[..., 0]


def finite_difference(x, y) -> np.ndarray:
    """Fourth-order centered differences; second order next to and at the ends.

    Raises
    ------
    GridTooCoarse
        With fewer than five points.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 5:
        raise GridTooCoarse(f"need at least 5 grid points, got {x.size}")
    if x.shape != y.shape:
        raise DomainError("x and y must have the same shape")
    out = np.empty_like(y)
    idx = np.arange(2, x.size - 2)
    wts = _fd_weights(x, idx, (-2, -1, 0, 1, 2))
    out[idx] = sum(wts[:, j] * y[idx + o] for j, o in enumerate((-2, -1, 0, 1, 2)))
    near = np.array([1, x.size - 2])
    wts = _fd_weights(x, near, (-1, 0, 1))
    out[near] = sum(wts[:, j] * y[near + o] for j, o in enumerate((-1, 0, 1)))
    for i, offs in ((0, (0, 1, 2)), (x.size - 1, (-2, -1, 0))):
        w = _fd_weights(x, np.array([i]), offs)[0]
        out[i] = sum(w[j] * y[i + o] for j, o in enumerate(offs))
    return out


def energy_dF_fd(curve: EnergyCurve) -> np.ndarray:
    return finite_difference(curve.grid, curve.F)


def energy_curve(cfg: EnergyConfig, M: WarpedMetric, P: PotentialSpec, modes: Sequence[ModeSolution],
                 with_fd: bool = True) -> EnergyCurve:
    """Transform the modes for ``cfg`` and evaluate ``F``, its analytic derivative and (optionally) FD."""
    rho = rho_for(cfg, modes[0].grid)
    curve = energy_dF_analytic(cfg, M, P, transform_v(modes, rho, cfg.m))
    if with_fd:
        curve = replace(curve, dF_fd=energy_dF_fd(curve))
    return curve


@dataclass(frozen=True)
class IdentityReport:
    cfg: EnergyConfig
    grid: np.ndarray
    rel_error: np.ndarray
    refine: int
    curve: EnergyCurve

    @property
    def max_rel_error(self) -> float:
        return float(np.nanmax(self.rel_error))

    def as_dict(self) -> dict:
        return {"version": self.cfg.version.value, "sigma": self.cfg.sigma, "m": self.cfg.m, "t": self.cfg.t,
                "s": self.cfg.s, "refine": self.refine, "max_rel_error": self.max_rel_error}


def local_scale(values: np.ndarray, half_width: int = 2) -> np.ndarray:
    """Running max of ``values`` over a centered window."""
    pad = np.pad(values, half_width, mode="edge")
    win = np.lib.stride_tricks.sliding_window_view(pad, 2 * half_width + 1)
    return win.max(axis=1)


def identity_error(curve: EnergyCurve) -> np.ndarray:
    """Pointwise ``|dF_analytic - dF_fd|`` over the local scale of ``|F|/r + |dF|``; NaN at the two outer points per end."""
    scale = local_scale(np.abs(curve.F) / curve.grid + np.abs(curve.dF_analytic))
    err = np.abs(curve.dF_analytic - curve.dF_fd) / np.where(scale > 0, scale, 1.0)
    err[:2] = err[-2:] = np.nan
    return err


def derivative_identity_check(
    cfg: EnergyConfig,
    M: WarpedMetric,
    P: PotentialSpec,
    solve: SolveConfig,
    refine: int = 64,
    modes: Optional[Sequence[ModeSolution]] = None,
) -> IdentityReport:
    """Compare analytic and finite-difference ``∂F/∂r`` at the reporting grid.

    Modes are solved on a log grid ``refine`` times finer than the reporting
    grid (``solve.points_per_decade``); the fourth-order differences taken
    there are sampled back at every ``refine``-th point. At 64 points per
    decade alone the stencil truncation error at ``r ~ 40`` is of order 0.1,
    which would swamp the identity.
    """
    fine, pick = nested_log_grid(solve.r_start, solve.r_end, solve.points_per_decade, refine)
    if modes is None:
        modes = solve_modes(M, P, replace(solve, grid=fine))
    elif not np.array_equal(modes[0].grid, fine):
        raise DomainError("supplied modes are not on the refined identity grid")
    curve = energy_curve(cfg, M, P, modes)
    err = identity_error(curve)
    # the reporting endpoints are only reachable by one-sided stencils
    coarse_err = err[pick].copy()
    coarse_err[0] = coarse_err[-1] = np.nan
    return IdentityReport(cfg, fine[pick], coarse_err, refine, curve)


# -- initial energy and large-m evaluation ----------------------------------------


def _require_q1_zero(cfg: EnergyConfig) -> None:
    if cfg.version is Version.GRADIENT:
        raise DomainError("this decomposition assumes q1 = 0; the gradient version has q1 = Δr - 2ρ'")


def initial_energy_decomposition(
    cfg: EnergyConfig,
    m0: float,
    M: WarpedMetric,
    P: PotentialSpec,
    modes: Sequence[ModeSolution],
) -> dict[str, np.ndarray]:
    """Split ``F(m0, r, t, 0)`` into ``r^{2m0} F(0, r, 0, 0)`` plus two correction terms.

    With ``v = e^ρ u`` (``m = 0``) and weighted integrals ``P``, ``X``:

        second = (m0 r^{2m0} / 2r) [2X + (Δr - 2ρ')P]
        third  = (r^{2m0}/2) [(2m0² + m0)/r² - t/r - (m0/r)(Δr - 2ρ')] P

    Returns the three summands, their sum and the directly evaluated
    ``F(m0, r, t, 0)``.
    """
    _require_q1_zero(cfg)
    if m0 < 0:
        raise DomainError(f"m0 must be non-negative, got {m0}")
    grid = modes[0].grid
    rho = rho_for(cfg, grid)
    base_cfg = cfg.with_(m=0.0, t=0.0, s=0.0)
    base = energy_F(base_cfg, M, P, transform_v(modes, rho, 0.0))
    direct = energy_F(cfg.with_(m=float(m0), s=0.0), M, P, transform_v(modes, rho, float(m0)))
    c = coefficients(base_cfg, M, P, rho, grid)
    r = grid
    gap = c.dr - 2 * c.rho1
    r2m = r ** (2 * m0)
    I = base.integrals
    first = r2m * base.F
    second = m0 * r2m / (2 * r) * (2 * I.X + gap * I.P)
    third = 0.5 * r2m * ((2 * m0 ** 2 + m0) / r ** 2 - cfg.t / r - (m0 / r) * gap) * I.P
    return {"r": r, "first": first, "second": second, "third": third,
            "sum": first + second + third, "direct": direct.F}


def scaled_F(cfg: EnergyConfig, m: float, c: Coefficients, I0: SphereIntegrals) -> np.ndarray:
    """``F(m, r, t, s) / r^{s+2m}`` from the ``m = 0`` integrals; finite for any ``m``."""
    r = c.r
    K = I0.K + 2 * (m / r) * I0.X + (m / r) ** 2 * I0.P
    X = I0.X + (m / r) * I0.P
    cm = m * (m + 1) / r ** 2 - cfg.t / r + c.q2 + cfg.lam
    return 0.5 * (K - I0.T) + 0.5 * c.q1 * X + 0.5 * cm * I0.P


def case_decomposition(cfg: EnergyConfig, M: WarpedMetric, P: PotentialSpec,
                       modes_v: Sequence[TransformedMode]) -> dict[str, np.ndarray]:
    """Leading-order split of ``∂F/∂r`` for the ``q1 = 0`` versions, plus the exact remainder.

    The five leading terms multiply ``T``, ``K``, ``X`` and ``P`` (the last
    split into its λ-part and its ``m(m+1)/r²`` part); ``residual`` is the
    exact derivative minus their sum, so the pieces always add up. How the
    residual scales with ``m`` shows whether the dropped remainders are
    uniform in ``m``.
    """
    _require_q1_zero(cfg)
    curve = energy_dF_analytic(cfg, M, P, modes_v)
    c = coefficients(cfg, M, P, modes_v[0].rho, curve.grid)
    I = curve.integrals
    r, m, s, t, a4 = c.r, cfg.m, cfg.s, cfg.t, cfg.a4
    rs1 = r ** (s - 1)
    d = c.dbar
    mixed = cfg.shift_weight  # 0 reproduces the basic split, 1 the mixed one
    case3_extra = (1 - mixed) * d * a4 / 2
    case4_extra = -mixed * a4 * c.dbar1 / 4
    V2p = P.V2(r, 1)
    cases = {
        "case1": rs1 * (r * c.hess - s / 2 - d / 2) * I.T,
        "case2": rs1 * (2 * m - d / 2 + s / 2) * I.K,
        "case3": rs1 * (r * c.V1 + case3_extra - t + d * m / r) * I.X,
        "case4": rs1 * ((cfg.lam - a4 * a4 / 4) * (s / 2 + d / 2) - r * V2p / 2 + case4_extra) * I.P,
        "case5": rs1 * (m * (m + 1) / r ** 2) * ((s - 2) / 2 + d / 2) * I.P,
    }
    cases["residual"] = curve.dF_analytic - sum(cases.values())
    cases["dF"] = curve.dF_analytic
    cases["r"] = r
    return cases
