"""Per-mode radial solutions of ``-Δu + Vu = λu`` on a warped product.

Separating variables over unit-sphere harmonics with eigenvalues
``ν_l = l(l+n-2)`` leaves, for each ``l``, the radial equation

    u'' + Δr u' + (λ - V - ν_l/f²) u = 0.

It is integrated in Liouville form: with ``w = f^{(n-1)/2} u`` the first
derivative term drops out,

    w'' + (λ - V - ν_l/f² - Δr²/4 - Δr'/2) w = 0,

and ``w`` stays O(1) where ``u`` decays like the inverse square root of the
sphere volume. That keeps absolute tolerances meaningful out to large radii.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import gamma, pi
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DomainError, GridMismatch, StiffnessFailure
from .geometry import WarpedMetric
from .potential import PotentialSpec
from .profile import RadialProfile, log_grid


def sphere_volume(n: int) -> float:
    """``ω_{n-1}``: area of the unit sphere in ``R^n``."""
    return 2.0 * pi ** (n / 2) / gamma(n / 2)


def sphere_eigenvalue(l: int, n: int) -> float:
    return float(l * (l + n - 2))


@dataclass(frozen=True)
class SolveConfig:
    lam: float
    r_start: float
    r_end: float
    l_max: int = 0
    abs_tol: float = 1e-12
    rel_tol: float = 1e-11
    # l -> (u_l(r_start), u_l'(r_start)); None means (1, 0) for every l <= l_max
    initial: Optional[dict] = None
    points_per_decade: int = 64
    grid: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        if not 0 < self.r_start < self.r_end:
            raise DomainError(f"need 0 < r_start < r_end, got [{self.r_start}, {self.r_end}]")
        if int(self.l_max) != self.l_max or self.l_max < 0:
            raise DomainError(f"l_max must be a non-negative integer, got {self.l_max}")
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise DomainError("tolerances must be positive")
        if self.initial is not None:
            for l in self.initial:
                if int(l) != l or l < 0:
                    raise DomainError(f"initial data given for invalid mode index {l}")

    def initial_data(self) -> dict[int, tuple[float, float]]:
        if self.initial is None:
            return {l: (1.0, 0.0) for l in range(int(self.l_max) + 1)}
        return {int(l): (float(a), float(b)) for l, (a, b) in sorted(self.initial.items())}

    def radii(self) -> np.ndarray:
        if self.grid is not None:
            grid = np.asarray(self.grid, dtype=float)
            if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
                raise DomainError("grid must be strictly increasing")
            if not (np.isclose(grid[0], self.r_start, rtol=1e-14) and np.isclose(grid[-1], self.r_end, rtol=1e-14)):
                raise DomainError("grid must span [r_start, r_end]")
            return grid
        return log_grid(self.r_start, self.r_end, self.points_per_decade)


@dataclass(frozen=True)
class ModeSolution:
    l: int
    nu: float
    n: int
    lam: float
    grid: np.ndarray
    u: np.ndarray
    up: np.ndarray
    # u'' reconstructed from the ODE, not differentiated numerically
    upp: np.ndarray

    def __post_init__(self):
        if not (self.grid.shape == self.u.shape == self.up.shape == self.upp.shape):
            raise DomainError("mode arrays must share the grid shape")
        both = (self.u == 0) & (self.up == 0)
        if np.any(both):
            raise DomainError(f"mode {self.l} vanishes with its derivative at r = {self.grid[np.argmax(both)]:.6g}")

    def scaled(self, c: float) -> "ModeSolution":
        return ModeSolution(self.l, self.nu, self.n, self.lam, self.grid, c * self.u, c * self.up, c * self.upp)


def _ode_coefficient(M: WarpedMetric, P: PotentialSpec, lam: float, nu: float, r):
    """``λ - V - ν/f²``."""
    return lam - P(r) - nu / M.f(r) ** 2


def mode_second_derivative(M: WarpedMetric, P: PotentialSpec, lam: float, nu: float, r, u, up):
    return -M.mean_curvature(r) * up - _ode_coefficient(M, P, lam, nu, r) * u


def integrate_mode(
    M: WarpedMetric,
    P: PotentialSpec,
    cfg: SolveConfig,
    l: int,
    initial: Optional[tuple[float, float]] = None,
) -> ModeSolution:
    """Integrate mode ``l`` over ``[r_start, r_end]`` and sample it on ``cfg.radii()``.

    ``initial`` overrides the data stored in ``cfg``.

    Raises
    ------
    DomainError
        Zero initial data, or radii outside the metric or potential domain.
    StiffnessFailure
        If the integrator's step falls below ``1e-12 r_start`` or it gives up.
    """
    if initial is None:
        initial = cfg.initial_data().get(l, (1.0, 0.0))
    u0, u0p = map(float, initial)
    if u0 == 0 and u0p == 0:
        raise DomainError(f"mode {l}: initial data (0, 0) gives the trivial solution")
    grid = cfg.radii()
    if cfg.r_start < M.r0 * (1 - 1e-12):
        raise DomainError(f"r_start {cfg.r_start} below metric r0 {M.r0}")
    M.f.check_domain(grid)
    if not P.contains(grid):
        raise DomainError(f"grid [{grid[0]}, {grid[-1]}] outside the potential domain {P.domain}")

    n = M.n
    nu = sphere_eigenvalue(l, n)
    lam = float(cfg.lam)
    half = 0.5 * (n - 1)

    def q(r):
        f, f1, f2 = M.f(r), M.f(r, 1), M.f(r, 2)
        k = f1 / f
        # Δr²/4 + Δr'/2 with Δr = (n-1)k, Δr' = (n-1)(f''/f - k²)
        return lam - P(r) - nu / (f * f) - half * half * k * k - half * (f2 / f - k * k)

    def rhs(r, y):
        return (y[1], -q(r) * y[0])

    r0 = grid[0]
    w0 = u0
    w0p = u0p + half * M.f(r0, 1) / M.f(r0) * u0
    sol = solve_ivp(rhs, (r0, grid[-1]), [w0, w0p], method="DOP853", dense_output=True,
                    rtol=cfg.rel_tol, atol=cfg.abs_tol)
    if sol.status != 0:
        raise StiffnessFailure(f"mode {l}: {sol.message}")
    steps = np.diff(sol.t)
    if steps.size and steps[:-1].size and steps[:-1].min() < 1e-12 * cfg.r_start:
        raise StiffnessFailure(f"mode {l}: step size collapsed to {steps[:-1].min():.3g}")
    w, wp = sol.sol(grid)
    w[0], wp[0] = w0, w0p

    logf = np.log(M.f(grid))
    envelope = np.exp(-half * (logf - logf[0]))
    kr = M.f(grid, 1) / M.f(grid)
    u = envelope * w
    up = envelope * (wp - half * kr * w)
    upp = mode_second_derivative(M, P, lam, nu, grid, u, up)
    return ModeSolution(l, nu, n, lam, grid, u, up, upp)


def solve_modes(
    M: WarpedMetric,
    P: PotentialSpec,
    cfg: SolveConfig,
    jobs: int = 1,
) -> list[ModeSolution]:
    """All modes with non-zero initial data, ordered by ``l``.

    Modes whose initial data is ``(0, 0)`` are identically zero and are left
    out. Output does not depend on ``jobs``.
    """
    data = {l: d for l, d in cfg.initial_data().items() if d != (0.0, 0.0)}
    if not data:
        raise DomainError("every mode has zero initial data")
    order = sorted(data)
    if jobs <= 1 or len(order) == 1:
        return [integrate_mode(M, P, cfg, l, data[l]) for l in order]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda l: integrate_mode(M, P, cfg, l, data[l]), order))


def _common_grid(items: Sequence) -> np.ndarray:
    if not items:
        raise DomainError("no modes given")
    grid = items[0].grid
    for item in items[1:]:
        if item.grid.shape != grid.shape or not np.array_equal(item.grid, grid):
            raise GridMismatch(f"mode {item.l} is sampled on a different grid")
    return grid


@dataclass(frozen=True)
class SphereNorms:
    grid: np.ndarray
    M2: np.ndarray
    N2: np.ndarray
    per_mode_M2: dict
    per_mode_N2: dict

    def table(self) -> dict[str, np.ndarray]:
        return {"r": self.grid, "M2": self.M2, "N2": self.N2}


def sphere_norms(M: WarpedMetric, modes: Sequence[ModeSolution]) -> SphereNorms:
    """``M(r)²`` and ``N(r)²`` from orthonormal-harmonic mode coefficients."""
    grid = _common_grid(modes)
    weight = sphere_volume(M.n) * M.f(grid) ** (M.n - 1)
    m2 = {mode.l: weight * mode.u ** 2 for mode in modes}
    n2 = {mode.l: weight * mode.up ** 2 for mode in modes}
    return SphereNorms(grid, sum(m2.values()), sum(n2.values()), m2, n2)


@dataclass(frozen=True)
class TransformedMode:
    """``v_m = r^m e^ρ u`` for one mode, with its exact radial derivative."""

    source: ModeSolution
    m: float
    rho: RadialProfile
    v: np.ndarray
    vp: np.ndarray

    @property
    def l(self) -> int:
        return self.source.l

    @property
    def nu(self) -> float:
        return self.source.nu

    @property
    def grid(self) -> np.ndarray:
        return self.source.grid

    def with_values(self, v: np.ndarray, vp: np.ndarray) -> "TransformedMode":
        return TransformedMode(self.source, self.m, self.rho, np.asarray(v), np.asarray(vp))


def transform_v(modes: Sequence[ModeSolution], rho: RadialProfile, m: float) -> list[TransformedMode]:
    grid = _common_grid(modes)
    rho.check_domain(grid)
    factor = grid ** m * np.exp(rho(grid))
    shift = rho(grid, 1) + m / grid
    return [TransformedMode(mode, float(m), rho, factor * mode.u, factor * (mode.up + shift * mode.u)) for mode in modes]


def residual_check(
    M: WarpedMetric,
    P: PotentialSpec,
    rho: RadialProfile,
    modes_v: Sequence[TransformedMode],
    lam: float,
    m: float,
) -> float:
    """Largest scaled residual of the transformed equation for ``v_m``.

    The equation checked is

        v'' + Δr v' - (ν/f²) v - (2m/r + 2ρ') v'
            + (m(m+1)/r² + (m/r)(2ρ' - Δr) - V0 - V + λ) v = 0

    with ``V0 = ρ'Δr + ρ'' - ρ'²``. ``v''`` comes from the chain rule applied
    to the untransformed mode and its ODE-reconstructed ``u''``. Each point is
    scaled by the largest individual piece of the equation (every product of a
    coefficient with ``v``, ``v'`` or a part of ``v''``).
    """
    grid = _common_grid(modes_v)
    for mv in modes_v:
        if mv.m != m or mv.rho is not rho:
            raise DomainError("transformed modes were built with a different (rho, m)")
    r = grid
    dr = M.mean_curvature(r)
    f2 = M.f(r) ** 2
    r1, r2 = rho(r, 1), rho(r, 2)
    v0 = r1 * dr + r2 - r1 * r1
    parts = (m * (m + 1) / r ** 2, (m / r) * (2 * r1 - dr), -v0, -P(r), np.full_like(r, lam))
    cm = sum(parts)
    factor = r ** m * np.exp(rho(r))
    g = r1 + m / r
    worst = 0.0
    for mv in modes_v:
        u, up, upp = mv.source.u, mv.source.up, mv.source.upp
        vpp_parts = (upp, 2 * g * up, (g * g + r2 - m / r ** 2) * u)
        vpp = factor * sum(vpp_parts)
        terms = (vpp, dr * mv.vp, -(mv.nu / f2) * mv.v, -(2 * m / r + 2 * r1) * mv.vp, cm * mv.v)
        res = np.abs(sum(terms))
        # largest single piece before cancellation, so an exactly balanced equation is not scaled by roundoff
        pieces = [factor * x for x in vpp_parts] + list(terms[1:4]) + [x * mv.v for x in parts]
        scale = np.max(np.abs(pieces), axis=0)
        worst = max(worst, float(np.max(res / np.where(scale > 0, scale, 1.0))))
    return worst


def stencil_residual(M: WarpedMetric, P: PotentialSpec, mode: ModeSolution) -> float:
    """Mode-equation residual with ``u''`` from a three-point stencil on ``u``.

    Scaled by the local solution size, the running max of ``|u| + |u'|`` over
    five points. Only meaningful on grids fine enough for the stencil's O(h²)
    error.
    """
    r, u = mode.grid, mode.u
    h0 = r[1:-1] - r[:-2]
    h1 = r[2:] - r[1:-1]
    upp = 2 * (h0 * u[2:] - (h0 + h1) * u[1:-1] + h1 * u[:-2]) / (h0 * h1 * (h0 + h1))
    ri = r[1:-1]
    terms = (upp, M.mean_curvature(ri) * mode.up[1:-1], _ode_coefficient(M, P, mode.lam, mode.nu, ri) * u[1:-1])
    size = np.abs(u) + np.abs(mode.up)
    pad = np.pad(size, 2, mode="edge")
    scale = np.lib.stride_tricks.sliding_window_view(pad, 5).max(axis=1)[1:-1]
    return float(np.max(np.abs(sum(terms)) / scale))


def wronskian(M: WarpedMetric, a: ModeSolution, b: ModeSolution) -> np.ndarray:
    """``f^{n-1}(u_a u_b' - u_b u_a')``, constant in ``r`` for two solutions of one mode equation."""
    grid = _common_grid([a, b])
    return M.f(grid) ** (M.n - 1) * (a.u * b.up - b.u * a.up)


def modes_table(modes: Sequence[ModeSolution]) -> dict[str, np.ndarray]:
    """Long-format columns ``(r, l, u_l, u_l_prime)``."""
    return {
        "r": np.concatenate([mode.grid for mode in modes]),
        "l": np.concatenate([np.full(mode.grid.size, mode.l) for mode in modes]),
        "u_l": np.concatenate([mode.u for mode in modes]),
        "u_l_prime": np.concatenate([mode.up for mode in modes]),
    }
