"""Rotationally symmetric manifolds ``g = dr^2 + f(r)^2 g_sphere``.

Everything geometric derives from the warp factor ``f``: the mean curvature
of the level spheres ``Δr = (n-1) f'/f``, the Hessian of the distance
function ``∇dr = (f'/f) ĝ`` and the radial curvature ``K_rad = -f''/f``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ConjugatePoint, DomainError, ExtractionUnstable, HypothesisViolated, UnknownFamily
from .profile import RadialProfile, expression_profile, log_grid, tail_grid

# windows whose limit estimates differ by more than this are unstable
EXTRACTION_TOL = 1e-3
WINDOW_POINTS = 65


@dataclass(frozen=True)
class WarpedMetric:
    n: int
    f: RadialProfile
    r0: float
    family: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise DomainError(f"dimension must be an integer >= 2, got {self.n}")
        if self.f.order < 2:
            raise DomainError("warp factor needs first and second derivatives")
        if not np.isfinite(self.f.r_max):
            raise DomainError("warp factor domain must be bounded")
        if not self.f.contains(self.r0):
            raise DomainError(f"r0 = {self.r0} outside warp factor domain {self.f.domain}")
        probe = log_grid(self.r0, self.r_max, 64)
        fv = self.f(probe)
        if np.any(~np.isfinite(fv)) or np.any(fv <= 0):
            bad = probe[np.argmax(~(fv > 0) | ~np.isfinite(fv))]
            raise ConjugatePoint(bad, f"warp factor not positive and finite at r = {bad:.6g}")

    @property
    def r_max(self) -> float:
        return self.f.r_max

    def warp(self, r):
        """``(f, f', f'')`` at ``r``."""
        return self.f(r), self.f(r, 1), self.f(r, 2)

    def hessian_ratio(self, r):
        """``f'/f``: the eigenvalue of ∇dr on the sphere directions."""
        return self.f(r, 1) / self.f(r)

    def mean_curvature(self, r):
        return (self.n - 1) * self.f(r, 1) / self.f(r)

    def mean_curvature_prime(self, r):
        f, f1, f2 = self.warp(r)
        k = f1 / f
        return (self.n - 1) * (f2 / f - k * k)

    def radial_curvature(self, r):
        return -self.f(r, 2) / self.f(r)

    def log_f(self, r):
        return np.log(self.f(r))

    def table(self, grid) -> dict[str, np.ndarray]:
        """Columns of the geometry CSV."""
        grid = np.asarray(grid, dtype=float)
        f, f1, f2 = self.warp(grid)
        return {
            "r": grid,
            "f": f,
            "f_prime": f1,
            "f_double_prime": f2,
            "delta_r": (self.n - 1) * f1 / f,
            "K_rad": -f2 / f,
        }


def mean_curvature(M: WarpedMetric) -> RadialProfile:
    """``Δr = (n-1) f'/f`` as a profile with its radial derivative."""
    n = M.n

    def value(r):
        return (n - 1) * M.f(r, 1) / M.f(r)

    def d1(r):
        return M.mean_curvature_prime(r)

    return RadialProfile(value, d1, r_min=M.f.r_min, r_max=M.r_max, name="mean_curvature", params={"n": n})


# -- closed-form families -----------------------------------------------------------


def euclidean(n: int, r0: float = 1.0, r_max: float = 100.0) -> WarpedMetric:
    f = RadialProfile(
        lambda r: r * 1.0,
        lambda r: np.ones_like(r) if np.ndim(r) else 1.0,
        lambda r: np.zeros_like(r) if np.ndim(r) else 0.0,
        r_min=r0, r_max=r_max, name="euclidean",
    )
    return WarpedMetric(n, f, r0, "euclidean", {})


def hyperbolic(n: int, r0: float = 1.0, r_max: float = 100.0) -> WarpedMetric:
    if r_max > 700:
        raise DomainError("sinh overflows beyond r = 700")
    f = RadialProfile(np.sinh, np.cosh, np.sinh, r_min=r0, r_max=r_max, name="hyperbolic")
    return WarpedMetric(n, f, r0, "hyperbolic", {})


def power(n: int, p: float, r0: float = 1.0, r_max: float = 100.0) -> WarpedMetric:
    p = float(p)
    f = RadialProfile(
        lambda r: r ** p,
        lambda r: p * r ** (p - 1),
        lambda r: p * (p - 1) * r ** (p - 2),
        r_min=r0, r_max=r_max, name="power", params={"p": p},
    )
    return WarpedMetric(n, f, r0, "power", {"p": p})


def exp_power(n: int, a: float, b: float, r0: float = 1.0, r_max: float = 100.0) -> WarpedMetric:
    """``f = e^{a r} r^b``, for which ``Δr = (n-1)(a + b/r)`` exactly."""
    a, b = float(a), float(b)

    def value(r):
        return np.exp(a * r) * r ** b

    def d1(r):
        return value(r) * (a + b / r)

    def d2(r):
        g = a + b / r
        return value(r) * (g * g - b / r ** 2)

    f = RadialProfile(value, d1, d2, r_min=r0, r_max=r_max, name="exp_power", params={"a": a, "b": b})
    return WarpedMetric(n, f, r0, "exp_power", {"a": a, "b": b})


def curvature_profile(expr: str, A: float, r_min: float, r_max: float = np.inf) -> RadialProfile:
    """Radial curvature from an expression in ``r`` and ``A``, e.g. ``"-1 + 2*A*sin(log(r))/r"``."""
    return expression_profile(expr, r_min, r_max, {"A": float(A)}, name="curvature")


def warp_from_curvature(
    K: RadialProfile,
    n: int,
    f0: float,
    f0_prime: float,
    grid,
    rtol: float = 1e-13,
    atol: float = 1e-13,
) -> WarpedMetric:
    """Solve the Jacobi equation ``f'' = -K f`` for the warp factor.

    Parameters
    ----------
    K : RadialProfile
        Radial curvature. Its first derivative, when available, fixes the
        third-derivative end conditions of the interpolant.
    n : int
        Manifold dimension.
    f0, f0_prime : float
        Initial data ``f(grid[0])`` and ``f'(grid[0])``.
    grid : array_like
        Strictly increasing radii (at least eight). ``f`` is sampled there and
        interpolated by a degree-7 spline (degree 5 if ``K`` has no
        derivative) with the exact end derivatives imposed.
    rtol, atol : float
        Tolerances of the DOP853 integrator. Sampling noise in ``f`` reaches
        ``f''`` through the interpolant, hence the tight defaults.

    Raises
    ------
    ConjugatePoint
        If ``f`` reaches zero.
    DomainError
        On a bad grid or non-positive ``f0``.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 8 or np.any(np.diff(grid) <= 0):
        raise DomainError("grid must be strictly increasing with at least eight points")
    if not f0 > 0:
        raise DomainError(f"f0 must be positive, got {f0}")
    K.check_domain(grid)

    def rhs(r, y):
        return (y[1], -K(r) * y[0])

    def hits_zero(r, y):
        return y[0]

    hits_zero.terminal = True
    hits_zero.direction = -1

    sol = solve_ivp(rhs, (grid[0], grid[-1]), [float(f0), float(f0_prime)], method="DOP853",
                    t_eval=grid, rtol=rtol, atol=atol, events=hits_zero)
    if sol.t_events[0].size:
        raise ConjugatePoint(sol.t_events[0][0])
    if sol.status != 0:
        raise DomainError(f"warp integration failed: {sol.message}")
    f, f1 = sol.y
    if np.any(f <= 0):
        raise ConjugatePoint(grid[np.argmax(f <= 0)])
    ends = []
    for i in (0, -1):
        k0 = K(grid[i])
        bc = [(1, f1[i]), (2, -k0 * f[i])]
        if K.order >= 1:
            # f''' = -(K f)'
            bc.append((3, -K(grid[i], 1) * f[i] - k0 * f1[i]))
        ends.append(bc)
    prof = RadialProfile.from_values(grid, f, *ends, degree=7 if K.order >= 1 else 5,
                                     name="warp", params=dict(K.params))
    params = dict(K.params, f0=float(f0), f0_prime=float(f0_prime))
    return WarpedMetric(n, prof, float(grid[0]), "curvature", params)


def curvature_metric(
    n: int,
    expr: str,
    A: float,
    r0: float = 1.0,
    r_max: float = 100.0,
    f0: Optional[float] = None,
    f0_prime: Optional[float] = None,
    step: float = 0.05,
    rtol: float = 1e-13,
    atol: float = 1e-13,
) -> WarpedMetric:
    """Warped metric from a curvature expression, started on the hyperbolic warp by default."""
    K = curvature_profile(expr, A, r0, r_max)
    f0 = np.sinh(r0) if f0 is None else f0
    f0_prime = np.cosh(r0) if f0_prime is None else f0_prime
    # uniform spacing: the warp factor varies on an O(1) scale, not a multiplicative one
    count = int(np.ceil((r_max - r0) / step)) + 1
    grid = np.linspace(r0, r_max, max(count, 8))
    return warp_from_curvature(K, n, f0, f0_prime, grid, rtol=rtol, atol=atol)


def metric_from_family(family: str, n: int, r0: float, r_max: float, params: Optional[dict] = None) -> WarpedMetric:
    params = dict(params or {})
    if family == "euclidean":
        return euclidean(n, r0, r_max)
    if family == "hyperbolic":
        return hyperbolic(n, r0, r_max)
    if family == "power":
        return power(n, params["p"], r0, r_max)
    if family == "exp_power":
        return exp_power(n, params["a"], params.get("b", 0.0), r0, r_max)
    if family == "curvature":
        return curvature_metric(n, params["expr"], params.get("A", 0.0), r0, r_max,
                                params.get("f0"), params.get("f0_prime"), params.get("step", 0.05),
                                params.get("rtol", 1e-13), params.get("atol", 1e-13))
    raise UnknownFamily(f"unknown metric family {family!r}")


# -- asymptotic constants -----------------------------------------------------------


@dataclass(frozen=True)
class GeometryAsymptotics:
    a3: float
    a4: float
    a5: float
    delta: float
    delta1: float
    A: float
    tail_start: float
    tail_end: float
    delta2: float = 0.0
    a4_source: str = "extracted"
    a5_source: str = "extracted"
    windows: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "a3": self.a3, "a4": self.a4, "a5": self.a5, "delta": self.delta,
            "delta1": self.delta1, "delta2": self.delta2, "A": self.A,
            "tail_start": self.tail_start, "tail_end": self.tail_end,
            "a4_source": self.a4_source, "a5_source": self.a5_source,
            "windows": self.windows,
        }


def _fit_intercept(r: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Least-squares fit ``y ≈ c0 + c1/r``; extrapolates to ``1/r -> 0``."""
    design = np.column_stack([np.ones_like(r), 1.0 / r])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return float(coef[0]), float(coef[1])


def _dyadic_windows(r_max: float) -> list[np.ndarray]:
    return [np.geomspace(r_max / 4, r_max / 2, WINDOW_POINTS), np.geomspace(r_max / 2, r_max, WINDOW_POINTS)]


def extract_asymptotics(
    M: WarpedMetric,
    tail_start: float,
    a4_hint: Optional[float] = None,
    a5_hint: Optional[float] = None,
    per_decade: int = 256,
) -> GeometryAsymptotics:
    """Measure the asymptotic constants of ``Δr`` and ``∇dr`` on a finite tail.

    ``a4`` and ``a5`` come from fits of ``Δr`` and ``r(Δr - a4)`` against
    ``1/r`` on the two dyadic windows ending at ``r_max``; the estimates of the
    two windows must agree to :data:`EXTRACTION_TOL`. Suprema are then taken
    over ``[tail_start, r_max]``.
    """
    if not (M.f.contains(tail_start) and tail_start >= M.r0):
        raise DomainError(f"tail_start {tail_start} outside the metric domain")
    if M.r_max < 10 * tail_start * (1 - 1e-12):
        raise DomainError(f"need a decade of radii beyond tail_start={tail_start}, r_max={M.r_max}")

    windows = {}
    if a4_hint is None:
        estimates = [_fit_intercept(w, M.mean_curvature(w))[0] for w in _dyadic_windows(M.r_max)]
        windows["a4"] = estimates
        if abs(estimates[0] - estimates[1]) > EXTRACTION_TOL:
            raise ExtractionUnstable(f"a4 window estimates {estimates} differ by more than {EXTRACTION_TOL}")
        a4 = estimates[-1]
        if a4 < 0:
            if a4 < -EXTRACTION_TOL:
                raise ExtractionUnstable(f"negative limit of the mean curvature: {a4}")
            a4 = 0.0
        a4_source = "extracted"
    else:
        a4, a4_source = float(a4_hint), "hint"

    if a5_hint is None:
        estimates = [_fit_intercept(w, w * (M.mean_curvature(w) - a4))[0] for w in _dyadic_windows(M.r_max)]
        windows["a5"] = estimates
        if abs(estimates[0] - estimates[1]) > EXTRACTION_TOL:
            raise ExtractionUnstable(f"a5 window estimates {estimates} differ by more than {EXTRACTION_TOL}")
        a5, a5_source = estimates[-1], "extracted"
    else:
        a5, a5_source = float(a5_hint), "hint"

    r = tail_grid(tail_start, M.r_max, per_decade)
    dr = M.mean_curvature(r)
    dr1 = M.mean_curvature_prime(r)
    dbar = r * (dr - a4) - a5
    dbar1 = (dr - a4) + r * dr1
    k = M.hessian_ratio(r)
    return GeometryAsymptotics(
        a3=float(np.min(r * k)),
        a4=float(a4),
        a5=float(a5),
        delta=float(np.max(np.abs(dbar))),
        delta1=float(np.max(np.abs(dbar1))),
        A=float(np.max(r * np.abs(k - 1.0))),
        tail_start=float(tail_start),
        tail_end=float(M.r_max),
        a4_source=a4_source,
        a5_source=a5_source,
        windows=windows,
    )


@dataclass(frozen=True)
class ComparisonReport:
    A: float
    n: int
    tail_start: float
    tail_end: float
    hessian_max: float
    hessian_bound: float
    curvature_derivative_max: float
    curvature_derivative_bound: float
    slack: float

    @property
    def hessian_margin(self) -> float:
        return self.hessian_bound + self.slack - self.hessian_max

    @property
    def curvature_derivative_margin(self) -> float:
        return self.curvature_derivative_bound + self.slack - self.curvature_derivative_max

    @property
    def passed(self) -> bool:
        return self.hessian_margin >= 0 and self.curvature_derivative_margin >= 0

    def as_dict(self) -> dict:
        return {
            "A": self.A, "n": self.n, "tail_start": self.tail_start, "tail_end": self.tail_end,
            "hessian_max": self.hessian_max, "hessian_bound": self.hessian_bound,
            "curvature_derivative_max": self.curvature_derivative_max,
            "curvature_derivative_bound": self.curvature_derivative_bound,
            "slack": self.slack, "hessian_margin": self.hessian_margin,
            "curvature_derivative_margin": self.curvature_derivative_margin, "passed": self.passed,
        }


def comparison_check(
    M: WarpedMetric,
    A: float,
    tail_start: float,
    per_decade: int = 256,
    pinch_tol: float = 1e-9,
) -> ComparisonReport:
    """Numerically check the Hessian and mean-curvature-derivative bounds implied by pinched curvature.

    Under ``-1 - 2A/r <= K_rad <= -1 + 2A/r < 0`` on the tail and ``f' >= 0``
    at ``tail_start``, measures ``max r|f'/f - 1|`` against ``A`` and
    ``max r|∂Δr/∂r|`` against ``4(n-1)A``, each with slack
    ``0.1 max(A, 0.01)``.

    Raises
    ------
    HypothesisViolated
        At the first sampled radius where the pinching (or ``f' >= 0`` at the
        start) fails. ``pinch_tol`` absorbs roundoff when the bound is touched.
    """
    if not M.f.contains(tail_start):
        raise DomainError(f"tail_start {tail_start} outside the metric domain")
    if M.f(tail_start, 1) < 0:
        raise HypothesisViolated(tail_start, f"f' < 0 at r = {tail_start}: Hessian not non-negative")
    r = tail_grid(tail_start, M.r_max, per_decade)
    K = M.radial_curvature(r)
    lower = -1.0 - 2.0 * A / r
    upper = -1.0 + 2.0 * A / r
    bad = (K < lower - pinch_tol) | (K > upper + pinch_tol) | (upper >= 0)
    if np.any(bad):
        where = r[np.argmax(bad)]
        raise HypothesisViolated(where, f"curvature pinching fails at r = {where:.6g}")
    k = M.hessian_ratio(r)
    return ComparisonReport(
        A=float(A),
        n=M.n,
        tail_start=float(tail_start),
        tail_end=float(M.r_max),
        hessian_max=float(np.max(r * np.abs(k - 1.0))),
        hessian_bound=float(A),
        curvature_derivative_max=float(np.max(r * np.abs(M.mean_curvature_prime(r)))),
        curvature_derivative_bound=float(4 * (M.n - 1) * A),
        slack=0.1 * max(float(A), 0.01),
    )
