"""Radial profiles and the radius grids they are sampled on.

A :class:`RadialProfile` is a scalar function of ``r`` on ``[r_min, r_max]``
that also knows its first and second derivatives (either may be missing).
Closed-form profiles wrap vectorised callables; sampled profiles are
smooth interpolating splines whose derivatives are exact derivatives of the
interpolant, so the three stay consistent with one another.
"""
from __future__ import annotations

from bisect import bisect_right
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import PPoly, make_interp_spline

from .errors import DerivativeUnavailable, DomainError

Func = Callable[[np.ndarray], np.ndarray]

# relative slack on the domain ends, absorbs roundoff in generated grids
_DOMAIN_RTOL = 1e-12


class RadialProfile:
    """Scalar radial function with derivative access.

    Parameters
    ----------
    value, d1, d2 : callable
        Vectorised callables returning the value and its first and second
        radial derivatives. ``d1``/``d2`` may be ``None`` when unknown.
    r_min, r_max : float
        Closed domain. ``r_max`` may be ``inf`` for closed forms.
    name : str
        Family name, carried into reports.
    params : dict
        Family parameters, carried into reports.

    Notes
    -----
    ``profile(r, nu)`` mirrors the ``nu`` convention of scipy's piecewise
    polynomials: ``nu=0`` is the value, ``nu=1`` the first derivative.
    Radii outside the domain raise :class:`DomainError`; nothing is
    extrapolated.
    """

    def __init__(
        self,
        value: Func,
        d1: Optional[Func] = None,
        d2: Optional[Func] = None,
        *,
        r_min: float,
        r_max: float = np.inf,
        name: str = "",
        params: Optional[dict] = None,
    ):
        r_min = float(r_min)
        r_max = float(r_max)
        if not r_min > 0:
            raise DomainError(f"r_min must be positive, got {r_min}")
        if not r_max > r_min:
            raise DomainError(f"empty domain [{r_min}, {r_max}]")
        self._funcs = (value, d1, d2)
        self.r_min = r_min
        self.r_max = r_max
        self.name = name
        self.params = dict(params or {})

    def __repr__(self) -> str:
        return f"RadialProfile({self.name or 'anonymous'}, [{self.r_min:g}, {self.r_max:g}])"

    @property
    def order(self) -> int:
        """Highest derivative order available."""
        k = 0
        while k < 2 and self._funcs[k + 1] is not None:
            k += 1
        return k

    @property
    def domain(self) -> tuple[float, float]:
        return self.r_min, self.r_max

    def contains(self, r) -> bool:
        r = np.asarray(r, dtype=float)
        lo = self.r_min * (1.0 - _DOMAIN_RTOL)
        hi = self.r_max * (1.0 + _DOMAIN_RTOL)
        return bool(np.all((r >= lo) & (r <= hi)))

    def check_domain(self, r) -> None:
        if not self.contains(r):
            r = np.atleast_1d(np.asarray(r, dtype=float))
            bad = r[(r < self.r_min * (1 - _DOMAIN_RTOL)) | (r > self.r_max * (1 + _DOMAIN_RTOL)) | np.isnan(r)]
            where = bad[0] if bad.size else float("nan")
            raise DomainError(
                f"{self.name or 'profile'}: r = {where:.17g} outside [{self.r_min:.17g}, {self.r_max:.17g}]"
            )

    def __call__(self, r, nu: int = 0):
        if nu not in (0, 1, 2):
            raise ValueError(f"derivative order must be 0, 1 or 2, got {nu}")
        func = self._funcs[nu]
        if func is None:
            raise DerivativeUnavailable(f"{self.name or 'profile'} has no derivative of order {nu}")
        if np.ndim(r) == 0:
            r = float(r)
            if not (self.r_min * (1 - _DOMAIN_RTOL) <= r <= self.r_max * (1 + _DOMAIN_RTOL)):
                self.check_domain(r)
            return float(func(r))
        r = np.asarray(r, dtype=float)
        self.check_domain(r)
        return np.asarray(func(r), dtype=float) * np.ones_like(r)

    def eval(self, r):
        """Return ``(value, d1, d2)``; unavailable derivatives come back as ``None``."""
        return tuple(self(r, k) if self._funcs[k] is not None else None for k in range(3))

    def restrict(self, r_min: float, r_max: float) -> "RadialProfile":
        if r_min < self.r_min * (1 - _DOMAIN_RTOL) or r_max > self.r_max * (1 + _DOMAIN_RTOL):
            raise DomainError(f"cannot restrict [{self.r_min}, {self.r_max}] to [{r_min}, {r_max}]")
        return RadialProfile(*self._funcs, r_min=r_min, r_max=r_max, name=self.name, params=self.params)

    @classmethod
    def from_values(
        cls,
        r: Sequence[float],
        value: Sequence[float],
        left: Sequence[tuple[int, float]],
        right: Sequence[tuple[int, float]],
        *,
        degree: int = 7,
        name: str = "sampled",
        params: Optional[dict] = None,
    ) -> "RadialProfile":
        """Interpolating spline through sampled values with derivative end conditions.

        ``left`` and ``right`` hold ``(order, value)`` pairs, ``(degree - 1)/2``
        per end. A degree-7 spline is C6, so the first and second derivatives
        have no kinks at the knots. Piecewise Hermite interpolation of sampled
        derivatives would instead turn sampling noise into third-derivative
        jumps of order ``noise / h^3``.
        """
        r = np.asarray(r, dtype=float)
        if r.ndim != 1 or r.size < degree + 1 or np.any(np.diff(r) <= 0):
            raise DomainError(f"sample radii must be strictly increasing with at least {degree + 1} points")
        spline = make_interp_spline(r, np.asarray(value, dtype=float), k=degree, bc_type=(list(left), list(right)))
        poly = PPoly.from_spline(spline, extrapolate=False)
        funcs = [_Piecewise(poly.derivative(k) if k else poly) for k in range(3)]
        return cls(*funcs, r_min=r[0], r_max=r[-1], name=name, params=params)


class _Piecewise:
    """Piecewise polynomial with a pure-Python scalar path.

    ODE right-hand sides evaluate profiles one radius at a time, where the
    array machinery of ``PPoly.__call__`` costs far more than the arithmetic.
    """

    def __init__(self, poly: PPoly):
        self.poly = poly
        self.knots = poly.x.tolist()
        self.coeffs = poly.c.T.tolist()
        self.last = len(self.knots) - 2

    def __call__(self, r):
        if np.ndim(r):
            return self.poly(r)
        i = min(max(bisect_right(self.knots, r) - 1, 0), self.last)
        h = r - self.knots[i]
        acc = 0.0
        for c in self.coeffs[i]:
            acc = acc * h + c
        return acc


def expression_profile(
    expr: str,
    r_min: float,
    r_max: float = np.inf,
    constants: Optional[dict] = None,
    name: str = "expression",
) -> RadialProfile:
    """Profile from a sympy expression in ``r``, differentiated symbolically.

    ``constants`` binds any other names in the expression. Parsing goes
    through ``sympify``, so expressions must come from trusted input.
    """
    import sympy as sp

    constants = {k: float(v) for k, v in (constants or {}).items()}
    r = sp.Symbol("r", positive=True)
    names = {k: sp.Symbol(k) for k in constants}
    try:
        parsed = sp.sympify(expr, locals={"r": r, **names})
    except (sp.SympifyError, SyntaxError, TypeError) as exc:
        raise DomainError(f"cannot parse expression {expr!r}: {exc}") from exc
    parsed = parsed.subs({names[k]: v for k, v in constants.items()})
    unknown = parsed.free_symbols - {r}
    if unknown:
        raise DomainError(f"expression {expr!r} has unknown symbols {sorted(map(str, unknown))}")
    funcs = [sp.lambdify(r, sp.diff(parsed, r, k), "numpy") for k in range(3)]

    def wrap(fn):
        return lambda x: fn(x) + 0.0 * x

    return RadialProfile(*(wrap(fn) for fn in funcs), r_min=r_min, r_max=r_max, name=name,
                         params={"expr": expr, **constants})


def constant(c: float, r_min: float, r_max: float = np.inf, name: str = "constant") -> RadialProfile:
    c = float(c)
    return RadialProfile(
        lambda r: np.full_like(r, c, dtype=float) if np.ndim(r) else c,
        lambda r: np.zeros_like(r, dtype=float) if np.ndim(r) else 0.0,
        lambda r: np.zeros_like(r, dtype=float) if np.ndim(r) else 0.0,
        r_min=r_min,
        r_max=r_max,
        name=name,
        params={"c": c},
    )


def log_grid(r_min: float, r_max: float, per_decade: int = 64) -> np.ndarray:
    """Log-spaced grid with at least ``per_decade`` points per decade and exact endpoints."""
    if not 0 < r_min < r_max:
        raise DomainError(f"bad grid range [{r_min}, {r_max}]")
    n = int(np.ceil(per_decade * np.log10(r_max / r_min))) + 1
    grid = np.geomspace(r_min, r_max, max(n, 2))
    grid[0], grid[-1] = r_min, r_max
    return grid


def nested_log_grid(r_min: float, r_max: float, per_decade: int = 64, refine: int = 1) -> tuple[np.ndarray, slice]:
    """Fine log grid plus the slice selecting the ``per_decade`` reporting points.

    Every ``refine``-th fine point is a reporting point, so quantities computed
    once on the fine grid can be emitted at reporting resolution.
    """
    coarse = log_grid(r_min, r_max, per_decade)
    refine = int(refine)
    if refine < 1:
        raise ValueError("refine must be >= 1")
    fine = np.geomspace(r_min, r_max, (coarse.size - 1) * refine + 1)
    fine[0], fine[-1] = r_min, r_max
    return fine, slice(None, None, refine)


def tail_grid(start: float, end: float, per_decade: int = 256, max_step: Optional[float] = 0.05) -> np.ndarray:
    """Sampling grid for suprema over a tail.

    Log spacing alone under-resolves oscillatory profiles far out, so the grid
    is merged with a uniform one of spacing ``max_step`` (when affordable).
    """
    grid = log_grid(start, end, per_decade)
    if max_step is not None and (end - start) / max_step <= 2_000_000:
        grid = np.union1d(grid, np.arange(start, end, max_step))
    return grid
