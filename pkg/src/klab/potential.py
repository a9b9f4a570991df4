"""Radial potentials ``V = V1 + V2`` and their asymptotic constants."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, UnknownFamily, ZeroCrossing
from .geometry import WarpedMetric
from .profile import RadialProfile, constant, tail_grid

ZERO_GUARD = 1e-12
V2_WARN = 0.1


def zero(r_min: float, r_max: float = np.inf) -> RadialProfile:
    return constant(0.0, r_min, r_max, name="zero")


@dataclass(frozen=True)
class PotentialSpec:
    """Short-range part ``V1`` plus differentiable long-range part ``V2``."""

    V1: RadialProfile
    V2: RadialProfile
    family: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.V2.order < 1:
            raise DomainError("V2 needs a radial derivative")

    @property
    def domain(self) -> tuple[float, float]:
        return max(self.V1.r_min, self.V2.r_min), min(self.V1.r_max, self.V2.r_max)

    def contains(self, r) -> bool:
        return self.V1.contains(r) and self.V2.contains(r)

    def __call__(self, r):
        return self.V1(r) + self.V2(r)

    def table(self, grid) -> dict[str, np.ndarray]:
        grid = np.asarray(grid, dtype=float)
        return {"r": grid, "V1": self.V1(grid), "V2": self.V2(grid), "dV2_dr": self.V2(grid, 1)}


def free(r_min: float, r_max: float = np.inf) -> PotentialSpec:
    return PotentialSpec(zero(r_min, r_max), zero(r_min, r_max), "none", {})


@dataclass(frozen=True)
class PotentialAsymptotics:
    a1: float
    a2: float
    v2_sup: float
    tail_start: float
    tail_end: float
    # suprema over the first and last dyadic sub-windows of the tail
    rv1_early: float = 0.0
    rv1_late: float = 0.0
    v2_late: float = 0.0

    def as_dict(self) -> dict:
        return {
            "a1": self.a1, "a2": self.a2, "v2_sup": self.v2_sup,
            "tail_start": self.tail_start, "tail_end": self.tail_end,
            "rv1_early": self.rv1_early, "rv1_late": self.rv1_late, "v2_late": self.v2_late,
        }


def extract_potential_asymptotics(
    P: PotentialSpec,
    tail_start: float,
    tail_end: Optional[float] = None,
    per_decade: int = 256,
) -> PotentialAsymptotics:
    """Suprema of ``|r V1|``, ``|r V2'|`` and ``|V2|`` over ``[tail_start, tail_end]``.

    ``tail_end`` defaults to the end of the potential's domain, which must
    then be finite.
    """
    end = P.domain[1] if tail_end is None else float(tail_end)
    if not np.isfinite(end):
        raise DomainError("tail_end needed for a potential on an unbounded domain")
    if not end > tail_start:
        raise DomainError(f"empty tail [{tail_start}, {end}]")
    r = tail_grid(tail_start, end, per_decade)
    if not P.contains(r):
        raise DomainError(f"tail [{tail_start}, {end}] outside the potential domain {P.domain}")
    rv1 = np.abs(r * P.V1(r))
    rv2p = np.abs(r * P.V2(r, 1))
    v2 = np.abs(P.V2(r))
    early = r <= 2 * tail_start
    late = r >= end / 2
    out = PotentialAsymptotics(
        a1=float(rv1.max()),
        a2=float(rv2p.max()),
        v2_sup=float(v2.max()),
        tail_start=float(tail_start),
        tail_end=end,
        rv1_early=float(rv1[early].max()),
        rv1_late=float(rv1[late].max()),
        v2_late=float(v2[late].max()),
    )
    if out.v2_sup > V2_WARN:
        warnings.warn(f"sup |V2| = {out.v2_sup:.3g} on the tail; V2 should tend to 0", RuntimeWarning, stacklevel=2)
    return out


def manufactured_potential(M: WarpedMetric, u: RadialProfile, lam: float, per_decade: int = 256) -> PotentialSpec:
    """Potential for which the radial function ``u`` solves ``-Δu + Vu = λu``.

    ``V = λ + (u'' + Δr u')/u``, stored as ``V1`` with ``V2 = 0``.

    Raises
    ------
    ZeroCrossing
        If ``|u| < 1e-12 max|u|`` at some sampled radius, or ``u`` changes sign.
    """
    if u.order < 2:
        raise DomainError("manufactured solution needs two derivatives")
    r_min, r_max = M.f.r_min, M.r_max
    u.check_domain([r_min, r_max])
    r = tail_grid(r_min, r_max, per_decade)
    uv = u(r)
    scale = np.max(np.abs(uv))
    small = np.abs(uv) < ZERO_GUARD * scale
    flips = np.sign(uv[1:]) != np.sign(uv[:-1])
    if np.any(small) or np.any(flips):
        where = r[np.argmax(small)] if np.any(small) else r[1:][np.argmax(flips)]
        raise ZeroCrossing(where, f"manufactured solution vanishes near r = {where:.6g}")
    lam = float(lam)

    def value(x):
        return lam + (u(x, 2) + M.mean_curvature(x) * u(x, 1)) / u(x)

    V1 = RadialProfile(value, r_min=r_min, r_max=r_max, name="manufactured", params={"lambda": lam})
    return PotentialSpec(V1, zero(r_min, r_max), "manufactured", {"lambda": lam, "u": u.name})


def _power_profile(c: float, p: float, r_min: float, r_max: float, name: str) -> RadialProfile:
    return RadialProfile(
        lambda r: c * r ** (-p),
        lambda r: -p * c * r ** (-p - 1),
        lambda r: p * (p + 1) * c * r ** (-p - 2),
        r_min=r_min, r_max=r_max, name=name, params={"c": c, "p": p},
    )


def _oscillatory_profile(c: float, w: float, r_min: float, r_max: float) -> RadialProfile:
    def d1(r):
        return c * (w * np.cos(w * r) / r - np.sin(w * r) / r ** 2)

    def d2(r):
        s, co = np.sin(w * r), np.cos(w * r)
        return c * (-w * w * s / r - 2 * w * co / r ** 2 + 2 * s / r ** 3)

    return RadialProfile(lambda r: c * np.sin(w * r) / r, d1, d2, r_min=r_min, r_max=r_max,
                         name="oscillatory", params={"c": c, "omega": w})


FAMILIES = {"power": "V1", "oscillatory": "V1", "longrange": "V2", "none": None}


def builtin_family(
    name: str,
    params: Sequence[float] = (),
    r_min: float = 1.0,
    r_max: float = np.inf,
    split: Optional[str] = None,
) -> PotentialSpec:
    """Named closed-form potential.

    ``power(c, p)``: ``V1 = c/r^p``; ``oscillatory(c, ω)``: ``V1 = c sin(ωr)/r``;
    ``longrange(c, p)``: ``V2 = c/r^p``; ``none``: ``V = 0``. ``split``
    ("V1" or "V2") overrides the part the profile is assigned to.
    """
    if name not in FAMILIES:
        raise UnknownFamily(f"unknown potential family {name!r}; expected one of {sorted(FAMILIES)}")
    params = [float(x) for x in params]
    if name == "none":
        if params:
            raise DomainError("family 'none' takes no parameters")
        return free(r_min, r_max)
    if len(params) != 2:
        raise DomainError(f"family {name!r} takes two parameters, got {len(params)}")
    c, p = params
    if name == "oscillatory":
        prof = _oscillatory_profile(c, p, r_min, r_max)
    else:
        prof = _power_profile(c, p, r_min, r_max, name)
    part = split or FAMILIES[name]
    if part not in ("V1", "V2"):
        raise DomainError(f"split must be 'V1' or 'V2', got {part!r}")
    rest = zero(r_min, r_max)
    pair = (prof, rest) if part == "V1" else (rest, prof)
    return PotentialSpec(*pair, family=name, params={"params": params, "split": part})

