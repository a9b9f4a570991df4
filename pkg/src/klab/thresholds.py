"""Closed-form eigenvalue-exclusion thresholds and their hypothesis constraints.

Every bound is strict: eigenvalues ``λ > lambda_star`` are excluded.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

from .errors import ConstraintViolated

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class Constraint:
    name: str
    margin: float

    @property
    def ok(self) -> bool:
        return self.margin > 0

    def as_dict(self) -> dict:
        return {"name": self.name, "margin": self.margin, "ok": self.ok}


@dataclass(frozen=True)
class ThresholdReport:
    theorem: str
    inputs: dict
    constraints: tuple
    lambda_star: float
    branches: dict = field(default_factory=dict)
    minimizer: Optional[float] = None
    minimizer_name: Optional[str] = None
    strict: bool = True

    @property
    def constraints_ok(self) -> bool:
        return all(c.ok for c in self.constraints)

    def excludes(self, lam: float) -> bool:
        return lam > self.lambda_star

    def as_dict(self) -> dict:
        return {
            "theorem": self.theorem,
            "inputs": dict(self.inputs),
            "constraints": [c.as_dict() for c in self.constraints],
            "constraints_ok": self.constraints_ok,
            "lambda_star": self.lambda_star,
            "branches": dict(self.branches),
            "minimizer": self.minimizer,
            "minimizer_name": self.minimizer_name,
            "excludes": "lambda > lambda_star" if self.strict else "lambda >= lambda_star",
        }


def _require(constraints) -> None:
    for c in constraints:
        if not c.ok:
            raise ConstraintViolated(c.name, c.margin)


def basic_constraints(mu: float, delta: float, a3: float) -> tuple[Constraint, ...]:
    """``μ > δ``, ``2a3 > μ + δ`` and ``a3 > 1 + δ``, with margins."""
    return (
        Constraint("mu > delta", mu - delta),
        Constraint("2*a3 > mu + delta", 2 * a3 - mu - delta),
        Constraint("a3 > 1 + delta", a3 - 1 - delta),
    )


def basic_threshold(a1: float, a2: float, a4: float, mu: float, delta: float, a3: float) -> ThresholdReport:
    cons = basic_constraints(mu, delta, a3)
    _require(cons)
    base = a4 * a4 / 4
    b1 = base + a2 / (mu - delta) + 0.25 * (2 * a1 + delta * a4) ** 2 / (mu * mu - delta * delta)
    b2 = base + a2 / (2 * (a3 - delta))
    inputs = dict(a1=a1, a2=a2, a4=a4, mu=mu, delta=delta, a3=a3)
    return ThresholdReport("basic", inputs, cons, max(b1, b2), {"weighted": b1, "hessian": b2})


def golden_section(func: Callable[[float], float], lo: float, hi: float, rtol: float = 1e-10,
                   max_iter: int = 500) -> tuple[float, float]:
    """Minimize a unimodal ``func`` on ``[lo, hi]``; returns ``(x, func(x))``.

    Stops once the bracket is narrower than ``rtol * max(|x|, 1)``. The
    endpoints are compared too, so a minimum on the boundary is not lost.
    """
    a, b = float(lo), float(hi)
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = func(c), func(d)
    for _ in range(max_iter):
        if b - a <= rtol * max(abs(c), 1.0):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = func(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = func(d)
    best = min(((c, fc), (d, fd), (lo, func(lo)), (hi, func(hi))), key=lambda p: p[1])
    return best


def gradient_s0_objective(a2: float, a4: float, delta1: float, delta2: float, a3: float) -> Callable[[float], float]:
    """``s0 ↦ a2/s0 + a4 δ1/(2 s0) + δ2²/((8a3 - 4s0) s0)``; convex on ``[2, 2a3)``."""
    def obj(s0: float) -> float:
        return a2 / s0 + a4 * delta1 / (2 * s0) + delta2 * delta2 / ((8 * a3 - 4 * s0) * s0)

    return obj


def gradient_threshold(a1: float, a2: float, a4: float, mu: float, delta1: float, delta2: float,
                       a3: float) -> ThresholdReport:
    """Larger of the ``1/μ`` bound and the bound minimized over ``s0 ∈ [2, 2a3)``.

    With ``δ2 = 0`` the objective decreases in ``s0`` and its infimum sits at
    ``s0 = 2a3``; otherwise it diverges there and golden-section search is run
    on ``[2, 2a3(1 - 1e-9)]``.
    """
    cons = (Constraint("2*a3 > mu", 2 * a3 - mu), Constraint("a3 > 1", a3 - 1))
    _require(cons)
    base = a4 * a4 / 4
    b1 = base + (a2 + (2 * a1 + delta1) ** 2 / (4 * mu) + delta2 ** 2 / (8 * a3 - 4 * mu) + a4 * delta1 / 2) / mu
    obj = gradient_s0_objective(a2, a4, delta1, delta2, a3)
    if delta2 == 0:
        s0 = 2 * a3
        val = (a2 + a4 * delta1 / 2) / (2 * a3)
    else:
        s0, val = golden_section(obj, 2.0, 2 * a3 * (1 - 1e-9))
    b2 = base + val
    inputs = dict(a1=a1, a2=a2, a4=a4, mu=mu, delta1=delta1, delta2=delta2, a3=a3)
    return ThresholdReport("gradient", inputs, cons, max(b1, b2), {"fixed_mu": b1, "min_s0": b2},
                           minimizer=s0, minimizer_name="s0")


def mixed_threshold(a1: float, a2: float, a4: float, mu: float, delta: float, delta1: float,
                    a3: float) -> ThresholdReport:
    cons = basic_constraints(mu, delta, a3)
    _require(cons)
    base = a4 * a4 / 4
    b1 = base + a2 / (mu - delta) + a4 * delta1 / (2 * (mu - delta)) + a1 * a1 / (mu * mu - delta * delta)
    b2 = base + (2 * a2 + a4 * delta1) / (4 * (a3 - delta))
    inputs = dict(a1=a1, a2=a2, a4=a4, mu=mu, delta=delta, delta1=delta1, a3=a3)
    return ThresholdReport("mixed", inputs, cons, max(b1, b2), {"weighted": b1, "hessian": b2})


def _pinching(n: int, A: float) -> tuple[Constraint, ...]:
    return (Constraint("(n-1)*A < 1", 1 - (n - 1) * A),)


def _c3(n: int, A: float) -> float:
    k = n - 1
    return k ** 4 * A * A / (4 * (1 - k * k * A * A))


def _c4(n: int, A: float) -> float:
    k = n - 1
    return 2 * k * k * A / (1 - k * A)


def cor_hessian_bound(n: int, A: float) -> ThresholdReport:
    """Bound for a Hessian ``|∇dr - ĝ| ≤ A/r`` perturbation of hyperbolic space."""
    cons = _pinching(n, A)
    _require(cons)
    return ThresholdReport("cor3", {"n": n, "A": A}, cons, (n - 1) ** 2 / 4 + _c3(n, A))


def cor_mixed_curvature_bound(n: int, A: float) -> ThresholdReport:
    cons = _pinching(n, A)
    _require(cons)
    return ThresholdReport("cor4", {"n": n, "A": A}, cons, (n - 1) ** 2 / 4 + _c4(n, A))


def goodbound_threshold(n: int, A: float) -> ThresholdReport:
    """``(n-1)²/4 + min over σ ∈ [0, 1] of σ² C3 + (1 - σ) C4``, minimized in closed form."""
    cons = _pinching(n, A)
    _require(cons)
    c3, c4 = _c3(n, A), _c4(n, A)
    if c3 > 0:
        sigma = min(max(c4 / (2 * c3), 0.0), 1.0)
    else:
        sigma = 1.0
    val = (n - 1) ** 2 / 4 + sigma * sigma * c3 + (1 - sigma) * c4
    return ThresholdReport("goodbound", {"n": n, "A": A}, cons, val, {"C3": c3, "C4": c4},
                           minimizer=sigma, minimizer_name="sigma")


THEOREMS = {
    "basic": (basic_threshold, ("a1", "a2", "a4", "mu", "delta", "a3")),
    "gradient": (gradient_threshold, ("a1", "a2", "a4", "mu", "delta1", "delta2", "a3")),
    "mixed": (mixed_threshold, ("a1", "a2", "a4", "mu", "delta", "delta1", "a3")),
    "cor3": (cor_hessian_bound, ("n", "A")),
    "cor4": (cor_mixed_curvature_bound, ("n", "A")),
    "goodbound": (goodbound_threshold, ("n", "A")),
}


def evaluate(theorem: str, **constants) -> ThresholdReport:
    """Dispatch by theorem name; missing constants default to 0 (``n`` is required)."""
    func, names = THEOREMS[theorem]
    args = []
    for name in names:
        if name == "n":
            if constants.get("n") is None:
                raise ValueError(f"theorem {theorem!r} needs n")
            args.append(int(constants["n"]))
        else:
            value = constants.get(name)
            args.append(0.0 if value is None else float(value))
    return func(*args)
