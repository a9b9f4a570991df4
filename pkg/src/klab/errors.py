"""Exception hierarchy shared by all klab modules."""
from __future__ import annotations


class KlabError(Exception):
    """Base class for every error raised by klab."""


class DomainError(KlabError, ValueError):
    """A radius or grid lies outside the region where a quantity is defined."""


class DerivativeUnavailable(KlabError, ValueError):
    """A profile was asked for a derivative it does not carry."""


class _AtRadius(KlabError):
    def __init__(self, r: float, message: str = ""):
        self.r = float(r)
        super().__init__(message or f"{type(self).__name__} at r = {self.r:.17g}")


class ConjugatePoint(_AtRadius):
    """The warp factor reached zero while integrating the Jacobi equation."""


class HypothesisViolated(_AtRadius):
    """A pointwise hypothesis (e.g. curvature pinching) fails at a sampled radius."""


class ZeroCrossing(_AtRadius):
    """A manufactured solution vanishes inside the domain."""


class ExtractionUnstable(KlabError):
    """Tail extrapolation of an asymptotic constant did not settle."""


class UnknownFamily(KlabError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown family"


class StiffnessFailure(KlabError):
    """Step-size control collapsed during mode integration."""


class GridMismatch(KlabError, ValueError):
    pass


class GridTooCoarse(KlabError, ValueError):
    pass


class VersionParameterMissing(KlabError, ValueError):
    pass


class ConstraintViolated(KlabError, ValueError):
    def __init__(self, constraint: str, margin: float | None = None):
        self.constraint = constraint
        self.margin = margin
        text = f"constraint {constraint} violated"
        if margin is not None:
            text += f" (margin {margin:.6g})"
        super().__init__(text)


class SphereNormVanishes(KlabError):
    pass


class WitnessNotFound(KlabError):
    pass


class TailTooShort(KlabError, ValueError):
    pass


class ParseError(KlabError, ValueError):
    def __init__(self, key: str, reason: str):
        self.key = key
        self.reason = reason
        super().__init__(f"{key}: {reason}")
