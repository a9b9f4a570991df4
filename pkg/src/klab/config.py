"""Scenario configuration files (TOML) and their validation.

Every key is checked before anything is computed; the first problem is
reported as :class:`ParseError` with a dotted key path. Bundled scenarios can
be named without a path (``h3-free`` or ``h3-free.toml``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .energy import Version
from .errors import ParseError
from .potential import FAMILIES

SCENARIO_DIR = Path(__file__).parent / "scenarios"
METRIC_FAMILIES = ("euclidean", "hyperbolic", "power", "exp_power", "curvature")
POTENTIAL_FAMILIES = tuple(FAMILIES) + ("manufactured",)
_MISSING = object()


@dataclass(frozen=True)
class MetricSection:
    family: str
    n: int
    r_min: float
    r_max: float
    params: dict = field(default_factory=dict)
    a4_hint: Optional[float] = None
    a5_hint: Optional[float] = None


@dataclass(frozen=True)
class PotentialSection:
    family: str = "none"
    params: tuple = ()
    split: Optional[str] = None
    u: Optional[str] = None


@dataclass(frozen=True)
class SolveSection:
    lam: float
    l_max: int = 0
    points_per_decade: int = 64
    abs_tol: float = 1e-12
    rel_tol: float = 1e-11
    initial: Optional[dict] = None
    r_start: Optional[float] = None
    r_end: Optional[float] = None


@dataclass(frozen=True)
class EnergySection:
    version: Version = Version.BASIC
    m: float = 0.0
    t: float = 0.5
    s: float = 0.0
    sigma: Optional[float] = None
    anchor: Optional[float] = None


@dataclass(frozen=True)
class VerifySection:
    mu: float
    tail_start: float
    monotone_from: Optional[float] = None
    growth_margin: float = 0.05
    fd_refine: int = 64
    identity_tol: float = 1e-6
    decomposition_m0: tuple = (1, 4, 16)


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    metric: MetricSection
    potential: PotentialSection
    solve: SolveSection
    energy: EnergySection
    verify: VerifySection
    asymptotics: dict = field(default_factory=dict)
    output_dir: Optional[str] = None
    source: Optional[str] = None

    @property
    def r_start(self) -> float:
        return self.metric.r_min if self.solve.r_start is None else self.solve.r_start

    @property
    def r_end(self) -> float:
        return self.metric.r_max if self.solve.r_end is None else self.solve.r_end

    def as_dict(self) -> dict:
        solve = dict(vars(self.solve))
        if solve["initial"] is not None:
            solve["initial"] = [[l, a, b] for l, (a, b) in sorted(solve["initial"].items())]
        energy = dict(vars(self.energy), version=self.energy.version.value)
        return {
            "name": self.name,
            "metric": dict(vars(self.metric)),
            "potential": dict(vars(self.potential), params=list(self.potential.params)),
            "solve": solve,
            "energy": energy,
            "verify": dict(vars(self.verify), decomposition_m0=list(self.verify.decomposition_m0)),
            "asymptotics": dict(self.asymptotics),
        }

    def with_axis(self, axis: str, value: float) -> "ScenarioConfig":
        """Copy with one sweep axis set: ``lambda``, ``A`` (curvature metrics) or ``c`` (first potential parameter)."""
        if axis == "lambda":
            new = replace(self, solve=replace(self.solve, lam=float(value)))
        elif axis == "A":
            new = replace(self, metric=replace(self.metric, params=dict(self.metric.params, A=float(value))))
        elif axis == "c":
            params = (float(value),) + tuple(self.potential.params[1:])
            new = replace(self, potential=replace(self.potential, params=params))
        else:
            raise ValueError(f"unknown sweep axis {axis!r}")
        return replace(new, name=f"{new.name}/{axis}={value!r}")

    def axis_applies(self, axis: str) -> bool:
        if axis == "lambda":
            return True
        if axis == "A":
            return self.metric.family == "curvature"
        if axis == "c":
            return self.potential.family in ("power", "oscillatory", "longrange")
        return False


# -- low-level key handling --------------------------------------------------------


class _Table:
    """Dictionary view that records consumed keys and reports leftovers."""

    def __init__(self, data: Any, path: str):
        if not isinstance(data, dict):
            raise ParseError(path or "<root>", "expected a table")
        self.data = data
        self.path = path
        self.seen: set[str] = set()

    def key(self, name: str) -> str:
        return f"{self.path}.{name}" if self.path else name

    def get(self, name: str, kind, default=_MISSING):
        self.seen.add(name)
        if name not in self.data:
            if default is _MISSING:
                raise ParseError(self.key(name), "missing required key")
            return default
        return _coerce(self.data[name], kind, self.key(name))

    def sub(self, name: str, required: bool = False) -> "_Table":
        self.seen.add(name)
        if name not in self.data:
            if required:
                raise ParseError(self.key(name), "missing required section")
            return _Table({}, self.key(name))
        return _Table(self.data[name], self.key(name))

    def finish(self) -> None:
        extra = sorted(set(self.data) - self.seen)
        if extra:
            raise ParseError(self.key(extra[0]), "unknown key")


def _coerce(value, kind, key: str):
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ParseError(key, f"expected a number, got {value!r}")
        value = float(value)
        if not math.isfinite(value):
            raise ParseError(key, "must be finite")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ParseError(key, f"expected an integer, got {value!r}")
        return value
    if kind is str:
        if not isinstance(value, str):
            raise ParseError(key, f"expected a string, got {value!r}")
        return value
    if kind is list:
        if not isinstance(value, list):
            raise ParseError(key, f"expected an array, got {value!r}")
        return value
    if kind is dict:
        if not isinstance(value, dict):
            raise ParseError(key, f"expected a table, got {value!r}")
        return value
    raise TypeError(kind)


def _check(cond: bool, key: str, reason: str) -> None:
    if not cond:
        raise ParseError(key, reason)


# -- sections ---------------------------------------------------------------------


def _metric(t: _Table) -> MetricSection:
    family = t.get("family", str)
    _check(family in METRIC_FAMILIES, t.key("family"), f"unknown family {family!r}; expected one of {METRIC_FAMILIES}")
    n = t.get("n", int)
    _check(n >= 2, t.key("n"), "dimension must be >= 2")
    r_min = t.get("r_min", float, 1.0)
    _check(r_min > 0, t.key("r_min"), "must be positive")
    r_max = t.get("r_max", float)
    _check(r_max > r_min, t.key("r_max"), "must exceed r_min")
    params = dict(t.get("params", dict, {}))
    allowed = {"euclidean": set(), "hyperbolic": set(), "power": {"p"}, "exp_power": {"a", "b"},
               "curvature": {"expr", "A", "f0", "f0_prime", "step", "rtol", "atol"}}[family]
    for k, v in params.items():
        _check(k in allowed, f"{t.key('params')}.{k}", f"unknown parameter for family {family!r}")
        if k != "expr":
            params[k] = _coerce(v, float, f"{t.key('params')}.{k}")
        else:
            _coerce(v, str, f"{t.key('params')}.{k}")
    required = {"power": ("p",), "exp_power": ("a",), "curvature": ("expr",)}.get(family, ())
    for k in required:
        _check(k in params, f"{t.key('params')}.{k}", "missing required parameter")
    if family == "hyperbolic":
        _check(r_max <= 700, t.key("r_max"), "sinh overflows beyond 700")
    a4 = t.get("a4_hint", float, None)
    a5 = t.get("a5_hint", float, None)
    _check(a4 is None or a4 >= 0, t.key("a4_hint"), "must be non-negative")
    t.finish()
    return MetricSection(family, n, r_min, r_max, params, a4, a5)


def _potential(t: _Table) -> PotentialSection:
    family = t.get("family", str, "none")
    _check(family in POTENTIAL_FAMILIES, t.key("family"),
           f"unknown family {family!r}; expected one of {POTENTIAL_FAMILIES}")
    raw = t.get("params", list, [])
    params = tuple(_coerce(v, float, f"{t.key('params')}[{i}]") for i, v in enumerate(raw))
    split = t.get("split", str, None)
    _check(split in (None, "V1", "V2"), t.key("split"), "must be 'V1' or 'V2'")
    u = t.get("u", str, None)
    if family == "manufactured":
        _check(u is not None, t.key("u"), "manufactured potential needs an expression for u")
        _check(not params, t.key("params"), "manufactured potential takes no parameters")
    else:
        _check(u is None, t.key("u"), "only the manufactured family takes u")
        expected = 0 if family == "none" else 2
        _check(len(params) == expected, t.key("params"), f"family {family!r} takes {expected} parameters")
    t.finish()
    return PotentialSection(family, params, split, u)


def _solve(t: _Table, metric: MetricSection) -> SolveSection:
    lam = t.get("lambda", float)
    l_max = t.get("l_max", int, 0)
    _check(l_max >= 0, t.key("l_max"), "must be >= 0")
    ppd = t.get("points_per_decade", int, 64)
    _check(ppd >= 8, t.key("points_per_decade"), "must be >= 8")
    tols = t.sub("tols")
    abs_tol = tols.get("abs", float, 1e-12)
    rel_tol = tols.get("rel", float, 1e-11)
    _check(abs_tol > 0, tols.key("abs"), "must be positive")
    _check(rel_tol > 0, tols.key("rel"), "must be positive")
    tols.finish()
    initial = None
    raw = t.get("initial", list, None)
    if raw is not None:
        initial = {}
        for i, item in enumerate(raw):
            key = f"{t.key('initial')}[{i}]"
            _check(isinstance(item, list) and len(item) == 3, key, "expected [l, u0, u0_prime]")
            l = _coerce(item[0], int, key + "[0]")
            _check(0 <= l, key + "[0]", "mode index must be >= 0")
            _check(l not in initial, key + "[0]", f"mode {l} listed twice")
            initial[l] = (_coerce(item[1], float, key + "[1]"), _coerce(item[2], float, key + "[2]"))
        _check(any(v != (0.0, 0.0) for v in initial.values()), t.key("initial"), "all initial data is zero")
    r_start = t.get("r_start", float, None)
    r_end = t.get("r_end", float, None)
    lo = metric.r_min if r_start is None else r_start
    hi = metric.r_max if r_end is None else r_end
    _check(metric.r_min <= lo, t.key("r_start"), "below metric.r_min")
    _check(hi <= metric.r_max, t.key("r_end"), "beyond metric.r_max")
    _check(lo < hi, t.key("r_end"), "must exceed r_start")
    t.finish()
    return SolveSection(lam, l_max, ppd, abs_tol, rel_tol, initial, r_start, r_end)


def _energy(t: _Table) -> EnergySection:
    name = t.get("version", str, "basic")
    _check(name in [v.value for v in Version], t.key("version"), f"unknown version {name!r}")
    version = Version(name)
    m = t.get("m", float, 0.0)
    _check(m >= 0, t.key("m"), "must be >= 0")
    tt = t.get("t", float, 0.5)
    _check(0 <= tt < 1, t.key("t"), "must lie in [0, 1)")
    s = t.get("s", float, 0.0)
    sigma = t.get("sigma", float, None)
    if version is Version.GOODBOUND:
        _check(sigma is not None, t.key("sigma"), "required by the goodbound version")
        _check(0 <= sigma <= 1, t.key("sigma"), "must lie in [0, 1]")
    anchor = t.get("anchor", float, None)
    _check(anchor is None or anchor > 0, t.key("anchor"), "must be positive")
    t.finish()
    return EnergySection(version, m, tt, s, sigma, anchor)


def _verify(t: _Table, r_start: float, r_end: float) -> VerifySection:
    mu = t.get("mu", float)
    _check(mu > 0, t.key("mu"), "must be positive")
    tail = t.get("tail_start", float)
    _check(r_start <= tail, t.key("tail_start"), "below the solve range")
    _check(10 * tail <= r_end * (1 + 1e-12), t.key("tail_start"), "needs a decade of radii beyond it")
    mono = t.get("monotone_from", float, None)
    _check(mono is None or r_start <= mono < r_end, t.key("monotone_from"), "outside the solve range")
    margin = t.get("growth_margin", float, 0.05)
    _check(margin >= 0, t.key("growth_margin"), "must be >= 0")
    refine = t.get("fd_refine", int, 64)
    _check(refine >= 1, t.key("fd_refine"), "must be >= 1")
    tol = t.get("identity_tol", float, 1e-6)
    _check(tol > 0, t.key("identity_tol"), "must be positive")
    raw = t.get("decomposition_m0", list, [1, 4, 16])
    m0s = tuple(_coerce(v, float, f"{t.key('decomposition_m0')}[{i}]") for i, v in enumerate(raw))
    _check(all(m >= 0 for m in m0s), t.key("decomposition_m0"), "entries must be >= 0")
    t.finish()
    return VerifySection(mu, tail, mono, margin, refine, tol, m0s)


ASYMPTOTIC_KEYS = ("a1", "a2", "a3", "a4", "a5", "delta", "delta1", "delta2", "A")


def _asymptotics(t: _Table) -> dict:
    out = {}
    for k in ASYMPTOTIC_KEYS:
        v = t.get(k, float, None)
        if v is not None:
            _check(v >= 0 or k == "a5", t.key(k), "must be non-negative")
            out[k] = v
    t.finish()
    return out


def config_from_dict(data: dict, name: str = "scenario", source: Optional[str] = None) -> ScenarioConfig:
    root = _Table(data, "")
    head = root.sub("scenario")
    name = head.get("name", str, name)
    head.get("description", str, "")
    head.finish()
    metric = _metric(root.sub("metric", required=True))
    potential = _potential(root.sub("potential"))
    solve = _solve(root.sub("solve", required=True), metric)
    energy = _energy(root.sub("energy"))
    lo = metric.r_min if solve.r_start is None else solve.r_start
    hi = metric.r_max if solve.r_end is None else solve.r_end
    verify = _verify(root.sub("verify", required=True), lo, hi)
    asym = _asymptotics(root.sub("asymptotics"))
    out = root.sub("output")
    output_dir = out.get("dir", str, None)
    out.finish()
    root.finish()

    # constraints that can be judged from declared constants alone
    if "delta" in asym:
        d = asym["delta"]
        _check(verify.mu > d, "verify.mu", f"violates constraint mu > delta (delta = {d})")
        if "a3" in asym:
            _check(2 * asym["a3"] > verify.mu + d, "asymptotics.a3", "violates constraint 2*a3 > mu + delta")
            _check(asym["a3"] > 1 + d, "asymptotics.a3", "violates constraint a3 > 1 + delta")
    if energy.anchor is not None:
        _check(metric.r_min <= energy.anchor <= metric.r_max, "energy.anchor", "outside the metric domain")
    return ScenarioConfig(name, metric, potential, solve, energy, verify, asym, output_dir, source)


def resolve_path(path) -> Path:
    """``path`` itself if it exists, else the bundled scenario of that name."""
    p = Path(path)
    if p.exists():
        return p
    stem = p.name[:-5] if p.name.endswith(".toml") else p.name
    bundled = SCENARIO_DIR / f"{stem}.toml"
    if p.parent == Path(".") and bundled.exists():
        return bundled
    raise ParseError(str(path), "no such file or bundled scenario")


def load_toml(path) -> tuple[dict, Path]:
    p = resolve_path(path)
    try:
        with open(p, "rb") as fh:
            return tomllib.load(fh), p
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(str(p), f"invalid TOML: {exc}") from exc
    except OSError as exc:
        raise ParseError(str(p), f"cannot read: {exc.strerror}") from exc


def parse_config(path) -> ScenarioConfig:
    data, p = load_toml(path)
    return config_from_dict(data, name=p.stem, source=str(p))


def bundled_scenarios() -> list[str]:
    return sorted(p.stem for p in SCENARIO_DIR.glob("*.toml") if p.stem != "matrix")



SWEEP_AXES = ("lambda", "A", "c")


def parse_matrix(path) -> list[ScenarioConfig]:
    """Expand a sweep matrix into scenario configs, sorted by name.

    ``[matrix] scenarios`` lists base scenarios (bundled names or paths,
    relative to the matrix file). ``[axes]`` maps axis names to value lists;
    each base scenario runs once unchanged and once per value of every axis
    that applies to it.
    """
    data, p = load_toml(path)
    root = _Table(data, "")
    mat = root.sub("matrix", required=True)
    names = mat.get("scenarios", list)
    _check(len(names) > 0, mat.key("scenarios"), "empty scenario list")
    mat.finish()
    axes_t = root.sub("axes")
    axes = {}
    for axis in SWEEP_AXES:
        raw = axes_t.get(axis, list, [])
        axes[axis] = [_coerce(v, float, f"{axes_t.key(axis)}[{i}]") for i, v in enumerate(raw)]
    axes_t.finish()
    root.finish()
    out = []
    for i, name in enumerate(names):
        name = _coerce(name, str, f"matrix.scenarios[{i}]")
        local = p.parent / name
        base = parse_config(local if local.is_file() else name)
        out.append(base)
        for axis, values in axes.items():
            if base.axis_applies(axis):
                out.extend(base.with_axis(axis, v) for v in values)
    seen = set()
    for cfg in out:
        _check(cfg.name not in seen, "matrix.scenarios", f"scenario {cfg.name!r} appears twice")
        seen.add(cfg.name)
    return sorted(out, key=lambda c: c.name)
