import math

import pytest

from klab.config import bundled_scenarios, config_from_dict, parse_config, parse_matrix
from klab.energy import Version
from klab.errors import ParseError

BASE = {
    "metric": {"family": "hyperbolic", "n": 3, "r_max": 40.0},
    "solve": {"lambda": 1.5},
    "verify": {"mu": 1.0, "tail_start": 4.0},
}


def with_(section, **items):
    data = {k: dict(v) for k, v in BASE.items()}
    data.setdefault(section, {}).update(items)
    return data


def test_bundled_flagship():
    cfg = parse_config("h3-free.toml")
    assert cfg.metric.n == 3
    assert cfg.metric.family == "hyperbolic"
    assert cfg.energy.version is Version.BASIC
    assert parse_config("h3-free") == cfg


def test_all_bundled_parse():
    names = bundled_scenarios()
    assert "h3-free" in names and "matrix" not in names
    for name in names:
        parse_config(name)


def test_mu_below_delta_names_constraint():
    data = with_("asymptotics", delta=1.5)
    with pytest.raises(ParseError) as info:
        config_from_dict(data)
    assert info.value.key == "verify.mu"
    assert "mu > delta" in str(info.value)


def test_duplicate_key(tmp_path):
    p = tmp_path / "dup.toml"
    p.write_text('[metric]\nfamily = "hyperbolic"\nfamily = "euclidean"\n')
    with pytest.raises(ParseError):
        parse_config(p)


def test_unknown_key_has_path():
    with pytest.raises(ParseError) as info:
        config_from_dict(with_("solve", lamda=1.0))
    assert info.value.key == "solve.lamda"


def test_unknown_metric_param():
    data = with_("metric", params={"q": 1.0})
    with pytest.raises(ParseError) as info:
        config_from_dict(data)
    assert info.value.key == "metric.params.q"


@pytest.mark.parametrize("section,items,key", [
    ("metric", {"n": 1}, "metric.n"),
    ("metric", {"family": "torus"}, "metric.family"),
    ("solve", {"l_max": -1}, "solve.l_max"),
    ("energy", {"version": "goodbound"}, "energy.sigma"),
    ("energy", {"t": 1.0}, "energy.t"),
    ("verify", {"tail_start": 10.0}, "verify.tail_start"),
    ("potential", {"family": "power", "params": [1.0]}, "potential.params"),
    ("potential", {"family": "manufactured"}, "potential.u"),
])
def test_validation_errors(section, items, key):
    with pytest.raises(ParseError) as info:
        config_from_dict(with_(section, **items))
    assert info.value.key == key


def test_type_errors_reported():
    with pytest.raises(ParseError) as info:
        config_from_dict(with_("solve", l_max="two"))
    assert info.value.key == "solve.l_max"


def test_missing_file():
    with pytest.raises(ParseError):
        parse_config("no-such-scenario")


def test_axis_copies():
    cfg = parse_config("h3-curv")
    assert cfg.axis_applies("A") and not cfg.axis_applies("c")
    new = cfg.with_axis("A", 0.05)
    assert new.metric.params["A"] == 0.05 and cfg.metric.params["A"] == 0.1
    assert new.name == "h3-curv/A=0.05"


def test_matrix_expansion_sorted_and_unique():
    configs = parse_matrix("matrix")
    names = [c.name for c in configs]
    assert names == sorted(names)
    assert len(set(names)) == len(names)
    assert "h3-curv/A=0.0" in names and "h3-power/c=0.05" in names
    assert not any(n.startswith("h3-free/c=") for n in names)


def test_as_dict_is_plain():
    d = parse_config("h3-manufactured").as_dict()
    assert d["solve"]["initial"] == [[0, math.exp(-1.0), -math.exp(-1.0)]]
    assert d["energy"]["version"] == "basic"
