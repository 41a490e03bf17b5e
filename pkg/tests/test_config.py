import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lagsync import published_scenario
from lagsync.config import emit_config, parse_config, parse_config_text, resolve_scenario_path
from lagsync.errors import ParseError, ValidationError
from lagsync.scenario import ControllerSettings, InitialConditions

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

BUNDLED_TEXT = resolve_scenario_path("paper_example").read_text()


def _edit(old, new):
    assert old in BUNDLED_TEXT
    return BUNDLED_TEXT.replace(old, new)


def test_bundled_equals_builtin():
    assert parse_config("paper_example") == published_scenario()


def test_path_and_name_agree(tmp_path):
    p = tmp_path / "s.toml"
    p.write_text(BUNDLED_TEXT)
    assert parse_config(p) == parse_config("paper_example")


def test_missing_file():
    with pytest.raises(ValidationError):
        parse_config("/nonexistent/scenario.toml")


def test_empty_file_names_required_key():
    with pytest.raises(ValidationError) as exc:
        parse_config_text("")
    assert exc.value.key in {"graph", "leader", "agents", "observer"}


def test_even_exponent_keyed():
    with pytest.raises(ValidationError) as exc:
        parse_config_text(_edit('a = "3/5"', 'a = "2/4"'))
    assert exc.value.key == "observer.a"


def test_float_exponent_rejected():
    with pytest.raises(ValidationError) as exc:
        parse_config_text(_edit('alpha = "7/9"', "alpha = 0.777"))
    assert exc.value.key == "controller.alpha"


def test_exponent_out_of_range():
    with pytest.raises(ValidationError) as exc:
        parse_config_text(_edit('a = "3/5"', 'a = "1/3"'))
    assert exc.value.key.startswith("observer")


def test_syntax_error_position():
    text = BUNDLED_TEXT + "\n[broken\n"
    with pytest.raises(ParseError) as exc:
        parse_config_text(text)
    assert exc.value.line == text.count("\n")
    assert exc.value.column is not None


def test_unknown_key():
    with pytest.raises(ValidationError) as exc:
        parse_config_text(_edit("kappa = 3.0", "kappa = 3.0\nkapa = 2.0"))
    assert "kapa" in str(exc.value)


@pytest.mark.parametrize("old,new,key", [
    ("c1 = 8.4", "c1 = -1.0", "observer.c1"),
    ("step = 1e-4", "step = 0.0", "integrator.step"),
    ("kappa = 3.0", 'kappa = "three"', "controller.kappa"),
    ('mode = "fixed"', 'mode = "fast"', "controller.mode"),
])
def test_bad_values_keyed(old, new, key):
    with pytest.raises(ValidationError) as exc:
        parse_config_text(_edit(old, new))
    assert exc.value.key == key


def test_wrong_agent_count():
    text = _edit("theta = [7.0, 0.96, 1.2, 5.96, 2.0, 1.2]",
                 "theta = [[7.0, 0.96, 1.2, 5.96, 2.0, 1.2], [7.0, 0.96, 1.2, 5.96, 2.0, 1.2]]")
    with pytest.raises(ValidationError):
        parse_config_text(text)


def test_emitted_is_valid_toml():
    doc = tomllib.loads(emit_config(published_scenario()))
    assert doc["observer"]["a"] == "3/5"
    assert doc["graph"]["n_followers"] == 6


def test_roundtrip_builtin():
    s = published_scenario()
    assert parse_config_text(emit_config(s)) == s
    f = s.finite_variant()
    assert parse_config_text(emit_config(f)) == f


_pos = st.floats(0.1, 50.0, allow_nan=False)


@settings(max_examples=40, deadline=None)
@given(
    c=st.tuples(_pos, _pos, _pos),
    gains=st.tuples(_pos, _pos, _pos, _pos, _pos),
    seed=st.integers(0, 2**31 - 1),
    horizon=st.floats(0.5, 100.0),
    eta=st.lists(st.floats(-10, 10), min_size=12, max_size=12),
)
def test_roundtrip_property(c, gains, seed, horizon, eta):
    from lagsync.observer import ObserverGains
    from lagsync.numerics import OddRational
    s = published_scenario(
        observer=ObserverGains(*c, OddRational(3, 5), OddRational(3, 1)),
        controller=ControllerSettings(gamma1=gains[0], gamma2=gains[1], k1=gains[2], k2=gains[3],
                                      kappa=1.0 + gains[4], allow_uncertified=True),
        seed=seed, horizon=horizon,
        initial=InitialConditions(eta=tuple(map(tuple, np.reshape(eta, (6, 2))))),
    )
    assert parse_config_text(emit_config(s)) == s
