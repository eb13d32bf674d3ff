import re

import pytest
from hypothesis import given, settings, strategies as st

from gapbif.config import SCHEMA, ConfigError, default_config_text, load_config, parse_config


def test_default_file_documents_every_key():
    text = default_config_text()
    for section, keys in SCHEMA.items():
        assert f"[{section}]" in text
        for key in keys:
            assert re.search(rf"^{key}\s*=", text, re.M), f"{section}.{key} missing from default.ini"


def test_default_values():
    cfg = load_config()
    assert cfg.seed == 20240607
    assert cfg.get("nonlinearity", "beta") == 4.0 and cfg.get("nonlinearity", "alpha") is None
    assert cfg.get("gap", "shift") == "midpoint"
    assert cfg.suites == ("minorant", "spectral", "bloch", "zeta", "sweep", "lp", "gradient")
    assert cfg.get("checks", "bloch_radii") == (8.0, 16.0, 32.0, 64.0)


@pytest.mark.parametrize("text, key", [
    ("[grid]\nbogus = 1\n", "grid.bogus"),
    ("[nowhere]\nx = 1\n", "nowhere"),
    ("[grid]\ncells = many\n", "grid.cells"),
    ("[nonlinearity]\nbeta = 2.0\n", "nonlinearity.beta"),
    ("[nonlinearity]\nalpha = 5\nbeta = 4\n", "nonlinearity.alpha"),
    ("[potential]\nname = lattice\n", "potential.name"),
    ("[checks]\nsuites = spectral, magic\n", "checks.suites"),
    ("[sweep]\nd0_fraction = 1e-4\n", "sweep.d0_fraction"),
    ("[sweep]\ncontinuation = maybe\n", "sweep.continuation"),
    ("not an ini file", "<file>"),
])
def test_errors_point_at_key(text, key):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.key == key


def test_missing_file():
    with pytest.raises(ConfigError) as info:
        load_config("/nonexistent/config.ini")
    assert info.value.key == "--config"


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 64), st.floats(2.1, 5.9), st.floats(0.01, 5.0), st.integers(0, 2**31))
def test_round_trip(cells, beta, q, seed):
    text = f"[grid]\ncells = {cells}\n[nonlinearity]\nbeta = {beta!r}\n[potential]\nq = {q!r}\n[run]\nseed = {seed}\n"
    cfg = parse_config(text)
    assert cfg.get("grid", "cells") == cells
    assert cfg.get("nonlinearity", "beta") == beta
    assert cfg.get("potential", "q") == q
    assert cfg.seed == seed
