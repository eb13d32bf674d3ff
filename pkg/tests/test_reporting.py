import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gapbif.reporting import Report, bounded_ratio, fmt, loglog_slope, loglog_svg, write_csv


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_format_round_trips(x):
    assert float(fmt(x)) == x


def test_format_types():
    assert fmt(True) == "true" and fmt(np.int64(3)) == "3" and fmt(0.1) == "0.10000000000000001"


@given(st.lists(st.floats(1e-6, 1e6), min_size=3, max_size=10), st.floats(1e-3, 1e3))
def test_bounded_ratio_is_scale_free(vals, c):
    assert bounded_ratio([c * v for v in vals]) == pytest.approx(bounded_ratio(vals))
    assert bounded_ratio(vals) >= 1.0


def test_bounded_ratio_edge_cases():
    assert bounded_ratio([1.0, 0.0, 2.0]) == math.inf
    assert bounded_ratio([1.0, float("nan"), 2.0]) == math.inf
    assert bounded_ratio([5.0, 1.0, 2.0, 4.0], last=2) == 2.0


def test_loglog_slope():
    x = np.geomspace(1, 100, 5)
    assert loglog_slope(x, 3 * x**-0.5) == pytest.approx(-0.5)


def test_report_verdicts():
    rep = Report("demo", anchor="demo check")
    rep.verdict("good", True)
    assert rep.passed
    rep.verdict("bad", False, value=3)
    assert not rep.passed and rep.failures() == ["bad"]
    assert "FAIL" in rep.summary_line() and "bad" in rep.summary_line()
    d = rep.to_dict()
    assert d["verdicts"]["bad"] == {"pass": False, "value": 3}


def test_csv_header_and_precision(tmp_path):
    p = write_csv(tmp_path / "t.csv", [{"a": 1 / 3, "b": 2}], ["a", "b"], "demo | seed=5")
    lines = p.read_text().splitlines()
    assert lines[0] == "# demo | seed=5" and lines[1] == "a,b"
    assert lines[2] == "0.33333333333333331,2"


def test_svg_is_deterministic(tmp_path):
    x = np.geomspace(1e-3, 1e-1, 6)
    a = loglog_svg(tmp_path / "a.svg", x, {"y": x**1.5}, guides={"y": 1.5}).read_bytes()
    b = loglog_svg(tmp_path / "b.svg", x, {"y": x**1.5}, guides={"y": 1.5}).read_bytes()
    assert a == b and a.startswith(b"<?xml")
