"""Acceptance criteria 1-8 on the shipped default configuration.

Each test records a one-line verdict that ``conftest.py`` prints in the
terminal summary.
"""

import csv
import math

import pytest

from gapbif import suites as S
from gapbif.cli import EXIT_OK, main

from conftest import ACCEPTANCE


def _record(n, passed, detail):
    ACCEPTANCE[n] = (bool(passed), detail)
    return bool(passed)


def _run(name, cfg):
    res = S.run_suite(name, cfg)
    return res["reports"], res["seconds"]


def _failures(reports):
    return [f"{r.name}:{k}" for r in reports for k in r.failures()]


def test_criterion_1_convex_minorant(default_cfg):
    reports, sec = _run("minorant", default_cfg)
    props = [r for r in reports if r.name.startswith("convex-minorant")]
    pairs_ok = len(props) == 10 and all(2 < r.params["alpha"] <= r.params["beta"] < 6 for r in props)
    samples_ok = all(r.params["n_samples"] == 10_000 and r.params["rtol"] == 1e-12 for r in props)
    quad = next(r for r in reports if r.name == "minorant-quadrature")
    ok = all(r.passed for r in reports) and pairs_ok and samples_ok and quad.params["points"] == 1000 and sec < 5
    err = quad.verdicts["closed_form_matches_quadrature"]["max_rel_error"]
    assert _record(1, ok, f"10 pairs x 1e4 samples, quadrature max rel err {err:.1e}, {sec:.1f}s "
                          f"{_failures(reports) or ''}")


def test_criterion_2_spectral(default_cfg):
    reports, sec = _run("spectral", default_cfg)
    by = {r.name: r for r in reports}
    edges = by["gap-edges"].verdicts
    ok = all(r.passed for r in reports) and sec < 30
    detail = (f"edges vs supercell {edges['supercell_oracle']['rel_error']:.1e}, "
              f"vs 4x k-grid {edges['k_grid_oracle']['rel_error']:.1e}; "
              f"shift identity {by['constant-shift'].verdicts['band_shift']['rel_error']:.1e}; "
              f"min slack {min(v['min_slack'] for k, v in by['splitting-inequalities'].verdicts.items() if k.startswith('inequality')):.3g}; "
              f"{sec:.1f}s {_failures(reports) or ''}")
    assert _record(2, ok, detail)


def test_criterion_3_bloch_packets(default_cfg):
    reports, sec = _run("bloch", default_cfg)
    rep = reports[0]
    assert rep.params["R"] == [8.0, 16.0, 32.0, 64.0]
    ok = rep.passed and sec < 60
    worst = max(v.get("max_over_min", 1.0) for v in rep.verdicts.values())
    weighted_min = min(v["min_value"] for k, v in rep.verdicts.items() if k.startswith("weighted_bounded_below"))
    assert _record(3, ok, f"worst max/min {worst:.4f}, min weighted integral {weighted_min:.3g}, {sec:.1f}s "
                          f"{_failures(reports) or ''}")


def test_criterion_4_gap_direction(default_cfg):
    reports, sec = _run("zeta", default_cfg)
    rep = reports[0]
    ok = rep.passed and sec < 120 and "bounded_below_gamma_4" in rep.verdicts
    ratios = {k[len("bounded_"):]: round(v["max_over_min"], 3) for k, v in rep.verdicts.items()
              if "max_over_min" in v}
    slopes = {k: round(v, 3) for k, v in rep.params["fitted_slopes"].items()}
    assert _record(4, ok, f"max/min {ratios}; fitted log-log slopes {slopes}; {sec:.1f}s "
                          f"{_failures(reports) or ''}")


def test_criterion_5_branch_rates(default_cfg):
    reports, sec = _run("sweep", default_cfg)
    rep = next(r for r in reports if r.name == "branch-rates")
    v = rep.verdicts
    needed = ["enough_converged", "norm_rate_sharp", "energy_rate_sharp", "level_rate_sharp",
              "energy_between_zero_and_level", "norm_level_ratio_bounded"]
    assert rep.params["points"] == 12
    ok = all(v[k]["pass"] for k in needed) and sec < 600
    fits = rep.params["fits"]
    detail = (f"theta_norm={fits['h1_norm']['theta']:.3f} (0.25+-0.10), "
              f"theta_energy={fits['energy']['theta']:.3f} (1.5+-0.20), "
              f"theta_c={fits['c_ub']['theta']:.3f} (1.5+-0.20), "
              f"norm/level ratio max/min {v['norm_level_ratio_bounded']['max_over_min']:.2f}, "
              f"{rep.params['converged']}/12 converged, {sec:.1f}s; failed: {[k for k in needed if not v[k]['pass']]}")
    assert _record(5, ok, detail)


def test_criterion_6_lp_projectors(default_cfg):
    reports, sec = _run("lp", default_cfg)
    by = {r.name: r for r in reports}
    ok = all(r.passed for r in reports) and sec < 120
    riesz = by["riesz-projector"].verdicts["matches_eigenprojector"]["max_error"]
    recon = by["lp-direct-sum"].verdicts["reconstruction"]["max_relative_residual"]
    assert _record(6, ok, f"Riesz error {riesz:.1e}, reconstruction {recon:.1e}, {sec:.1f}s "
                          f"{_failures(reports) or ''}")


def test_criterion_7_gradient(default_cfg):
    reports, sec = _run("gradient", default_cfg)
    rep = reports[0]
    assert rep.params["pairs"] == 20 and rep.params["eps"] == 1e-5
    err = rep.verdicts["central_difference"]["max_rel_error"]
    assert _record(7, rep.passed, f"max rel err {err:.1e} over 20 pairs, {sec:.1f}s")


def _numeric_columns(path):
    rows = list(csv.reader(l for l in path.read_text().splitlines() if not l.startswith("#")))
    return rows


def test_criterion_8_end_to_end(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    code_a = main(["full-report", "--out", str(a)])
    code_b = main(["full-report", "--out", str(b)])
    files = sorted(p.relative_to(a) for p in a.rglob("*.csv"))
    same = bool(files) and all((b / f).exists() and _numeric_columns(a / f) == _numeric_columns(b / f)
                               for f in files)
    ok = code_a == EXIT_OK and code_b == EXIT_OK and same
    assert (a / "full_report.json").exists() and (a / "summary.txt").exists()
    assert _record(8, ok, f"exit codes {code_a}/{code_b} (0 required); {len(files)} CSV files "
                          f"{'identical' if same else 'DIFFER'} across runs")
