import csv

import pytest

from gapbif.cli import EXIT_CONFIG, EXIT_OK, main


def _rows(path):
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    return list(csv.reader(lines))


def test_bands_outputs(tmp_path, capsys):
    assert main(["bands", "--out", str(tmp_path), "--seed", "11"]) == EXIT_OK
    text = (tmp_path / "bands.csv").read_text()
    assert text.startswith("# band functions | seed=11\n")
    rows = _rows(tmp_path / "bands.csv")
    assert rows[0] == ["k", "E0", "E1", "E2", "E3"] and len(rows) == 66
    assert (tmp_path / "bands.svg").exists() and (tmp_path / "gaps.json").exists()
    assert "gap (" in capsys.readouterr().out


def test_solve_outside_gap(tmp_path, capsys):
    assert main(["solve", "--out", str(tmp_path), "--lambda", "3.0"]) == EXIT_CONFIG
    assert "lambda not in gap" in capsys.readouterr().err


def test_solve_inside_gap(tmp_path):
    assert main(["solve", "--out", str(tmp_path), "--lambda", "0.9"]) == EXIT_OK
    rows = _rows(tmp_path / "solution.csv")
    assert rows[0] == ["x", "u"] and len(rows) > 1000


def test_bad_config(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[solver]\ntol = -1\n")
    assert main(["bands", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "solver.tol" in capsys.readouterr().err


def test_suite_command_and_seed_header(tmp_path):
    assert main(["minorant-check", "--out", str(tmp_path), "--seed", "3"]) == EXIT_OK
    assert (tmp_path / "minorant-quadrature.csv").read_text().startswith("# minorant-quadrature")
    assert "seed=3" in (tmp_path / "minorant-quadrature.csv").read_text().splitlines()[0]


def test_split_command(tmp_path):
    assert main(["split", "--out", str(tmp_path)]) == EXIT_OK
    rows = _rows(tmp_path / "coercivity.csv")
    assert rows[0] == ["lambda", "alpha", "beta", "N_lambda"] and len(rows) == 10


def test_unknown_command():
    with pytest.raises(SystemExit):
        main(["frobnicate"])
