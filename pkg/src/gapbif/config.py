"""INI run configuration with a fixed, validated schema.

Every key has a type and a default; unknown sections or keys are errors.
List values are comma separated.  ``gap.shift`` accepts ``midpoint`` or a
number; ``nonlinearity.alpha`` and ``sweep.ratio`` may be left empty.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional

SUITES = ("minorant", "spectral", "bloch", "zeta", "sweep", "lp", "gradient", "assumptions")


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_float(text: str) -> Optional[float]:
    return None if text.strip() in ("", "none") else float(text)


def _float_list(text: str) -> tuple:
    return tuple(float(t) for t in text.split(",") if t.strip())


def _int_list(text: str) -> tuple:
    return tuple(int(t) for t in text.split(",") if t.strip())


def _str_list(text: str) -> tuple:
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _shift(text: str):
    return "midpoint" if text.strip() == "midpoint" else float(text)


# section -> key -> (parser, default text)
SCHEMA: dict = {
    "potential": {"name": (str, "mathieu"), "q": (float, "1.0"), "q2": (float, "0.5"),
                  "c": (float, "0.0"), "dimension": (int, "1")},
    "grid": {"cells": (int, "16"), "points_per_cell": (int, "32"), "n_k": (int, "65"),
             "n_bands": (int, "4"), "domain_factor": (float, "16")},
    "gap": {"index": (int, "0"), "shift": (_shift, "midpoint")},
    "nonlinearity": {"family": (str, "pure_power"), "alpha": (_optional_float, ""), "beta": (float, "4.0")},
    "weight": {"name": (str, "cosine")},
    "solver": {"tol": (float, "1e-9"), "max_iter": (int, "60"), "damping": (float, "1.0"),
               "trivial_threshold": (float, "1e-6")},
    "linking": {"ascent_iters": (int, "200"), "boundary_samples": (int, "200")},
    "sweep": {"d0_fraction": (float, "0.2"), "d_min_fraction": (float, "1e-3"), "points": (int, "12"),
              "ratio": (_optional_float, ""), "continuation": (_bool, "true"), "d_max": (float, "0.1"),
              "localization_tol": (float, "0.1")},
    "checks": {"suites": (_str_list, "minorant, spectral, bloch, zeta, sweep, lp, gradient"),
               "minorant_pairs": (int, "10"), "minorant_samples": (int, "10000"),
               "quadrature_points": (int, "1000"),
               "spectral_samples": (int, "100"), "oracle_factor": (int, "4"),
               "bloch_radii": (_float_list, "8, 16, 32, 64"),
               "zeta_distances": (_float_list, "1e-1, 0.031622776601683794, 1e-2, 0.0031622776601683794, 1e-3"),
               "gammas": (_float_list, "2, 4"),
               "lp_cells": (int, "16"), "lp_random_probes": (int, "12"), "lp_pairs": (int, "100"),
               "riesz_nodes": (_int_list, "4, 8, 16"), "riesz_vectors": (int, "20"),
               "gradient_pairs": (int, "20"), "gradient_eps": (float, "1e-5")},
    "output": {"dir": (str, "gapbif-out"), "plots": (_bool, "true")},
    "run": {"seed": (int, "20240607"), "jobs": (int, "1")},
}


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)
    source: Optional[str] = None

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    def get(self, section: str, key: str) -> Any:
        return self.values[section][key]

    @property
    def seed(self) -> int:
        return self.values["run"]["seed"]

    @property
    def suites(self) -> tuple:
        return self.values["checks"]["suites"]

    def as_dict(self) -> dict:
        out = {}
        for sec, kv in self.values.items():
            out[sec] = {k: (list(v) if isinstance(v, tuple) else v) for k, v in kv.items()}
        return out


def _validate(values: dict) -> None:
    pot, grid, nl = values["potential"], values["grid"], values["nonlinearity"]
    from .nonlinearity import WEIGHTS
    from .spectral import POTENTIALS

    if pot["name"] not in POTENTIALS:
        raise ConfigError("potential.name", f"unknown potential {pot['name']!r} (known: {sorted(POTENTIALS)})")
    if pot["dimension"] not in (1, 2):
        raise ConfigError("potential.dimension", "must be 1 or 2")
    if grid["cells"] < 2:
        raise ConfigError("grid.cells", "need at least 2 cells")
    if grid["points_per_cell"] < 4:
        raise ConfigError("grid.points_per_cell", "need at least 4 points per cell")
    if grid["domain_factor"] < 1:
        raise ConfigError("grid.domain_factor", "must be >= 1")
    if nl["family"] not in ("pure_power", "minorant"):
        raise ConfigError("nonlinearity.family", f"unknown family {nl['family']!r}")
    if not 2.0 < nl["beta"]:
        raise ConfigError("nonlinearity.beta", "must exceed 2")
    if nl["alpha"] is not None and not 2.0 < nl["alpha"] <= nl["beta"]:
        raise ConfigError("nonlinearity.alpha", "must satisfy 2 < alpha <= beta")
    if values["weight"]["name"] not in WEIGHTS:
        raise ConfigError("weight.name", f"unknown weight {values['weight']['name']!r}")
    sw = values["sweep"]
    if not 0 < sw["d_min_fraction"] < sw["d0_fraction"] < 1:
        raise ConfigError("sweep.d0_fraction", "need 0 < d_min_fraction < d0_fraction < 1")
    if sw["ratio"] is not None and not 0 < sw["ratio"] < 1:
        raise ConfigError("sweep.ratio", "must lie in (0, 1)")
    if sw["points"] < 4:
        raise ConfigError("sweep.points", "need at least 4 points")
    for s in values["checks"]["suites"]:
        if s not in SUITES:
            raise ConfigError("checks.suites", f"unknown suite {s!r} (known: {', '.join(SUITES)})")
    for key in ("tol", "damping", "trivial_threshold"):
        if not values["solver"][key] > 0:
            raise ConfigError(f"solver.{key}", "must be positive")
    if values["run"]["jobs"] < 1:
        raise ConfigError("run.jobs", "must be >= 1")
    if not all(math.isfinite(d) and d > 0 for d in values["checks"]["zeta_distances"]):
        raise ConfigError("checks.zeta_distances", "must be positive")


def parse_config(text: str = "", source: Optional[str] = None) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source or "<config>")
    except configparser.Error as exc:
        raise ConfigError("<file>", str(exc)) from exc
    values = {}
    for section, keys in SCHEMA.items():
        values[section] = {}
        given = parser[section] if parser.has_section(section) else {}
        for key, (conv, default) in keys.items():
            raw = given.get(key, default)
            try:
                values[section][key] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"{section}.{key}", f"cannot parse {raw!r}: {exc}") from exc
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(section, "unknown section")
        for key in parser[section]:
            if key not in SCHEMA[section]:
                raise ConfigError(f"{section}.{key}", "unknown key")
    _validate(values)
    return RunConfig(values, source)


def default_config_text() -> str:
    return resources.files("gapbif").joinpath("default.ini").read_text()


def load_config(path: Optional[str] = None) -> RunConfig:
    if path is None:
        return parse_config(default_config_text(), "default.ini")
    p = Path(path)
    if not p.is_file():
        raise ConfigError("--config", f"no such file: {path}")
    return parse_config(p.read_text(), str(p))
