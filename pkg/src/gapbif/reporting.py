"""Report containers and deterministic CSV / JSON / SVG writers."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np


def fmt(value) -> str:
    """17-significant-digit float formatting (round-trips exactly)."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def bounded_ratio(values: Sequence[float], last: int = 3) -> float:
    """max/min of ``|values|`` over the last ``last`` entries (inf if any is 0)."""
    tail = np.abs(np.asarray(values, dtype=float)[-last:])
    if tail.size == 0 or np.any(~np.isfinite(tail)):
        return math.inf
    lo = tail.min()
    return math.inf if lo == 0 else float(tail.max() / lo)


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log|y|`` against ``log x``."""
    x, y = np.log(np.asarray(x, float)), np.log(np.abs(np.asarray(y, float)))
    return float(np.polyfit(x, y, 1)[0])


@dataclass
class Report:
    """Tabular results plus named pass/fail verdicts for one check suite.

    ``anchor`` names the mathematical statement being exercised.
    """

    name: str
    anchor: str
    params: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)
    verdicts: dict = field(default_factory=dict)

    def verdict(self, key: str, passed: bool, **details) -> bool:
        self.verdicts[key] = {"pass": bool(passed), **details}
        return bool(passed)

    def add_row(self, **row) -> None:
        self.rows.append(row)

    @property
    def passed(self) -> bool:
        return all(v["pass"] for v in self.verdicts.values())

    def failures(self) -> list:
        return [k for k, v in self.verdicts.items() if not v["pass"]]

    def column(self, key: str) -> np.ndarray:
        return np.array([r[key] for r in self.rows], dtype=float)

    def to_dict(self) -> dict:
        return _jsonable({"name": self.name, "anchor": self.anchor, "passed": self.passed,
                          "params": self.params, "verdicts": self.verdicts, "rows": self.rows})

    def summary_line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = "" if self.passed else f" (failed: {', '.join(self.failures())})"
        return f"[{status}] {self.name}: {self.anchor}{extra}"


def write_csv(path: Path, rows: Iterable[dict], columns: Optional[Sequence[str]] = None,
              header_comment: Optional[str] = None) -> Path:
    rows = list(rows)
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    buf = io.StringIO()
    if header_comment:
        for line in header_comment.splitlines():
            buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(row.get(c, "")) for c in columns])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())
    return path


def write_json(path: Path, payload: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=False) + "\n")
    return path


def write_report(report: Report, outdir: Path, seed: Optional[int] = None,
                 columns: Optional[Sequence[str]] = None) -> list:
    outdir = Path(outdir)
    written = []
    header = f"{report.name} | {report.anchor} | seed={seed}"
    if report.rows:
        written.append(write_csv(outdir / f"{report.name}.csv", report.rows, columns, header))
    payload = report.to_dict()
    payload["seed"] = seed
    payload.pop("rows", None)
    written.append(write_json(outdir / f"{report.name}.json", payload))
    return written


def loglog_svg(path: Path, x, series: dict, title: str = "", xlabel: str = "b - lambda",
               guides: Optional[dict] = None) -> Path:
    """Static log-log plot; ``guides`` maps a label to a reference slope."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "gapbif"
    x = np.asarray(x, float)
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    for label, y in series.items():
        y = np.abs(np.asarray(y, float))
        ax.loglog(x, y, "o-", label=label, ms=4)
        if guides and label in guides and len(x):
            slope = guides[label]
            ref = y[-1] * (x / x[-1]) ** slope
            ax.loglog(x, ref, "--", lw=0.8, color="gray", label=f"slope {slope:g}")
    ax.set_xlabel(xlabel)
    ax.set_title(title)
    ax.legend(fontsize=7)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
