"""Command-line driver: ``gapbif <command> [--config PATH] [--out DIR] [--seed N] [--jobs K]``.

Exit codes: 0 when every requested check passes, 1 when a check fails,
2 for configuration or input errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .branch import BRANCH_COLUMNS, branch_exponents, solve_point
from .config import ConfigError, RunConfig, load_config
from .reporting import Report, loglog_svg, write_csv, write_json, write_report
from .spectral import DiscreteOperator, bloch_bands, build_split, coercivity, find_gaps, lambda_grid
from . import suites as S

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("gapbif")

SWEEP_COLUMNS = BRANCH_COLUMNS + ["y_norm", "z_norm", "independent_residual", "splitting_slack", "level_gap",
                                  "rho", "boundary_max"]


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def _plots(cfg: RunConfig) -> bool:
    return bool(cfg.get("output", "plots"))


def _emit(reports, outdir: Path, seed: int, columns=None) -> None:
    for rep in reports:
        write_report(rep, outdir, seed, columns if rep.name == "branch-rates" else None)
        print(rep.summary_line())


def _status(reports) -> int:
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


def _line_svg(path: Path, x, ys: dict, xlabel: str, ylabel: str, title: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "gapbif"
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    for label, y in ys.items():
        ax.plot(x, y, lw=1.2, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(fontsize=7)
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _sweep_plots(rep: Report, outdir: Path, beta: float, dim: int) -> None:
    rows = [r for r in rep.rows if r["converged"]]
    if len(rows) < 2:
        return
    d = np.array([r["d"] for r in rows])
    th_n, th_e = branch_exponents(beta, dim)
    loglog_svg(outdir / "branch_norm.svg", d, {"H1 norm": [r["h1_norm"] for r in rows]},
               "branch norm", guides={"H1 norm": th_n})
    loglog_svg(outdir / "branch_energy.svg", d,
               {"energy": [r["energy"] for r in rows], "linking bound": [r["c_ub"] for r in rows]},
               "energy and linking bound", guides={"energy": th_e})


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_bands(cfg: RunConfig, out: Path, seed: int, args) -> int:
    g = cfg["grid"]
    bands = bloch_bands(S.build_potential(cfg), g["n_bands"], g["n_k"], g["points_per_cell"])
    gaps = find_gaps(bands)
    cols = ["k"] + [f"E{j}" for j in range(bands.n_bands)]
    if bands.k.ndim == 1:
        rows = [dict(zip(cols, [k, *e])) for k, e in zip(bands.k, bands.energies)]
    else:
        cols = ["kx", "ky"] + cols[1:]
        rows = [dict(zip(cols, [*k, *e])) for k, e in zip(bands.k, bands.energies)]
    write_csv(out / "bands.csv", rows, cols, f"band functions | seed={seed}")
    write_json(out / "gaps.json", {"seed": seed, "potential": bands.potential.describe(),
                                   "gaps": [gp.as_dict() for gp in gaps]})
    if _plots(cfg) and bands.k.ndim == 1:
        _line_svg(out / "bands.svg", bands.k, {f"band {j}": bands.band(j) for j in range(bands.n_bands)},
                  "k", "E", "band functions")
    for gp in gaps:
        print(f"gap ({gp.a:.10g}, {gp.b:.10g}) between bands {gp.lower_band} and {gp.upper_band}")
    return EXIT_OK


def cmd_split(cfg: RunConfig, out: Path, seed: int, args) -> int:
    spot, gap = S.shifted_problem(cfg)
    op = DiscreteOperator(spot, cfg.get("grid", "cells"), cfg.get("grid", "points_per_cell"))
    split = build_split(op)
    write_json(out / "gap.json", {"seed": seed, "gap": gap.as_dict(), "potential": spot.describe(),
                                  "alpha0": split.alpha0, "beta0": split.beta0, "dim_y": split.dim_y,
                                  "dim_z": split.dim_z, "backend": split.backend})
    rows = []
    for lam in lambda_grid(gap):
        co = coercivity(float(lam), split, gap)
        rows.append({"lambda": float(lam), "alpha": co.alpha, "beta": co.beta, "N_lambda": co.n_lambda})
    write_csv(out / "coercivity.csv", rows, header_comment=f"coercivity constants | seed={seed}")
    reports = S.run_suite("spectral", cfg, seed)["reports"]
    _emit(reports, out, seed)
    return _status(reports)


def _suite_command(name: str):
    def run(cfg: RunConfig, out: Path, seed: int, args) -> int:
        reports = S.run_suite(name, cfg, seed, log.info)["reports"]
        _emit(reports, out, seed, SWEEP_COLUMNS)
        if name == "sweep" and _plots(cfg):
            nl = S.build_nonlinearity(cfg)
            for rep in reports:
                if rep.name == "branch-rates":
                    _sweep_plots(rep, out, nl.beta, nl.dimension)
        return _status(reports)

    run.__name__ = f"cmd_{name}"
    return run


def cmd_solve(cfg: RunConfig, out: Path, seed: int, args) -> int:
    if args.lam is None:
        raise ConfigError("--lambda", "solve needs --lambda")
    ctx = S.gap_context(cfg, cfg.get("grid", "domain_factor"))
    lam = float(args.lam)
    if not ctx.gap.contains(lam):
        raise ConfigError("--lambda", f"lambda not in gap: {lam} is outside ({ctx.gap.a}, {ctx.gap.b})")
    nl = S.build_nonlinearity(cfg)
    pt = solve_point(lam, ctx, nl, S.sweep_config(cfg), rng=S.suite_rng(seed, "sweep"))
    meta = {"seed": seed, "gap": ctx.gap.as_dict(), "potential": ctx.potential.describe(), **pt.row()}
    write_json(out / "solution.json", meta)
    if not pt.converged:
        print(f"no nontrivial solution at lambda={lam}: {pt.message}")
        return EXIT_FAIL
    write_csv(out / "solution.csv", [{"x": x, "u": u} for x, u in zip(pt.op.x, pt.u)], ["x", "u"],
              f"critical point lambda={lam} | seed={seed}")
    print(f"lambda={lam} cells={pt.cells} |u|_H1={pt.h1_norm:.6g} E={pt.energy:.6g} c_ub={pt.c_ub:.6g}")
    return EXIT_OK


def cmd_full_report(cfg: RunConfig, out: Path, seed: int, args) -> int:
    gating = list(cfg.suites)
    names = gating + [s for s in ("assumptions",) if s not in gating]
    jobs = cfg.get("run", "jobs")
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(S.run_suite, names, [cfg] * len(names), [seed] * len(names)))
    else:
        results = [S.run_suite(n, cfg, seed, log.info) for n in names]
    summary, lines, ok = [], [], True
    for res in results:
        name = res["suite"]
        gate = name in gating
        sub = out / name
        for rep in res["reports"]:
            write_report(rep, sub, seed, SWEEP_COLUMNS if rep.name == "branch-rates" else None)
            if gate:
                ok &= rep.passed
            tag = "" if gate else " [diagnostic]"
            lines.append(rep.summary_line() + tag)
            for key in rep.failures():
                lines.append(f"    {key}: {rep.verdicts[key]}")
        if name == "sweep" and _plots(cfg):
            nl = S.build_nonlinearity(cfg)
            for rep in res["reports"]:
                if rep.name == "branch-rates":
                    _sweep_plots(rep, sub, nl.beta, nl.dimension)
        summary.append({"suite": name, "gating": gate, "passed": all(r.passed for r in res["reports"]),
                        "seconds": res["seconds"], "reports": [r.to_dict() for r in res["reports"]]})
    write_json(out / "full_report.json", {"seed": seed, "config": cfg.as_dict(), "passed": ok,
                                          "suites": summary})
    lines.append(f"overall: {'PASS' if ok else 'FAIL'} (seed={seed})")
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {
    "bands": cmd_bands,
    "split": cmd_split,
    "bloch-check": _suite_command("bloch"),
    "zeta-check": _suite_command("zeta"),
    "minorant-check": _suite_command("minorant"),
    "solve": cmd_solve,
    "sweep": _suite_command("sweep"),
    "lp-check": _suite_command("lp"),
    "full-report": cmd_full_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gapbif", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI run configuration (default: the shipped default.ini)")
        p.add_argument("--out", help="output directory (overrides output.dir)")
        p.add_argument("--seed", type=int, help="random seed (overrides run.seed)")
        p.add_argument("--jobs", type=int, help="worker processes (overrides run.jobs)")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "solve":
            p.add_argument("--lambda", dest="lam", type=float, help="spectral parameter inside the gap")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.values["run"]["seed"] = args.seed
        if args.jobs is not None:
            if args.jobs < 1:
                raise ConfigError("--jobs", "must be >= 1")
            cfg.values["run"]["jobs"] = args.jobs
        out = Path(args.out or cfg.get("output", "dir"))
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out, cfg.seed, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
