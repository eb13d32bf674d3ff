"""Verification campaigns driven by a :class:`RunConfig`.

Each suite takes ``(cfg, rng)`` and returns a list of :class:`Report`.  The
CLI and the acceptance tests call the same functions.
"""

from __future__ import annotations

import math
import time
from typing import Callable

import numpy as np

from .blochtest import GapContext, bloch_residual, verify_bloch_properties, verify_zeta_estimates
from .branch import SweepConfig, check_branch_rates, geometric_schedule, solver_invariants, summarize_points, sweep
from .config import SUITES, RunConfig
from .lpcheck import LpProbeSet, lp_continuity_scan, lp_direct_sum_check, riesz_agreement
from .nonlinearity import (ConvexMinorant, EnergyFunctional, Nonlinearity, Weight, builtin_nonlinearity,
                           check_assumptions, check_minorant_properties, lower_bound_c1)
from .reporting import Report
from .solver import SolverConfig
from .spectral import (DiscreteOperator, PeriodicPotential, bloch_bands, build_split, coercivity, find_gaps,
                       lambda_grid, quadratic_form, shift_to_gap, split_from_matrix, supercell_spectrum)

# --------------------------------------------------------------------------
# config -> objects
# --------------------------------------------------------------------------


def build_potential(cfg: RunConfig) -> PeriodicPotential:
    p = cfg["potential"]
    name, dim = p["name"], p["dimension"]
    params = {"mathieu": (("q", p["q"]),),
              "constant": (("c", p["c"]),),
              "two_cosine": (("q1", p["q"]), ("q2", p["q2"])),
              "zero": ()}[name]
    return PeriodicPotential(name, params, dim)


def build_nonlinearity(cfg: RunConfig) -> Nonlinearity:
    n = cfg["nonlinearity"]
    return builtin_nonlinearity(n["family"], n["alpha"], n["beta"], Weight(cfg.get("weight", "name")),
                                cfg.get("potential", "dimension"))


def gap_shift(cfg: RunConfig):
    s = cfg.get("gap", "shift")
    return None if s == "midpoint" else s


def gap_context(cfg: RunConfig, domain_factor: float = 1.0) -> GapContext:
    g = cfg["grid"]
    return GapContext.from_potential(build_potential(cfg), cfg.get("gap", "index"), g["points_per_cell"],
                                     gap_shift(cfg), g["n_k"], domain_factor=domain_factor)


def shifted_problem(cfg: RunConfig):
    """``(shifted potential, gap containing 0)`` for the configured gap."""
    g = cfg["grid"]
    idx = cfg.get("gap", "index")
    bands = bloch_bands(build_potential(cfg), max(g["n_bands"], idx + 3), g["n_k"], g["points_per_cell"])
    gaps = find_gaps(bands)
    if len(gaps) <= idx:
        raise ValueError(f"gap index {idx} not found ({len(gaps)} gaps resolved)")
    return shift_to_gap(build_potential(cfg), gaps[idx], gap_shift(cfg))


def solver_config(cfg: RunConfig) -> SolverConfig:
    s = cfg["solver"]
    return SolverConfig(s["tol"], s["max_iter"], s["damping"], s["trivial_threshold"])


def sweep_config(cfg: RunConfig) -> SweepConfig:
    s, lk = cfg["sweep"], cfg["linking"]
    return SweepConfig(s["d0_fraction"], s["d_min_fraction"], s["points"], s["ratio"], s["continuation"],
                       lk["ascent_iters"], lk["boundary_samples"], s["localization_tol"], solver_config(cfg))


def suite_rng(seed: int, suite: str) -> np.random.Generator:
    """Independent stream per suite, so suites can run in any order or in parallel."""
    return np.random.default_rng(np.random.SeedSequence([seed, SUITES.index(suite)]))


# --------------------------------------------------------------------------
# suites
# --------------------------------------------------------------------------


def minorant_suite(cfg: RunConfig, rng) -> list:
    c = cfg["checks"]
    pairs = c["minorant_pairs"]
    reports = []
    minorants = []
    for i in range(pairs):
        a, b = np.sort(rng.uniform(2.0, 6.0, 2))
        m = ConvexMinorant(float(a), float(b))
        minorants.append(m)
        rep = check_minorant_properties(m, c["minorant_samples"], rng, rtol=1e-12)
        rep.name = f"convex-minorant-{i}"
        reports.append(rep)
    quad = Report("minorant-quadrature", anchor="closed-form H against numerical integration of h",
                  params={"points": c["quadrature_points"], "tol": 1e-10})
    per_pair = max(1, c["quadrature_points"] // pairs)
    worst = 0.0
    for m in minorants:
        for u in rng.uniform(-10.0, 10.0, per_pair):
            exact = float(m.H(u))
            err = abs(m.H_by_quadrature(u) - exact) / max(1.0, abs(exact))
            worst = max(worst, err)
        quad.add_row(alpha=m.alpha, beta=m.beta, rho=m.rho, kappa=m.kappa)
    quad.verdict("closed_form_matches_quadrature", worst <= 1e-10, max_rel_error=worst)
    return reports + [quad]


def _normalized(v, op):
    n = op.h1_norm(v)
    return v / n if n > 0 else v


def _random_field(op, rng):
    """Smooth bumps plus a little white noise."""
    half = op.cells / 2.0
    k = int(rng.integers(1, 5))
    u = np.zeros(op.size)
    for c, w, a in zip(rng.uniform(-half, half, k), rng.uniform(0.1, 2.0, k), rng.standard_normal(k)):
        u += a * np.exp(-0.5 * ((op.x - c) / w) ** 2)
    return u + 0.05 * rng.standard_normal(op.size)


def spectral_suite(cfg: RunConfig, rng) -> list:
    g, c = cfg["grid"], cfg["checks"]
    pot = build_potential(cfg)
    m, nk, cells = g["points_per_cell"], g["n_k"], g["cells"]
    idx = cfg.get("gap", "index")
    nb = max(g["n_bands"], idx + 3)
    reports = []

    # gap edges against a 4x k-grid and a dense supercell
    edges = Report("gap-edges", anchor="band-gap edges of the periodic operator",
                   params={"potential": pot.describe(), "points_per_cell": m, "n_k": nk, "gap_index": idx,
                           "oracle_factor": c["oracle_factor"]})
    gap = find_gaps(bloch_bands(pot, nb, nk, m))[idx]
    f = c["oracle_factor"]
    fine = find_gaps(bloch_bands(pot, nb, f * (nk - 1) + 1, m))[idx]
    edges.add_row(source="bands", a=gap.a, b=gap.b, k_a=gap.k_a, k_b=gap.k_b)
    edges.add_row(source="k_grid_x{}".format(f), a=fine.a, b=fine.b, k_a=fine.k_a, k_b=fine.k_b)
    rel = max(abs(gap.a - fine.a), abs(gap.b - fine.b)) / max(abs(gap.a), abs(gap.b), 1.0)
    edges.verdict("k_grid_oracle", rel <= 1e-6, rel_error=rel)
    if pot.dimension == 1:
        L = f * cells
        L += L % 2  # the edge quasi-momenta 0 and pi must be sampled
        ev = supercell_spectrum(pot, L, m)
        lo, hi = float(ev[L * (idx + 1) - 1]), float(ev[L * (idx + 1)])
        edges.add_row(source=f"supercell_{L}", a=lo, b=hi, k_a=float("nan"), k_b=float("nan"))
        rel_s = max(abs(gap.a - lo), abs(gap.b - hi)) / max(abs(lo), abs(hi), 1.0)
        edges.verdict("supercell_oracle", rel_s <= 1e-6, rel_error=rel_s)
    half = find_gaps(bloch_bands(pot, nb, 2 * nk - 1, m))[idx]
    drift = max(abs(half.a - gap.a), abs(half.b - gap.b))
    edges.verdict("k_refinement", drift < 1e-6, drift=drift)
    reports.append(edges)

    # adding a constant moves every band by exactly that constant
    shift = Report("constant-shift", anchor="spectrum of -Laplacian + c is the free spectrum shifted by c")
    c0 = 0.7
    zero = PeriodicPotential.constant(0.0, pot.dimension)
    const = PeriodicPotential.constant(c0, pot.dimension)
    e0 = bloch_bands(zero, 4, 33, m).energies
    e1 = bloch_bands(const, 4, 33, m).energies
    band_err = float(np.max(np.abs(e1 - e0 - c0)) / max(1.0, float(np.max(np.abs(e0)))))
    op0, op1 = DiscreteOperator(zero, 4, m), DiscreteOperator(const, 4, m)
    mat_err = float(abs(op1.matrix - op0.matrix - c0 * np.eye(op0.size)).max())
    shift.add_row(c=c0, band_rel_error=band_err, matrix_error=mat_err)
    shift.verdict("band_shift", band_err <= 1e-12, rel_error=band_err)
    shift.verdict("matrix_shift", mat_err <= 1e-12, error=mat_err)
    reports.append(shift)

    # splitting inequalities on random samples
    spot, sgap = shift_to_gap(pot, gap, gap_shift(cfg))
    op = DiscreteOperator(spot, cells, m)
    split = build_split(op)
    sp = Report("splitting-inequalities", anchor="coercivity of Q_lambda on the negative and positive subspaces",
                params={"cells": cells, "samples": c["spectral_samples"], "slack": 1e-8,
                        "alpha0": split.alpha0, "beta0": split.beta0, "a": sgap.a, "b": sgap.b,
                        "backend": split.backend})
    samples = []
    for _ in range(c["spectral_samples"]):
        y = _normalized(split.P(_random_field(op, rng)), op)
        z = _normalized(split.Q(_random_field(op, rng)), op)
        samples.append((y, z))
    worst = {"y": math.inf, "z": math.inf, "mixed": math.inf}
    additivity = 0.0
    for lam in lambda_grid(sgap):
        co = coercivity(float(lam), split, sgap)
        sy = sz = sm = math.inf
        for y, z in samples:
            qy, qz = quadratic_form(y, lam, op), quadratic_form(z, lam, op)
            sy = min(sy, -co.alpha * op.h1_norm(y) ** 2 - qy)
            sz = min(sz, qz - co.beta * op.h1_norm(z) ** 2)
            sm = min(sm, qz - qy - co.n_lambda * op.h1_norm(y + z) ** 2)
        worst = {"y": min(worst["y"], sy), "z": min(worst["z"], sz), "mixed": min(worst["mixed"], sm)}
        sp.add_row(**{"lambda": float(lam), "alpha": co.alpha, "beta": co.beta, "N_lambda": co.n_lambda,
                      "slack_y": sy, "slack_z": sz, "slack_mixed": sm})
    for y, z in samples:
        q = quadratic_form(y + z, 0.0, op) - quadratic_form(y, 0.0, op) - quadratic_form(z, 0.0, op)
        additivity = max(additivity, abs(q))
    for k, v in worst.items():
        sp.verdict(f"inequality_{k}", v >= -1e-8, min_slack=v)
    sp.verdict("Q0_additivity", additivity <= 1e-10, max_cross_term=additivity)
    reports.append(sp)

    # FFT-based projector against a dense eigendecomposition, and box-size truncation
    proj = Report("projector-consistency", anchor="spectral projector P: backends and box truncation",
                  params={"cells": cells})
    if op.dimension == 1 and op.size <= 4096:
        dense = split_from_matrix(op, op.matrix.toarray())
        V = [_random_field(op, rng) for _ in range(10)]
        err = max(op.l2_norm(split.P(v) - dense.P(v)) / op.l2_norm(v) for v in V)
        proj.add_row(check="bloch_vs_dense", value=err)
        proj.verdict("bloch_matches_dense", err <= 1e-10, max_error=err)
    if op.dimension == 1:
        # the box is periodic, so P feels its own images; the effect must shrink as the box grows
        changes, prev, prev_op = [], None, None
        for L in (cells, 2 * cells, 4 * cells):
            big = DiscreteOperator(spot, L, m)
            pu = build_split(big).P(np.exp(-0.5 * (big.x / 0.5) ** 2))
            if prev is not None:
                off = (L // 2 - prev_op.cells // 2) * m
                changes.append(float(np.max(np.abs(pu[off:off + prev.size] - prev)) / np.max(np.abs(prev))))
                proj.add_row(check=f"box_{prev_op.cells}_to_{L}", value=changes[-1])
            prev, prev_op = pu, big
        proj.verdict("box_truncation_decays", changes[1] < 0.5 * changes[0], changes=changes)
    reports.append(proj)
    return reports


def bloch_suite(cfg: RunConfig, rng) -> list:
    c = cfg["checks"]
    ctx = gap_context(cfg)
    weight = Weight(cfg.get("weight", "name"))
    rep = verify_bloch_properties(ctx.wave, ctx.eta, c["bloch_radii"], weight, c["gammas"])
    op = ctx.operator(ctx.min_cells)
    res = bloch_residual(ctx.wave, op)
    rep.params["edge_wave_residual"] = res
    rep.verdict("edge_wave_is_generalized_eigenfunction", res <= 1e-8, residual=res)
    return [rep]


def zeta_suite(cfg: RunConfig, rng) -> list:
    c = cfg["checks"]
    ctx = gap_context(cfg)
    weight = Weight(cfg.get("weight", "name"))
    lams = [ctx.gap.b - d for d in sorted(c["zeta_distances"], reverse=True)]
    rep = verify_zeta_estimates(lams, ctx, weight, c["gammas"])
    leak = float(np.max(rep.column("leakage")))
    rep.verdict("zeta_in_positive_subspace", leak <= 1e-10, max_leakage=leak)
    return [rep]


def sweep_suite(cfg: RunConfig, rng, log: Callable = None) -> list:
    s = cfg["sweep"]
    ctx = gap_context(cfg, cfg.get("grid", "domain_factor"))
    nl = build_nonlinearity(cfg)
    scfg = sweep_config(cfg)
    schedule = geometric_schedule(ctx.gap.width, scfg.d0_fraction, scfg.d_min_fraction, scfg.points, scfg.ratio)
    points = sweep(schedule, ctx, nl, scfg, log=log, rng=rng)
    rates = check_branch_rates(points, nl, nl.dimension, s["d_max"])
    rates.params.update({"gap": ctx.gap.as_dict(), "domain_factor": ctx.domain_factor,
                         **summarize_points(points)})
    return [rates, solver_invariants(points)]


def lp_suite(cfg: RunConfig, rng) -> list:
    c, g = cfg["checks"], cfg["grid"]
    spot, _ = shifted_problem(cfg)
    if spot.dimension != 1:
        raise ValueError("the L^p suite is implemented for 1-D potentials")
    m, L = g["points_per_cell"], c["lp_cells"]
    probes = LpProbeSet(seed=int(rng.integers(2**31)), n_random=c["lp_random_probes"])
    op = DiscreteOperator(spot, L, m)
    return [lp_continuity_scan(spot, L, m, probes),
            riesz_agreement(op, build_split(op), c["riesz_nodes"], c["riesz_vectors"], rng),
            lp_direct_sum_check(spot, L, m, probes, n_pairs=c["lp_pairs"])]


def gradient_suite(cfg: RunConfig, rng) -> list:
    c = cfg["checks"]
    spot, gap = shifted_problem(cfg)
    nl = build_nonlinearity(cfg)
    op = DiscreteOperator(spot, cfg.get("grid", "cells"), cfg.get("grid", "points_per_cell"))
    lam = gap.a + 0.75 * gap.width
    E = EnergyFunctional(lam, op, nl)
    eps = c["gradient_eps"]
    rep = Report("energy-gradient", anchor="gradient of the energy functional against central differences",
                 params={"lambda": lam, "eps": eps, "pairs": c["gradient_pairs"], "cells": op.cells})
    worst = ident = 0.0
    for i in range(c["gradient_pairs"]):
        u = _random_field(op, rng)
        v = _random_field(op, rng)
        v /= op.l2_norm(v)
        fd = (E(u + eps * v) - E(u - eps * v)) / (2 * eps)
        an = op.inner(E.gradient(u), v)
        err = abs(fd - an) / max(abs(an), 1e-12)
        # E(u) - <grad E(u), u>/2 = int (f u/2 - F)
        lhs = E(u) - 0.5 * op.inner(E.gradient(u), u)
        rhs = op.integrate(0.5 * E.f(u) * u - E.F(u))
        id_err = abs(lhs - rhs) / max(1.0, abs(rhs))
        worst, ident = max(worst, err), max(ident, id_err)
        rep.add_row(pair=i, directional=an, central_difference=fd, rel_error=err, identity_error=id_err)
    rep.verdict("central_difference", worst < 1e-6, max_rel_error=worst)
    rep.verdict("energy_identity", ident <= 1e-10, max_rel_error=ident)
    return [rep]


def assumptions_suite(cfg: RunConfig, rng) -> list:
    nl = build_nonlinearity(cfg)
    rep = check_assumptions(nl)
    for delta in (1e-1, 1e-2, 1e-3):
        try:
            rep.add_row(delta=delta, c1=lower_bound_c1(nl, delta))
        except ValueError:
            rep.add_row(delta=delta, c1=float("nan"))
    return [rep]


SUITE_FUNCS = {
    "minorant": minorant_suite,
    "spectral": spectral_suite,
    "bloch": bloch_suite,
    "zeta": zeta_suite,
    "sweep": sweep_suite,
    "lp": lp_suite,
    "gradient": gradient_suite,
    "assumptions": assumptions_suite,
}


def run_suite(name: str, cfg: RunConfig, seed: int = None, log: Callable = None) -> dict:
    """Run one suite; exceptions become a failing report instead of propagating."""
    seed = cfg.seed if seed is None else seed
    t0 = time.perf_counter()
    try:
        if name == "sweep":
            reports = sweep_suite(cfg, suite_rng(seed, name), log)
        else:
            reports = SUITE_FUNCS[name](cfg, suite_rng(seed, name))
    except Exception as exc:
        rep = Report(f"{name}-error", anchor=f"{name} suite")
        rep.verdict("completed", False, error=f"{type(exc).__name__}: {exc}")
        reports = [rep]
    return {"suite": name, "reports": reports, "seconds": time.perf_counter() - t0}
