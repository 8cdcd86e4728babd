"""End-to-end acceptance checks, one test per criterion.

Each test appends a ``criterion N: PASS|FAIL ...`` line that the terminal
summary prints in a dedicated section.
"""
import math
import time

import numpy as np
import pytest

from exterior_blowup import functionals as fn
from exterior_blowup import harness as hx
from exterior_blowup.domain import (DomainSpec, ProblemSpec, SourceKind, build_grid,
                                    bump_coefficient, identity_coefficient)
from exterior_blowup.elliptic import check_hopf_distance, solve_phi0, solve_phi1
from exterior_blowup.ode import (OdeProblem, integrate_riccati, integrate_sideris,
                                 rescale_sideris, riccati_closed_form, unscaled_time)
from exterior_blowup.cli import ode_cases


def record(log, number, ok, detail, started):
    log.append(f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail} "
               f"({time.perf_counter() - started:.2f} s)")
    return ok


def max_rel(a, b):
    return float(np.max(np.abs(a - b) / np.abs(b)))


def phi1_oracle(r, n):
    if n == 1:
        return np.exp(r) - np.exp(2.0 - r)
    return 4 * math.pi * (np.sinh(r) - math.sinh(1.0) * np.exp(-(r - 1.0))) / r


def test_criterion_1_elliptic_oracles(acceptance_log):
    t0 = time.perf_counter()
    results = {}
    for label, n in (("phi0_n3", 3), ("phi1_n1", 1), ("phi1_n3", 3)):
        errs = []
        for h in (1e-3, 5e-4):
            g = build_grid(DomainSpec.for_dimension(n, 1.0, 2.0), h, 10.0, n=n)
            r = g.nodes[1:]
            if label == "phi0_n3":
                num, ref = solve_phi0(identity_coefficient(), g).values[1:], 1.0 - 1.0 / r
            else:
                num, ref = solve_phi1(identity_coefficient(), g).values[1:], phi1_oracle(r, n)
            errs.append(max_rel(num, ref))
        results[label] = (errs[0], errs[0] / errs[1])
    ok = all(e <= 1e-4 and 3.5 <= q <= 4.5 for e, q in results.values())
    detail = ", ".join(f"{k} err={e:.2e} ratio={q:.2f}" for k, (e, q) in results.items())
    assert record(acceptance_log, 1, ok, detail, t0), detail


PROFILES = [identity_coefficient(), bump_coefficient(0.5, 1.5, 0.4),
            bump_coefficient(-0.3, 1.5, 0.4), bump_coefficient(2.0, 2.0, 0.5),
            bump_coefficient(-0.5, 1.3, 0.2), bump_coefficient(1.0, 2.5, 0.8)]


def test_criterion_2_maximum_principle(acceptance_log):
    t0 = time.perf_counter()
    bad = []
    hopf = []
    for coeff in PROFILES:
        for n in (1, 3):
            g = build_grid(DomainSpec.for_dimension(n, 1.0, 2.0), 5e-3, 10.0, coeff.C_ell, n=n)
            phi1 = solve_phi1(coeff, g).values[1:]
            if not np.all(phi1 > 0):
                bad.append((coeff.name, coeff.params, n, "phi1"))
            if n == 3:
                w = solve_phi0(coeff, g)
                inner = w.values[1:]
                if not (np.all(inner > 0) and np.all(inner < 1)):
                    bad.append((coeff.name, coeff.params, n, "phi0"))
                fit = check_hopf_distance(w)
                hopf.append(fit.constant)
                if not fit.passed:
                    bad.append((coeff.name, coeff.params, n, "hopf"))
    ok = not bad and len(PROFILES) >= 5
    detail = f"{len(PROFILES)} profiles, min C** = {min(hopf):.3e}, violations = {bad}"
    assert record(acceptance_log, 2, ok, detail, t0), detail


def test_criterion_3_sideris(acceptance_log):
    t0 = time.perf_counter()
    deltas = np.array([1e-1, 1e-2, 1e-3, 1e-4])
    T, ratios = [], []
    for d in deltas:
        ode = OdeProblem(p=2, a=2, q=3, R=1, delta=d)
        b = integrate_sideris(ode)
        T.append(b.value)
        back = unscaled_time(ode, integrate_sideris(rescale_sideris(ode)).value)
        ratios.append(back / b.value)
    slope = float(np.polyfit(np.log(deltas), np.log(T), 1)[0])
    worst = max(abs(r - 1) for r in ratios)
    ok = abs(slope + 1) <= 0.1 and worst <= 0.02
    detail = f"slope = {slope:.4f}, worst round-trip deviation = {worst:.2e}"
    assert record(acceptance_log, 3, ok, detail, t0), detail


def test_criterion_4_riccati(acceptance_log):
    t0 = time.perf_counter()
    cases = ode_cases()
    regimes = set()
    worst = 0.0
    for prob in cases:
        regimes.add(prob.borderline)
        dev = abs(integrate_riccati(prob).value / riccati_closed_form(prob).value - 1)
        worst = max(worst, dev)
    ok = len(cases) >= 6 and regimes == {True, False} and worst <= 0.01
    detail = f"{len(cases)} cases, both regimes, worst relative deviation = {worst:.2e}"
    assert record(acceptance_log, 4, ok, detail, t0), detail


VELOCITY_SWEEP = {"numerics.spacing": "0.005"}


@pytest.fixture(scope="module")
def velocity_sweep():
    t0 = time.perf_counter()
    cfg = hx.ExperimentConfig.from_mapping(VELOCITY_SWEEP)
    return hx.run_sweep(cfg), time.perf_counter() - t0


def test_criterion_5_velocity_blowup(acceptance_log, velocity_sweep):
    t0 = time.perf_counter()
    result, elapsed = velocity_sweep
    entries = result.entries
    fit = hx.fit_sweep(result)
    names = {r.name for e in entries for r in e.reports}
    ok = (tuple(result.epsilons) == (0.8, 0.4, 0.2, 0.1)
          and result.all_converged
          and all(math.isfinite(e.T_num) for e in entries)
          and {"Ineq413", "Riccati417", "G0Nonnegative"} <= names
          and all(e.checks_passed for e in entries)
          and abs(fit.slope + 1.0) <= 0.2)
    T = ", ".join(f"{e.T_num:.4g}" for e in entries)
    detail = f"T_num = [{T}], slope = {fit.slope:.4f}, sweep {elapsed:.1f} s"
    assert record(acceptance_log, 5, ok, detail, t0), detail


def displacement_config(coefficient):
    return hx.ExperimentConfig.from_mapping({
        "problem.n": "3", "problem.p": "2.0", "problem.source": "displacement",
        "coefficient": coefficient, "data.f": "bump(1.0, 1.5, 0.4)", "data.g": "zero",
        "sweep.epsilons": "0.8, 0.4, 0.2", "numerics.spacing": "0.01",
        "numerics.sample_every": "10", "numerics.T_max": "400"})


def test_criterion_6_displacement_blowup(acceptance_log):
    t0 = time.perf_counter()
    parts, ok = [], True
    for coefficient in ("identity", "bump(-0.3, 1.5, 0.4)"):
        result = hx.run_sweep(displacement_config(coefficient))
        fit = hx.fit_sweep(result)
        names = {r.name for e in result.entries for r in e.reports}
        within = all(e.T_num <= fit.A_envelope * e.epsilon ** -2.0 * (1 + 1e-12)
                     for e in result.entries)
        ok &= (result.all_converged
               and {"Lemma31LowerBound", "Convexity33", "LowerBound36"} <= names
               and all(e.checks_passed for e in result.entries)
               and fit.upper_bound_consistent and within)
        T = ", ".join(f"{e.T_num:.4g}" for e in result.entries)
        parts.append(f"{coefficient}: T_num = [{T}] slope = {fit.slope:.3f} "
                     f"A = {fit.A_envelope:.3g} sharp = {fit.passed}")
    detail = "; ".join(parts)
    assert record(acceptance_log, 6, ok, detail, t0), detail


LEMMA_CASES = [(1, 2.0, SourceKind.VelocityPower), (3, 2.0, SourceKind.DisplacementPower),
               (3, 1.8, SourceKind.DisplacementPower)]


def test_criterion_7_estimate_lemmas(acceptance_log):
    t0 = time.perf_counter()
    t_grid = fn.LEMMA_T_GRID
    assert t_grid[-1] / t_grid[0] >= 10.0
    rows, ok = [], True
    for coeff in (identity_coefficient(), bump_coefficient(-0.3, 1.5, 0.4)):
        for n, p, kind in LEMMA_CASES:
            spec = ProblemSpec(n, p, kind)
            dom = DomainSpec.for_dimension(n, 1.0, 2.0)
            g = build_grid(dom, 1e-2, float(t_grid[-1]), coeff.C_ell, n=n)
            w = fn.WeightPair(solve_phi0(coeff, g) if n >= 3 else None, solve_phi1(coeff, g))
            for which in ("L24", "L25", "L26"):
                if which == "L25" and n < 3:
                    continue
                b = fn.verify_estimate_lemma(w, spec, dom, t_grid, which)
                ok &= b.passed
                rows.append(f"{coeff.name} n={n} p={p} {which} {b.slope_fit:.3f}"
                            f"/{b.exponent_theory:.3f}")
    detail = f"{len(rows)} fits (slope/theory): " + "; ".join(rows)
    assert record(acceptance_log, 7, ok, detail, t0), detail


def test_criterion_8_determinism(acceptance_log, velocity_sweep, tmp_path):
    t0 = time.perf_counter()
    result, _ = velocity_sweep
    first = hx.emit_outputs(result, tmp_path / "first")
    again = hx.run_sweep(hx.load_config(first["manifest"]))
    second = hx.emit_outputs(again, tmp_path / "second")
    csvs = sorted(k for k in first if first[k].suffix == ".csv")
    same = [first[k].read_bytes() == second[k].read_bytes() for k in csvs]
    ok = bool(csvs) and all(same) and set(first) == set(second)
    detail = f"{sum(same)}/{len(csvs)} CSV files byte-identical"
    assert record(acceptance_log, 8, ok, detail, t0), detail
