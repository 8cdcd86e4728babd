"""Command line entry point.

Exit status: 0 when every check passes, 1 when a check fails, 2 for usage
or configuration errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import functionals as fn
from . import harness as hx
from .domain import build_grid, coefficient_from_spec, validate_coefficient
from .elliptic import (check_hopf_distance, check_phi1_growth, phi0_exact, phi1_exact,
                       solve_phi0, solve_phi1)
from .errors import BlowupLabError, ConfigError
from .ode import (OdeProblem, RiccatiProblem, integrate_riccati, integrate_sideris,
                  rescale_sideris, riccati_closed_form)
from .wave import LifespanResult, prepare_weights

log = logging.getLogger("exterior_blowup")

OK, FAILED, USAGE = 0, 1, 2


def _overrides(items) -> dict[str, str]:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"--override expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _load(args) -> hx.ExperimentConfig:
    ov = _overrides(args.override)
    if args.spacing is not None:
        ov["numerics.spacing"] = repr(args.spacing)
    if args.out is not None:
        ov["outputs.dir"] = args.out
    if args.plot:
        ov["outputs.plot"] = "true"
    if args.config is None:
        return hx.ExperimentConfig.from_mapping(ov)
    return hx.load_config(args.config, ov)


# ---------------------------------------------------------------------------

def cmd_elliptic(cfg: hx.ExperimentConfig, args) -> int:
    coeff = coefficient_from_spec(cfg.coefficient)
    grid = build_grid(cfg.domain, cfg.spacing, cfg.T_max, coeff.C_ell, n=cfg.problem.n)
    ell = validate_coefficient(coeff, grid)
    phi1 = solve_phi1(coeff, grid)
    phi0 = solve_phi0(coeff, grid) if grid.n >= 3 else None
    r = grid.nodes
    cols = {"r": r, "a": coeff(r), "phi1": phi1.values}
    if phi0 is not None:
        cols["phi0"] = phi0.values
    if coeff.name == "identity":
        cols["phi1_exact"] = phi1_exact(r, grid.n, grid.r0)
        if phi0 is not None:
            cols["phi0_exact"] = phi0_exact(r, grid.n, grid.r0)
    out = Path(cfg.out_dir)
    hx._write(out / "elliptic.csv", hx.csv_text(list(cols), zip(*cols.values())))
    violations = phi1.violations() + ([] if phi0 is None else phi0.violations())
    rows = [("ellipticity", ell.passed, ell.min_a, ell.max_a)]
    g = check_phi1_growth(phi1)
    rows.append(("phi1_growth", g.passed, g.constant, g.slope_fit))
    if phi0 is not None:
        h = check_hopf_distance(phi0)
        rows.append(("hopf_distance", h.passed, h.constant, h.slope_fit))
    rows.append(("max_principle", not violations, float(len(violations)), math.nan))
    hx._write(out / "elliptic_checks.csv", hx.csv_text(("name", "pass", "value", "slope"), rows))
    for v in violations:
        log.error("%s", v)
    ok = all(r[1] for r in rows)
    print(f"elliptic: {'pass' if ok else 'FAIL'} ({out / 'elliptic_checks.csv'})")
    return OK if ok else FAILED


def cmd_simulate(cfg: hx.ExperimentConfig, args) -> int:
    eps = args.epsilon if args.epsilon is not None else cfg.epsilons[0]
    entry = hx.simulate_one(cfg, eps)
    out = Path(cfg.out_dir)
    trace_path = out / hx.trace_name(eps)
    hx._write(trace_path, hx.trace_csv(entry.trace))
    manifest = {
        "tool": "exterior_blowup", "version": hx.version(), "timestamp": hx.timestamp(),
        "config": cfg.to_mapping(), "config_text": cfg.to_text(),
        "epsilon": eps, "horizon": entry.horizon, "trace": trace_path.name,
        "lifespan": hx.lifespan_record(entry.trace), "constants": entry.constants,
        "tolerances": {"lifespan_tol": cfg.lifespan_tol, "inequality_tol": cfg.inequality_tol,
                       "U_max": cfg.U_max},
        "error": entry.error,
    }
    hx.write_json(out / "run_manifest.json", manifest)
    b = entry.trace.blowup
    if b is None:
        print(f"simulate: no blowup by t = {entry.horizon}")
    else:
        print(f"simulate: T_num = {b.T_num!r} converged = {b.converged}")
    return OK if (b is not None and b.converged and not entry.error) else FAILED


def _weights(sim, horizon: float) -> fn.WeightPair:
    grid = build_grid(sim.domain, sim.spacing, horizon, sim.coefficient.C_ell, n=sim.spec.n)
    return prepare_weights(sim, grid)


def cmd_verify(cfg: hx.ExperimentConfig, args) -> int:
    if args.manifest is None:
        raise ConfigError("verify needs --manifest pointing at a run manifest")
    mpath = Path(args.manifest)
    man = json.loads(mpath.read_text())
    cfg = hx.ExperimentConfig.from_text(man["config_text"], _overrides(args.override))
    trace = hx.read_trace_csv(mpath.parent / man["trace"])
    if man.get("lifespan"):
        L = man["lifespan"]
        trace.blowup = LifespanResult(T_num=L["T_num"], threshold=L["threshold"],
                                      dt_used=L["dt_used"], converged=L["converged"])
    # inequalities use the run's own grid so the weights match the trace exactly
    sim = cfg.sim_config(man["epsilon"], man.get("horizon", cfg.T_max))
    weights = _weights(sim, sim.T_max)
    trace.meta.update(fn.data_integrals(weights, sim.data), epsilon=man["epsilon"],
                      source_off=False)
    ctx = fn.build_context(trace, weights, cfg.problem, cfg.domain)
    rows = []
    for which in hx.inequalities_for(cfg.problem):
        r = fn.verify_inequality(trace, which, ctx, tolerance=cfg.inequality_tol)
        rows.append(("inequality", r.name, r.min_margin, math.nan, math.nan, r.passed))
    t_grid = fn.LEMMA_T_GRID
    lemma_weights = _weights(sim, float(t_grid[-1]))
    lemmas = ["L24", "L26"] + (["L25"] if lemma_weights.phi0 is not None else [])
    for which in lemmas:
        b = fn.verify_estimate_lemma(lemma_weights, cfg.problem, cfg.domain, t_grid, which)
        rows.append(("lemma", b.name, math.nan, b.slope_fit, b.exponent_theory, b.passed))
    out = mpath.parent if args.out is None else Path(args.out)
    hx._write(out / "verify.csv", hx.csv_text(
        ("kind", "name", "min_margin", "slope_fit", "exponent_theory", "pass"), rows))
    ok = all(r[-1] for r in rows)
    for r in rows:
        print(f"{r[1]:>20s}: {'pass' if r[-1] else 'FAIL'}")
    return OK if ok else FAILED


def ode_cases():
    """Riccati instances covering both the power and exponential regimes."""
    return [
        RiccatiProblem(C9=1.0, M=1.0, epsilon=0.1, n=1, p=2.0, R=1.0),
        RiccatiProblem(C9=1.0, M=1.0, epsilon=0.2, n=3, p=2.0, R=1.0),
        RiccatiProblem(C9=0.7, M=2.0, epsilon=0.3, n=2, p=1.5, R=1.5),
        RiccatiProblem(C9=1.0, M=1.0, epsilon=0.5, n=2, p=3.0, R=1.0),
        RiccatiProblem(C9=0.5, M=1.0, epsilon=0.4, n=3, p=1.5, R=2.0),
        RiccatiProblem(C9=1.0, M=1.0, epsilon=0.3, n=5, p=1.5, R=1.0),
        RiccatiProblem(C9=2.0, M=0.5, epsilon=0.2, n=1, p=3.0, R=1.0),
        RiccatiProblem(C9=1.0, M=1.0, epsilon=0.5, n=1, p=1.01, R=1.0),
    ]


def cmd_verify_ode(cfg: hx.ExperimentConfig, args) -> int:
    rows = []
    for i, prob in enumerate(ode_cases()):
        c = riccati_closed_form(prob).value
        nb = integrate_riccati(prob)
        ratio = nb.value / c
        rows.append((f"riccati_{i}_n{prob.n}_p{prob.p!r}", c, nb.value, ratio,
                     bool(abs(ratio - 1) <= 0.01 and nb.certified)))
    deltas = [1e-1, 1e-2, 1e-3, 1e-4]
    T = []
    for d in deltas:
        ode = OdeProblem(p=2.0, a=2.0, q=3.0, R=1.0, delta=d)
        b = integrate_sideris(ode)
        T.append(b.value)
        h = integrate_sideris(rescale_sideris(ode))
        pred = h.value * d ** (-ode.delta_exponent)
        ratio = b.value / pred
        rows.append((f"sideris_rescale_delta{d!r}", pred, b.value, ratio,
                     bool(abs(ratio - 1) <= 0.02 and b.certified)))
    slope = float(np.polyfit(np.log(deltas), np.log(T), 1)[0])
    rows.append(("sideris_delta_slope", -1.0, slope, slope / -1.0, bool(abs(slope + 1) <= 0.1)))
    out = Path(cfg.out_dir)
    hx._write(out / "ode_cases.csv", hx.csv_text(("case", "T_closed", "T_num", "ratio", "pass"),
                                                 rows))
    ok = all(r[-1] for r in rows)
    print(f"verify-ode: {sum(r[-1] for r in rows)}/{len(rows)} pass")
    return OK if ok else FAILED


def cmd_sweep(cfg: hx.ExperimentConfig, args) -> int:
    result = hx.run_sweep(cfg)
    files = hx.emit_outputs(result)
    fit = None
    try:
        fit = hx.fit_sweep(result)
    except BlowupLabError as exc:
        log.error("%s", exc)
    for e in result.entries:
        print(f"eps = {e.epsilon!r}: T_num = {e.T_num!r} converged = {e.converged} "
              f"checks = {'pass' if e.checks_passed else 'FAIL'}")
    if fit is not None:
        print(f"fit: slope = {fit.slope:.4f} theory = {fit.alpha_theory!r} "
              f"pass = {fit.passed} upper-bound consistent = {fit.upper_bound_consistent}")
        if not fit.passed:
            log.warning("fitted slope differs from the theory exponent (sharpness is not claimed)")
    print(f"outputs in {files['manifest'].parent}")
    ok = (result.all_converged and result.monotone and all(e.checks_passed for e in result.entries)
          and fit is not None and fit.upper_bound_consistent)
    return OK if ok else FAILED


def cmd_fit(cfg: hx.ExperimentConfig, args) -> int:
    path = Path(args.summary) if args.summary else Path(cfg.out_dir) / "summary.csv"
    trace = np.genfromtxt(path, delimiter=",", names=True, dtype=None, encoding=None)
    eps = np.atleast_1d(trace["epsilon"]).astype(float)
    T = np.atleast_1d(trace["T_num"]).astype(float)
    fit = hx.fit_scaling(eps, T, cfg.alpha_theory, cfg.fit_tol, p=cfg.problem.p)
    hx.write_json(path.parent / "fit.json", fit.as_dict())
    print(json.dumps(hx._json_clean(fit.as_dict()), sort_keys=True))
    return OK if fit.upper_bound_consistent else FAILED


COMMANDS = {"elliptic": cmd_elliptic, "simulate": cmd_simulate, "sweep": cmd_sweep,
            "verify": cmd_verify, "verify-ode": cmd_verify_ode, "fit": cmd_fit}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="exterior-blowup",
                                     description="Blowup experiments for exterior semilinear waves.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="config file or JSON manifest")
        p.add_argument("--out", help="output directory")
        p.add_argument("--plot", action="store_true", help="write an SVG lifespan plot")
        p.add_argument("--spacing", type=float, help="radial grid spacing")
        p.add_argument("--override", action="append", metavar="KEY=VALUE", default=[])
        if name == "simulate":
            p.add_argument("--epsilon", type=float)
        if name == "verify":
            p.add_argument("--manifest", help="run manifest written by simulate")
        if name == "fit":
            p.add_argument("--summary", help="summary CSV (default: outputs.dir/summary.csv)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return USAGE
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE
