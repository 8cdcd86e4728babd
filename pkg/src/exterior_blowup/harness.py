"""Experiment configuration, amplitude sweeps, lifespan fits and file outputs.

Configurations are flat text files with one ``dotted.key = value`` per line
and ``#`` comments::

    problem.n = 3
    problem.p = 2
    problem.source = displacement
    coefficient = bump(-0.3, 1.5, 0.4)
    data.f = bump(1, 1.5, 0.4)
    data.g = zero
    sweep.epsilons = 0.8, 0.4, 0.2

Everything is deterministic: the same configuration gives byte-identical
CSV files.
"""
from __future__ import annotations

import csv
import datetime as _dt
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import functionals as fn
from .domain import (DomainSpec, ProblemSpec, SourceKind, build_grid, coefficient_from_spec,
                     format_profile, parse_profile)
from .errors import (BlowupLabError, ConfigError, InsufficientPoints, IoFailure,
                     NoBlowupObserved)
from .ode import ExponentialLifespan, lifespan_exponent
from .wave import InitialData, SimConfig, SimTrace, prepare_weights, run

log = logging.getLogger(__name__)

DEFAULTS: dict[str, str] = {
    "problem.n": "1",
    "problem.p": "2.0",
    "problem.source": "velocity",
    "domain.r0": "1.0",
    "domain.R": "2.0",
    "coefficient": "identity",
    "data.f": "bump(1.0, 1.5, 0.4)",
    "data.g": "bump(1.0, 1.5, 0.4)",
    "sweep.epsilons": "0.8, 0.4, 0.2, 0.1",
    "numerics.spacing": "0.005",
    "numerics.cfl": "0.5",
    "numerics.U_max": "100000000.0",
    "numerics.lifespan_tol": "0.02",
    "numerics.T_max": "20.0",
    "numerics.T_max_doublings": "4",
    "numerics.sample_every": "1",
    "numerics.fit_tol": "0.2",
    "numerics.inequality_tol": "1e-06",
    "numerics.workers": "1",
    "outputs.dir": "out",
    "outputs.plot": "false",
}


def version() -> str:
    try:
        from importlib.metadata import version as _v

        return _v("artifact")
    except Exception:  # pragma: no cover - uninstalled source tree
        from . import __version__

        return __version__


# ---------------------------------------------------------------------------
# Config

def parse_config_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        out[key] = value
    return out


def _float(raw: dict, key: str) -> float:
    try:
        return float(raw[key])
    except ValueError as exc:
        raise ConfigError(f"{key} must be a number, got {raw[key]!r}") from exc


def _int(raw: dict, key: str) -> int:
    try:
        return int(raw[key])
    except ValueError as exc:
        raise ConfigError(f"{key} must be an integer, got {raw[key]!r}") from exc


def _bool(text: str) -> bool:
    key = text.strip().lower()
    if key in ("1", "true", "yes", "on"):
        return True
    if key in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemSpec
    domain: DomainSpec
    coefficient: str
    f: str
    g: str
    epsilons: tuple[float, ...]
    spacing: float = 5e-3
    cfl: float = 0.5
    U_max: float = 1e8
    lifespan_tol: float = 0.02
    T_max: float = 20.0
    T_max_doublings: int = 4
    sample_every: int = 1
    fit_tol: float = 0.2
    inequality_tol: float = 1e-6
    workers: int = 1
    out_dir: str = "out"
    plot: bool = False

    @classmethod
    def from_mapping(cls, overrides: dict[str, str]) -> "ExperimentConfig":
        raw = dict(DEFAULTS)
        for key, value in overrides.items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown key {key!r}")
            raw[key] = str(value)
        try:
            problem = ProblemSpec(n=_int(raw, "problem.n"), p=_float(raw, "problem.p"),
                                  source_kind=SourceKind.parse(raw["problem.source"]))
            domain = DomainSpec.for_dimension(problem.n, _float(raw, "domain.r0"),
                                              _float(raw, "domain.R"))
        except BlowupLabError as exc:
            raise ConfigError(str(exc)) from exc
        coefficient = format_profile(*parse_profile(raw["coefficient"]))
        coefficient_from_spec(coefficient)
        f = format_profile(*parse_profile(raw["data.f"]))
        g = format_profile(*parse_profile(raw["data.g"]))
        InitialData.from_specs(f, g, 1.0)
        try:
            eps = tuple(float(x) for x in raw["sweep.epsilons"].split(",") if x.strip())
        except ValueError as exc:
            raise ConfigError(f"bad sweep.epsilons {raw['sweep.epsilons']!r}") from exc
        cfg = cls(problem=problem, domain=domain, coefficient=coefficient, f=f, g=g,
                  epsilons=eps, spacing=_float(raw, "numerics.spacing"),
                  cfl=_float(raw, "numerics.cfl"), U_max=_float(raw, "numerics.U_max"),
                  lifespan_tol=_float(raw, "numerics.lifespan_tol"),
                  T_max=_float(raw, "numerics.T_max"),
                  T_max_doublings=_int(raw, "numerics.T_max_doublings"),
                  sample_every=_int(raw, "numerics.sample_every"),
                  fit_tol=_float(raw, "numerics.fit_tol"),
                  inequality_tol=_float(raw, "numerics.inequality_tol"),
                  workers=_int(raw, "numerics.workers"),
                  out_dir=raw["outputs.dir"], plot=_bool(raw["outputs.plot"]))
        cfg.validate(require_fit=False)
        return cfg

    @classmethod
    def from_text(cls, text: str, overrides: dict[str, str] | None = None) -> "ExperimentConfig":
        raw = parse_config_text(text)
        raw.update(overrides or {})
        return cls.from_mapping(raw)

    def validate(self, require_fit: bool = True) -> None:
        eps = self.epsilons
        if not eps:
            raise ConfigError("sweep.epsilons is empty")
        if any(not 0 < e <= 1 for e in eps):
            raise ConfigError("every epsilon must lie in (0, 1]")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ConfigError("sweep.epsilons must be strictly decreasing")
        if require_fit and len(eps) < 3:
            raise ConfigError("a scaling fit needs at least 3 epsilons")
        if not (0 < self.cfl <= 1):
            raise ConfigError("numerics.cfl must lie in (0, 1]")
        if not self.spacing > 0 or not self.T_max > 0 or self.sample_every < 1:
            raise ConfigError("spacing, T_max and sample_every must be positive")
        if self.workers < 1:
            raise ConfigError("numerics.workers must be at least 1")

    def to_mapping(self) -> dict[str, str]:
        return {
            "problem.n": str(self.problem.n),
            "problem.p": repr(float(self.problem.p)),
            "problem.source": self.problem.source_kind.value,
            "domain.r0": repr(float(self.domain.r0)),
            "domain.R": repr(float(self.domain.R)),
            "coefficient": self.coefficient,
            "data.f": self.f,
            "data.g": self.g,
            "sweep.epsilons": ", ".join(repr(float(e)) for e in self.epsilons),
            "numerics.spacing": repr(float(self.spacing)),
            "numerics.cfl": repr(float(self.cfl)),
            "numerics.U_max": repr(float(self.U_max)),
            "numerics.lifespan_tol": repr(float(self.lifespan_tol)),
            "numerics.T_max": repr(float(self.T_max)),
            "numerics.T_max_doublings": str(self.T_max_doublings),
            "numerics.sample_every": str(self.sample_every),
            "numerics.fit_tol": repr(float(self.fit_tol)),
            "numerics.inequality_tol": repr(float(self.inequality_tol)),
            "numerics.workers": str(self.workers),
            "outputs.dir": self.out_dir,
            "outputs.plot": "true" if self.plot else "false",
        }

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.to_mapping().items())

    def sim_config(self, epsilon: float, T_max: float | None = None) -> SimConfig:
        return SimConfig(spec=self.problem, domain=self.domain,
                         coefficient=coefficient_from_spec(self.coefficient),
                         data=InitialData.from_specs(self.f, self.g, epsilon),
                         T_max=self.T_max if T_max is None else T_max,
                         spacing=self.spacing, cfl=self.cfl, U_max=self.U_max,
                         lifespan_tol=self.lifespan_tol, sample_every=self.sample_every)

    @property
    def alpha_theory(self):
        return lifespan_exponent(self.problem.source_kind, self.problem.n, self.problem.p)


def load_config(path: str | Path, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    """Read a config file, or the configuration embedded in a JSON manifest."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if path.suffix == ".json":
        try:
            text = json.loads(text)["config_text"]
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"{path} is not a manifest") from exc
    return ExperimentConfig.from_text(text, overrides)


# ---------------------------------------------------------------------------
# Sweeps

def inequalities_for(problem: ProblemSpec) -> tuple[fn.Inequality, ...]:
    I = fn.Inequality
    if problem.source_kind is SourceKind.DisplacementPower:
        return (I.Lemma31LowerBound, I.Convexity33, I.LowerBound36)
    return (I.Lemma31LowerBound, I.Ineq413, I.Riccati417, I.G0Nonnegative)


@dataclass
class SweepEntry:
    epsilon: float
    trace: SimTrace | None = None
    constants: dict = field(default_factory=dict)
    reports: list = field(default_factory=list)
    horizon: float = math.nan
    error: str = ""

    @property
    def T_num(self) -> float:
        if self.trace is None or self.trace.blowup is None:
            return math.inf
        return self.trace.blowup.T_num

    @property
    def converged(self) -> bool:
        return bool(self.trace is not None and self.trace.blowup is not None
                    and self.trace.blowup.converged)

    @property
    def checks_passed(self) -> bool:
        return all(r.passed for r in self.reports)


@dataclass
class SweepResult:
    config: ExperimentConfig
    entries: list[SweepEntry]

    @property
    def epsilons(self) -> np.ndarray:
        return np.array([e.epsilon for e in self.entries])

    @property
    def lifespans(self) -> np.ndarray:
        return np.array([e.T_num for e in self.entries])

    @property
    def monotone(self) -> bool:
        """Lifespans strictly increase as epsilon decreases."""
        order = np.argsort(-self.epsilons)
        T = self.lifespans[order]
        return bool(np.all(np.isfinite(T)) and np.all(np.diff(T) > 0))

    @property
    def all_converged(self) -> bool:
        return all(e.converged for e in self.entries)


def _context_constants(ctx: fn.VerifyContext) -> dict[str, float]:
    return {"c0": ctx.c0, "delta": ctx.delta, "k": ctx.k, "C5": ctx.C5,
            "C8": ctx.C8, "C9": ctx.C9}


def simulate_one(config: ExperimentConfig, epsilon: float) -> SweepEntry:
    """Run one amplitude, enlarging the horizon until blowup, then verify."""
    entry = SweepEntry(epsilon=epsilon)
    horizon = config.T_max
    for attempt in range(config.T_max_doublings + 1):
        sim = config.sim_config(epsilon, horizon)
        grid = build_grid(sim.domain, sim.spacing, horizon, sim.coefficient.C_ell,
                          n=sim.spec.n)
        weights = prepare_weights(sim, grid)
        trace = run(sim, grid, weights)
        if trace.blowup is not None or attempt == config.T_max_doublings:
            break
        horizon *= 2.0
    entry.trace, entry.horizon = trace, horizon
    if trace.blowup is None:
        entry.error = (f"NoBlowupObserved: no blowup by t = {horizon}; "
                       "raise numerics.T_max")
    try:
        ctx = fn.build_context(trace, weights, config.problem, config.domain)
        entry.constants = _context_constants(ctx)
        for which in inequalities_for(config.problem):
            entry.reports.append(fn.verify_inequality(trace, which, ctx,
                                                      tolerance=config.inequality_tol))
    except BlowupLabError as exc:
        entry.error = (entry.error + "; " if entry.error else "") + f"{type(exc).__name__}: {exc}"
    return entry


def _worker(args):
    text, eps = args
    return simulate_one(ExperimentConfig.from_text(text), eps)


def run_sweep(config: ExperimentConfig) -> SweepResult:
    config.validate(require_fit=True)
    jobs = [(config.to_text(), e) for e in config.epsilons]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            entries = list(pool.map(_worker, jobs))
    else:
        entries = [_worker(j) for j in jobs]
    entries.sort(key=lambda e: -e.epsilon)
    for e in entries:
        if e.error:
            log.warning("epsilon = %r: %s", e.epsilon, e.error)
    return SweepResult(config=config, entries=entries)


# ---------------------------------------------------------------------------
# Fits

@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    r_squared: float
    alpha_theory: object
    passed: bool
    upper_bound_consistent: bool
    A_envelope: float = math.nan
    mode: str = "power"
    fit_tol: float = 0.2

    def as_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "r_squared": self.r_squared,
                "alpha_theory": (repr(self.alpha_theory)
                                 if self.alpha_theory is ExponentialLifespan
                                 else float(self.alpha_theory)),
                "pass": self.passed, "upper_bound_consistent": self.upper_bound_consistent,
                "A_envelope": self.A_envelope, "mode": self.mode, "fit_tol": self.fit_tol}


def fit_scaling(epsilons, lifespans, alpha_theory, fit_tol: float = 0.2,
                p: float | None = None) -> ScalingFit:
    """Least-squares lifespan fit.

    Power case: ``log T = intercept + slope log eps``; passes when
    ``|slope + alpha| <= fit_tol``.  The upper-bound reading only fails when
    the lifespans grow faster than ``eps^{-alpha}``, i.e. ``slope < -alpha - fit_tol``.
    Exponential case (``alpha_theory is ExponentialLifespan``): ``log T`` against
    ``eps^{-(p-1)}``, passing when ``r^2 >= 0.98``.
    """
    eps = np.asarray(epsilons, float)
    T = np.asarray(lifespans, float)
    ok = np.isfinite(T) & (T > 0)
    if ok.sum() < 3:
        raise InsufficientPoints(f"need 3 finite lifespans, got {int(ok.sum())}")
    eps, T = eps[ok], T[ok]
    y = np.log(T)
    if alpha_theory is ExponentialLifespan:
        if p is None:
            raise InsufficientPoints("the exponential fit needs p")
        x = eps ** (-(p - 1.0))
        mode = "exponential"
    else:
        x = np.log(eps)
        mode = "power"
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    if mode == "exponential":
        passed = r2 >= 0.98
        return ScalingFit(float(slope), float(intercept), r2, alpha_theory, passed,
                          bool(passed and slope > 0), mode=mode, fit_tol=fit_tol)
    alpha = float(alpha_theory)
    A_env = float(np.max(T * eps ** alpha))
    return ScalingFit(float(slope), float(intercept), r2, alpha,
                      bool(abs(slope + alpha) <= fit_tol),
                      bool(slope >= -alpha - fit_tol), A_env, mode, fit_tol)


def fit_sweep(result: SweepResult) -> ScalingFit:
    cfg = result.config
    return fit_scaling(result.epsilons, result.lifespans, cfg.alpha_theory, cfg.fit_tol,
                       p=cfg.problem.p)


# ---------------------------------------------------------------------------
# Outputs

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def trace_csv(trace: SimTrace) -> str:
    cols = trace.columns()
    names = list(cols)
    return csv_text(names, zip(*(cols[k] for k in names)))


def read_trace_csv(path: str | Path) -> SimTrace:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array([[float(x) for x in r] for r in body], dtype=float).reshape(-1, len(header))
    return SimTrace.from_columns({k: data[:, i] for i, k in enumerate(header)})


def trace_name(epsilon: float) -> str:
    return f"trace_eps_{repr(float(epsilon))}.csv"


def _json_clean(obj):
    if isinstance(obj, dict):
        return {str(k): _json_clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def write_json(path: Path, payload: dict) -> None:
    text = json.dumps(_json_clean(payload), indent=2, sort_keys=True) + "\n"
    _write(path, text)


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def timestamp() -> str:
    return _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def lifespan_record(trace: SimTrace) -> dict | None:
    b = trace.blowup
    if b is None:
        return None
    return {"T_num": b.T_num, "threshold": b.threshold, "dt_used": b.dt_used,
            "converged": b.converged, "T_coarse": b.T_coarse,
            "T_low_threshold": b.T_low_threshold,
            "threshold_consistent": b.threshold_consistent}


def report_rows(epsilon: float, reports) -> list[tuple]:
    return [(epsilon, r.name, r.mode, r.min_margin, r.passed) for r in reports]


def emit_outputs(result: SweepResult, out_dir: str | Path | None = None,
                 plot: bool | None = None) -> dict[str, Path]:
    """Write traces, the summary, inequality results, the manifest and an optional plot."""
    cfg = result.config
    out = Path(cfg.out_dir if out_dir is None else out_dir)
    plot = cfg.plot if plot is None else plot
    files: dict[str, Path] = {}
    for e in result.entries:
        if e.trace is not None:
            path = out / "traces" / trace_name(e.epsilon)
            _write(path, trace_csv(e.trace))
            files[f"trace:{e.epsilon!r}"] = path
    summary = out / "summary.csv"
    _write(summary, csv_text(("epsilon", "T_num", "converged"),
                             [(e.epsilon, e.T_num, e.converged) for e in result.entries]))
    files["summary"] = summary
    checks = out / "checks.csv"
    rows = [row for e in result.entries for row in report_rows(e.epsilon, e.reports)]
    _write(checks, csv_text(("epsilon", "name", "mode", "min_margin", "pass"), rows))
    files["checks"] = checks

    fit = None
    try:
        fit = fit_sweep(result)
    except InsufficientPoints as exc:
        log.warning("no scaling fit: %s", exc)
    manifest = {
        "tool": "exterior_blowup",
        "version": version(),
        "timestamp": timestamp(),
        "config": cfg.to_mapping(),
        "config_text": cfg.to_text(),
        "runs": [{"epsilon": e.epsilon, "T_num": e.T_num, "converged": e.converged,
                  "horizon": e.horizon, "error": e.error,
                  "lifespan": None if e.trace is None else lifespan_record(e.trace),
                  "constants": e.constants,
                  "trace": trace_name(e.epsilon) if e.trace is not None else None,
                  "checks": {r.name: {"min_margin": r.min_margin, "pass": r.passed}
                             for r in e.reports}}
                 for e in result.entries],
        "monotone": result.monotone,
        "fit": None if fit is None else fit.as_dict(),
    }
    mpath = out / "manifest.json"
    write_json(mpath, manifest)
    files["manifest"] = mpath
    if plot and fit is not None:
        files["plot"] = plot_lifespans(result, fit, out / "lifespan.svg")
    return files


def plot_lifespans(result: SweepResult, fit: ScalingFit, path: Path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "exterior-blowup"
    eps, T = result.epsilons, result.lifespans
    fig, ax = plt.subplots(figsize=(5, 4))
    if fit.mode == "power":
        ax.loglog(eps, T, "o", label="measured")
        ref = T[0] * (eps / eps[0]) ** (-fit.alpha_theory)
        ax.loglog(eps, ref, "--", label=f"slope -{fit.alpha_theory:.3g}")
        ax.set_xlabel("epsilon")
    else:
        x = eps ** (-(result.config.problem.p - 1))
        ax.semilogy(x, T, "o", label="measured")
        ax.semilogy(x, np.exp(fit.intercept + fit.slope * x), "--", label="exponential fit")
        ax.set_xlabel("epsilon^-(p-1)")
    ax.set_ylabel("lifespan")
    ax.legend()
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
