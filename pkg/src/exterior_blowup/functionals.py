"""Weighted integrals of wave states and checks of the blowup inequalities.

All integrals use the trapezoid rule with the radial volume weight of the
grid.  ``F0 = int u phi0``, ``F1 = int u psi1``, and for the velocity source
``G0 = int psi1 u_t - 1/2 cum - eps/2 int phi1 g`` where ``cum`` is the running
time integral of ``int psi1 |u_t|^p``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .domain import DomainSpec, ProblemSpec, RadialGrid, SourceKind, ball_volume
from .elliptic import BoundFit, EigenWeight, HarmonicWeight
from .errors import (GridMismatch, InsufficientSamples, MissingPhi0, UnknownInequality)

if TYPE_CHECKING:  # pragma: no cover
    from .wave import InitialData, SimTrace, WaveState


@dataclass(frozen=True, eq=False)
class WeightPair:
    phi0: HarmonicWeight | None
    phi1: EigenWeight

    @property
    def grid(self) -> RadialGrid:
        return self.phi1.grid

    def psi1_at(self, t: float) -> np.ndarray:
        return self.phi1.psi1(t)


def _same_grid(state_grid: RadialGrid, weight_grid: RadialGrid) -> None:
    if not state_grid.same_as(weight_grid):
        raise GridMismatch("state and weight live on different grids")


def compute_F0(state: "WaveState", phi0: HarmonicWeight) -> float:
    _same_grid(state.grid, phi0.grid)
    return float(np.dot(state.grid.trapezoid_weights(), state.u * phi0.values))


def compute_F1(state: "WaveState", weights: WeightPair) -> float:
    _same_grid(state.grid, weights.grid)
    return float(np.dot(state.grid.trapezoid_weights(), state.u * weights.psi1_at(state.t)))


def compute_G0(state: "WaveState", weights: WeightPair, cumulative: float,
               data: "InitialData") -> float:
    """``int psi1 v - cumulative/2 - (eps/2) int phi1 g`` at the state's time."""
    _same_grid(state.grid, weights.grid)
    w = state.grid.trapezoid_weights()
    psi1_ut = float(np.dot(w, state.v * weights.psi1_at(state.t)))
    g_int = data_integrals(weights, data)["int_g_phi1"]
    return psi1_ut - 0.5 * cumulative - 0.5 * data.epsilon * g_int


def data_integrals(weights: WeightPair, data: "InitialData") -> dict[str, float]:
    """Unscaled ``int f phi``, ``int g phi`` for both weights (NaN when phi0 is absent)."""
    grid = weights.grid
    r = grid.nodes
    w = grid.trapezoid_weights()
    f = np.asarray(data.f(r), float)
    g = np.asarray(data.g(r), float)
    phi1 = weights.phi1.values
    out = {"int_f_phi1": float(np.dot(w, f * phi1)), "int_g_phi1": float(np.dot(w, g * phi1))}
    if weights.phi0 is not None:
        out["int_f_phi0"] = float(np.dot(w, f * weights.phi0.values))
        out["int_g_phi0"] = float(np.dot(w, g * weights.phi0.values))
    else:
        out["int_f_phi0"] = math.nan
        out["int_g_phi0"] = math.nan
    return out


class TraceSampler:
    """Accumulates trace samples while a simulation runs.

    ``accumulate`` must be called after every step so that the time integral
    of ``int psi1 |v|^p`` is formed with the trapezoid rule at step resolution.
    """

    def __init__(self, weights: WeightPair, data: "InitialData", spec: ProblemSpec,
                 source_off: bool = False):
        self.grid = weights.grid
        self.w = self.grid.trapezoid_weights()
        self.r = self.grid.nodes
        self.scaled = weights.phi1.scaled
        self.phi0 = None if weights.phi0 is None else weights.phi0.values
        self.p = float(spec.p)
        self.kind = spec.source_kind
        self.source_off = source_off
        self.eps = data.epsilon
        self.g_int = data_integrals(weights, data)["int_g_phi1"]
        self.cum = 0.0
        self._q_last = None
        self.rows: list[tuple] = []

    def _psi1(self, t, w):
        return self.w[:w] * self.scaled[:w] * np.exp(self.r[:w] - t)

    def _q(self, t, v, w):
        return float(np.dot(self._psi1(t, w), np.abs(v[:w]) ** self.p))

    def accumulate(self, t, dt, v, w):
        q = self._q(t, v, w)
        self.cum += 0.5 * dt * (self._q_last + q)
        self._q_last = q

    def sample(self, t, u, v, w):
        if self._q_last is None:
            self._q_last = self._q(t, v, w)
        uw, vw = u[:w], v[:w]
        wpsi = self._psi1(t, w)
        if self.source_off:
            src = np.zeros(w)
        else:
            src = np.abs(uw if self.kind is SourceKind.DisplacementPower else vw) ** self.p
        if self.phi0 is not None:
            wphi0 = self.w[:w] * self.phi0[:w]
            F0 = float(np.dot(wphi0, uw))
            s0 = float(np.dot(wphi0, src))
        else:
            F0 = s0 = math.nan
        psi1_ut = float(np.dot(wpsi, vw))
        init = 0.5 * self.eps * self.g_int
        self.rows.append((t, F0, float(np.dot(wpsi, uw)),
                          psi1_ut - 0.5 * self.cum - init, 0.5 * self.cum + init,
                          float(np.max(np.abs(uw))), float(np.max(np.abs(vw))),
                          psi1_ut, s0, float(np.dot(wpsi, src))))

    def finish(self) -> "SimTrace":
        from .wave import SimTrace

        arr = np.array(self.rows, dtype=float).reshape(-1, len(SimTrace.COLUMNS))
        return SimTrace.from_columns({k: arr[:, i] for i, k in enumerate(SimTrace.COLUMNS)})


# ---------------------------------------------------------------------------
# Estimate lemmas

#: default decade of times for the growth fits; the bounds are statements
#: about large t and earlier windows are still pre-asymptotic
LEMMA_T_GRID = np.geomspace(10.0, 100.0, 12)


class EstimateLemma(enum.Enum):
    L24 = "L24"  # int psi1^{p'}
    L25 = "L25"  # int phi0^{-1/(p-1)} psi1^{p'}
    L26 = "L26"  # int psi1


def _cone_weights(grid: RadialGrid, radius: float) -> np.ndarray:
    i = grid.index_at_or_below(radius)
    w = grid.spacing * grid.volume_weight(grid.nodes[: i + 1])
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def lemma_integrand(weights: WeightPair, spec: ProblemSpec, t: float,
                    which: EstimateLemma, upto: int | None = None) -> np.ndarray:
    """Integrand of one estimate lemma on nodes ``0..upto``."""
    psi = weights.phi1.psi1(t, upto)
    if which is EstimateLemma.L26:
        return psi
    pc = spec.p_conjugate
    if which is EstimateLemma.L24:
        return psi ** pc
    if weights.phi0 is None:
        raise MissingPhi0("the phi0-weighted estimate needs phi0 (n >= 3)")
    grid = weights.grid
    phi0 = weights.phi0.values[: psi.size]
    out = np.zeros_like(psi)
    out[1:] = phi0[1:] ** (-1.0 / (spec.p - 1.0)) * psi[1:] ** pc
    # first two cells: rewrite through difference quotients, exact in exact arithmetic
    m = min(3, psi.size)
    d = grid.nodes[1:m] - grid.r0
    out[1:m] = (phi0[1:m] / d) ** (-1.0 / (spec.p - 1.0)) * (psi[1:m] / d) ** pc * d
    return out


def lemma_exponent(spec: ProblemSpec, which: EstimateLemma) -> float:
    n = spec.n
    if which is EstimateLemma.L26:
        return (n - 1) / 2.0
    return n - 1 - (n - 1) * spec.p_conjugate / 2.0


def lemma_series(weights: WeightPair, spec: ProblemSpec, domain: DomainSpec,
                 t_grid, which: EstimateLemma | str) -> np.ndarray:
    which = EstimateLemma(which) if not isinstance(which, EstimateLemma) else which
    grid = weights.grid
    out = []
    for t in np.asarray(t_grid, float):
        w = _cone_weights(grid, t + domain.R)
        out.append(float(np.dot(w, lemma_integrand(weights, spec, t, which, w.size - 1))))
    return np.array(out)


def verify_estimate_lemma(weights: WeightPair, spec: ProblemSpec, domain: DomainSpec,
                          t_grid, which: EstimateLemma | str,
                          slope_slack: float = 0.1) -> BoundFit:
    """Fit the growth of a cone integral against ``log(t+R)``.

    Passes when the fitted slope is at most the predicted exponent plus
    ``slope_slack``.  The constant reported is the supremum of the integral
    divided by ``(t+R)^exponent`` over ``t_grid``.
    """
    which = EstimateLemma(which) if not isinstance(which, EstimateLemma) else which
    t = np.asarray(t_grid, float)
    vals = lemma_series(weights, spec, domain, t, which)
    expo = lemma_exponent(spec, which)
    x = np.log(t + domain.R)
    ok = vals > 0
    slope = float(np.polyfit(x[ok], np.log(vals[ok]), 1)[0]) if ok.sum() >= 2 else math.nan
    const = float(np.max(vals / np.exp(expo * x)))
    return BoundFit(constant=const, exponent_theory=expo, slope_fit=slope,
                    passed=bool(math.isfinite(slope) and slope <= expo + slope_slack),
                    name=which.value)


# ---------------------------------------------------------------------------
# Inequalities along a trace

class Inequality(enum.Enum):
    Convexity33 = "Convexity33"
    Lemma31LowerBound = "Lemma31LowerBound"
    LowerBound36 = "LowerBound36"
    Ineq413 = "Ineq413"
    Riccati417 = "Riccati417"
    G0Nonnegative = "G0Nonnegative"

    @classmethod
    def parse(cls, which) -> "Inequality":
        if isinstance(which, cls):
            return which
        try:
            return cls(str(which))
        except ValueError as exc:
            raise UnknownInequality(f"unknown inequality {which!r}") from exc


@dataclass(frozen=True)
class VerifyContext:
    """Constants entering the inequality chain, computed from the data and weights."""

    n: int
    p: float
    R: float
    epsilon: float
    k: float
    c0: float
    int_f_phi1: float
    int_g_phi1: float
    int_f_phi0: float = math.nan
    int_g_phi0: float = math.nan
    C5: float = math.nan
    delta: float = math.nan
    C8: float = math.nan
    C9: float = math.nan
    source_off: bool = False

    @property
    def a_exponent(self) -> float:
        return self.n + 1 - (self.n - 1) * self.p / 2.0

    @property
    def t_star(self) -> float:
        """Time after which ``delta((t+R)^a - R^a - a R^{a-1} t) >= delta/2 (t+R)^a``."""
        from scipy.optimize import brentq

        a, R = self.a_exponent, self.R
        gap = lambda t: 0.5 * (t + R) ** a - R ** a - a * R ** (a - 1) * t
        hi = R
        while gap(hi) <= 0:
            hi *= 2.0
        return float(brentq(gap, 1e-12, hi, xtol=1e-14, rtol=1e-14))


def build_context(trace: "SimTrace", weights: WeightPair, spec: ProblemSpec,
                  domain: DomainSpec, t_grid=None) -> VerifyContext:
    """Evaluate ``k``, ``c0`` and the fitted suprema ``C5``, ``C8`` from one run."""
    meta = trace.meta
    n, p, R = spec.n, spec.p, domain.R
    t = np.asarray(trace.times if t_grid is None else t_grid, float)
    f1, g1 = meta["int_f_phi1"], meta["int_g_phi1"]
    c0 = min(f1, 0.5 * (f1 + g1))
    C5 = delta = math.nan
    if weights.phi0 is not None:
        series = lemma_series(weights, spec, domain, t, EstimateLemma.L25)
        C5 = float(np.max(series / (t + R) ** lemma_exponent(spec, EstimateLemma.L25)))
        a = n + 1 - (n - 1) * p / 2.0
        eps = meta["epsilon"]
        delta = eps ** p * c0 ** p * C5 ** (-(p - 1)) / (a * (a - 1))
    series = lemma_series(weights, spec, domain, t, EstimateLemma.L26)
    C8 = float(np.max(series / (t + R) ** ((n - 1) / 2.0)))
    return VerifyContext(n=n, p=p, R=R, epsilon=meta["epsilon"],
                         k=ball_volume(n) ** (-(p - 1)), c0=c0,
                         int_f_phi1=f1, int_g_phi1=g1,
                         int_f_phi0=meta.get("int_f_phi0", math.nan),
                         int_g_phi0=meta.get("int_g_phi0", math.nan),
                         C5=C5, delta=delta, C8=C8, C9=0.5 * C8 ** (-(p - 1)),
                         source_off=bool(meta.get("source_off", False)))


@dataclass
class InequalityReport:
    name: str
    margin_series: np.ndarray
    min_margin: float
    passed: bool
    tolerance: float
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    lhs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    rhs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    slack: np.ndarray = field(default_factory=lambda: np.zeros(0))
    mode: str = "inequality"

    @property
    def pass_(self) -> bool:
        return self.passed


def second_derivative(t: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Three-point second difference at interior samples (nonuniform spacing allowed)."""
    h1 = t[1:-1] - t[:-2]
    h2 = t[2:] - t[1:-1]
    return 2.0 * ((y[2:] - y[1:-1]) / h2 - (y[1:-1] - y[:-2]) / h1) / (h1 + h2)


def _differentiation_error(t: np.ndarray, d2: np.ndarray) -> np.ndarray:
    """``dt^2/12 |y''''|`` estimated from second differences of ``y''``."""
    err = np.zeros_like(d2)
    if d2.size >= 3:
        d4 = np.abs(second_derivative(t[1:-1], d2))
        h = np.diff(t[1:-1])
        hh = np.maximum(h[:-1], h[1:])
        e = hh ** 2 / 12.0 * d4
        err[1:-1] = e
        err[0], err[-1] = e[0], e[-1]
    return err


def verify_inequality(trace: "SimTrace", which, context: VerifyContext,
                      tolerance: float = 1e-6, drop_last: bool = True) -> InequalityReport:
    """Evaluate ``LHS - RHS`` of one inequality at every sample of a trace.

    A sample passes when the margin is at least ``-(tolerance * scale + slack)``
    with ``scale = max(|LHS|, |RHS|, 1)`` and ``slack`` the estimated
    differentiation error (nonzero only for the second-derivative check).
    For runs that crossed the blowup threshold the last two samples are
    excluded by default.
    """
    which = Inequality.parse(which)
    t = np.asarray(trace.times, float)
    keep = slice(None)
    if drop_last and trace.blowup is not None and t.size > 2:
        # the crossing sample and the one before it are not resolved by the step
        keep = slice(0, t.size - 2)
    t = t[keep]
    if t.size < 5:
        raise InsufficientSamples(f"need at least 5 samples, got {t.size}")
    c = context
    mode = "inequality"
    tt = t
    slack = None
    p, R, n, eps = c.p, c.R, c.n, c.epsilon

    if which is Inequality.Convexity33:
        F0 = trace.F0[keep]
        if not np.all(np.isfinite(F0)):
            raise MissingPhi0("the convexity check needs F0, which needs n >= 3")
        lhs = second_derivative(t, F0)
        tt = t[1:-1]
        slack = _differentiation_error(t, lhs)
        if c.source_off:
            mode = "source-off identity"
            rhs = np.asarray(trace.src_phi0[keep], float)[1:-1]
            margin = lhs - rhs
            return _report(which.value, tt, lhs, rhs, margin, slack, tolerance, mode,
                           two_sided=True)
        rhs = c.k * (tt + R) ** (-n * (p - 1)) * np.abs(F0[1:-1]) ** p
    elif which is Inequality.Lemma31LowerBound:
        lhs = trace.F1[keep]
        e2 = np.exp(-2.0 * t)
        rhs = 0.5 * (1 - e2) * eps * (c.int_f_phi1 + c.int_g_phi1) + e2 * eps * c.int_f_phi1
    elif which is Inequality.LowerBound36:
        lhs = trace.F0[keep]
        if not np.all(np.isfinite(lhs)) or not math.isfinite(c.delta):
            raise MissingPhi0("the growth bound needs F0 and delta, which need n >= 3")
        a = c.a_exponent
        d0 = eps * c.int_g_phi0
        full = lhs[0] + d0 * t + c.delta * ((t + R) ** a - R ** a - a * R ** (a - 1) * t)
        half = np.where(t >= c.t_star, 0.5 * c.delta * (t + R) ** a, -np.inf)
        rhs = np.maximum(full, half)
    elif which is Inequality.Ineq413:
        lhs = trace.psi1_ut[keep]
        rhs = trace.Fcum[keep]
    elif which is Inequality.Riccati417:
        lhs = 0.5 * trace.src_psi1[keep]
        F = trace.Fcum[keep]
        rhs = c.C9 * np.abs(F) ** p / (t + R) ** ((n - 1) * (p - 1) / 2.0)
    else:  # G0Nonnegative
        lhs = trace.G0[keep]
        rhs = np.exp(-2.0 * t) * lhs[0]
    margin = lhs - rhs
    return _report(which.value, tt, lhs, rhs, margin, slack, tolerance, mode)


def _report(name, t, lhs, rhs, margin, slack, tolerance, mode, two_sided=False):
    scale = np.maximum(np.maximum(np.abs(lhs), np.abs(rhs)), 1.0)
    slack = np.zeros_like(margin) if slack is None else slack
    allowed = tolerance * scale + slack
    ok = np.abs(margin) <= allowed if two_sided else margin >= -allowed
    shown = -np.abs(margin) if two_sided else margin
    return InequalityReport(name=name, margin_series=margin, min_margin=float(np.min(shown)),
                            passed=bool(np.all(ok)), tolerance=tolerance, times=t,
                            lhs=np.asarray(lhs), rhs=np.asarray(rhs), slack=slack, mode=mode)
