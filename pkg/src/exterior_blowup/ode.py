"""Comparison ODEs behind the lifespan bounds.

Two problems are treated:

* the second-order differential inequality ``F'' >= k (t+R)^{-q} |F|^p`` with
  ``F >= delta (t+R)^a``, integrated through a comparison solution, and
* the Riccati equation ``v' = C9 |v|^p / (t+R)^s`` with ``s = (n-1)(p-1)/2``,
  which has closed-form blowup times.

Numerical blowup times are returned as brackets: the lower end is the time
at which the solution crosses a large threshold, the upper end adds an a
priori bound on the time still needed to reach infinity.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import beta as beta_fn

from .domain import ProblemSpec, SourceKind
from .errors import CriticalOrSupercritical, InvalidProblem, RegimeMismatch


class Method(enum.Enum):
    ClosedForm = "closed_form"
    Numerical = "numerical"


class _ExponentialLifespan:
    """Marker for the borderline case whose lifespan bound is exponential in 1/eps."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "ExponentialLifespan"


ExponentialLifespan = _ExponentialLifespan()


@dataclass(frozen=True)
class BlowupTime:
    value: float
    method: Method
    certified_interval: tuple[float, float] | None = None
    note: str = ""

    @property
    def certified(self) -> bool:
        if self.method is Method.ClosedForm:
            return math.isfinite(self.value)
        if self.certified_interval is None:
            return False
        lo, hi = self.certified_interval
        return bool(lo > 0 and math.isfinite(hi) and hi / lo <= 1.02)

    @property
    def in_scope(self) -> bool:
        return "outside lemma scope" not in self.note


# ---------------------------------------------------------------------------
# Second-order comparison problem

@dataclass(frozen=True)
class OdeProblem:
    """``F'' = k (t+R)^{-q} |F|^p + forcing`` with ``F(0), F'(0)`` given.

    With ``forced`` set, the forcing ``delta a (a-1) (t+R)^{a-2}`` makes
    ``delta (t+R)^a`` a subsolution, so the integrated ``F`` satisfies both
    hypotheses of the blowup lemma with equality in the growth bound at
    ``t = 0``.  Without forcing this is the bare equality case.
    """

    p: float
    a: float
    q: float
    R: float
    delta: float
    k: float = 1.0
    F0_init: float | None = None
    F0_prime_init: float | None = None
    forced: bool = True

    def __post_init__(self):
        if not self.p > 1:
            raise InvalidProblem("p must exceed 1")
        if not (self.R > 0 and self.delta > 0 and self.k > 0):
            raise InvalidProblem("R, delta and k must be positive")
        if self.F0_init is None:
            object.__setattr__(self, "F0_init", self.delta * self.R ** self.a)
        if self.F0_prime_init is None:
            object.__setattr__(self, "F0_prime_init",
                               self.delta * self.a * self.R ** (self.a - 1))

    @property
    def denominator(self) -> float:
        return (self.p - 1) * self.a - self.q + 2

    @property
    def hypothesis_holds(self) -> bool:
        return self.denominator > 0

    @property
    def delta_exponent(self) -> float:
        """``(p-1)/((p-1)a - q + 2)``; the lifespan scales like ``delta`` to minus this."""
        return (self.p - 1) / self.denominator

    def rhs(self, t, y):
        F, dF = y
        s = t + self.R
        acc = self.k * s ** (-self.q) * abs(F) ** self.p
        if self.forced:
            acc += self.delta * self.a * (self.a - 1) * s ** (self.a - 2)
        return [dF, acc]


def _energy_tail(ode: OdeProblem, t_U: float, U: float) -> float:
    """Upper bound on the time from ``F = U`` (with ``F' >= 0``) to blowup.

    Uses ``F'' >= K F^p`` with ``K`` the smallest weight over the remaining
    interval; the energy identity then gives
    ``sqrt((p+1)/(2K)) U^{(1-p)/2} B(1/2 - 1/m, 1/2)/m`` with ``m = p+1``.
    """
    p = ode.p
    m = p + 1.0
    shape = beta_fn(0.5 - 1.0 / m, 0.5) / m * U ** ((1.0 - p) / 2.0)
    dt = 0.0
    for _ in range(200):
        end = t_U + ode.R + (dt if ode.q > 0 else 0.0)
        K = ode.k * end ** (-ode.q)
        new = math.sqrt((p + 1) / (2 * K)) * shape
        if abs(new - dt) <= 1e-14 * max(new, 1e-300):
            return new
        if new > 1e6 * max(t_U, 1.0):
            return math.inf
        dt = new
    return dt


def _cross_time(ode: OdeProblem, U: float, rtol: float, t_max: float) -> float:
    event = lambda t, y: y[0] - U
    event.terminal = True
    event.direction = 1
    sol = solve_ivp(ode.rhs, (0.0, t_max), [ode.F0_init, ode.F0_prime_init],
                    method="DOP853", rtol=rtol, atol=1e-14, events=event)
    if sol.t_events[0].size:
        return float(sol.t_events[0][0])
    return math.inf


def integrate_sideris(ode: OdeProblem, U: float = 1e12, rtol: float = 1e-10,
                      t_max: float = 1e8) -> BlowupTime:
    """Bracket the blowup time of the comparison solution.

    The crossing of ``U`` is computed at ``rtol`` and again at ``rtol/10``;
    their difference widens the bracket as a Richardson-style error estimate.
    """
    note = "" if ode.hypothesis_holds else "outside lemma scope"
    t1 = _cross_time(ode, U, rtol, t_max)
    if not math.isfinite(t1):
        return BlowupTime(math.inf, Method.Numerical, None, (note + " no crossing").strip())
    t2 = _cross_time(ode, U, rtol / 10.0, t_max)
    err = abs(t2 - t1)
    tail = _energy_tail(ode, t2, U)
    lo, hi = t2 - err, t2 + tail + err
    return BlowupTime(0.5 * (lo + hi), Method.Numerical, (lo, hi), note)


def rescale_sideris(ode: OdeProblem) -> OdeProblem:
    """Change variables ``tau = t delta^b``, ``H = delta^{(q-2)/D} F`` so that delta becomes 1.

    Here ``D = (p-1)a - q + 2`` and ``b = (p-1)/D``; the shift becomes
    ``R delta^b`` and ``k`` is unchanged.  Blowup times satisfy
    ``T_H = T_F delta^b``.
    """
    D = ode.denominator
    b = (ode.p - 1) / D
    c = (ode.q - 2) / D
    d = ode.delta
    return replace(ode, delta=1.0, R=ode.R * d ** b,
                   F0_init=d ** c * ode.F0_init,
                   F0_prime_init=d ** (c - b) * ode.F0_prime_init)


def rescaled_time(ode: OdeProblem, t: float) -> float:
    return t * ode.delta ** ode.delta_exponent


def unscaled_time(ode: OdeProblem, tau: float) -> float:
    return tau * ode.delta ** (-ode.delta_exponent)


def growth_threshold(ode: OdeProblem) -> float:
    """Largest delta for which the rescaled growth bound reads ``H >= tau^a``."""
    return ode.R ** (ode.denominator / (ode.p - 1))


# ---------------------------------------------------------------------------
# Riccati comparison

@dataclass(frozen=True)
class RiccatiProblem:
    C9: float
    M: float
    epsilon: float
    n: int
    p: float
    R: float

    def __post_init__(self):
        if not (self.C9 > 0 and self.M > 0 and self.epsilon > 0 and self.R > 0):
            raise InvalidProblem("C9, M, epsilon and R must be positive")
        if not self.p > 1:
            raise InvalidProblem("p must exceed 1")
        if (self.n - 1) * (self.p - 1) > 2 + 1e-12:
            raise RegimeMismatch("(n-1)(p-1) > 2 is outside the Riccati regime")

    @property
    def s(self) -> float:
        return (self.n - 1) * (self.p - 1) / 2.0

    @property
    def borderline(self) -> bool:
        return abs((self.n - 1) * (self.p - 1) - 2) <= 1e-12

    @property
    def v0(self) -> float:
        return self.M * self.epsilon


def riccati_closed_form(prob: RiccatiProblem) -> BlowupTime:
    p, R, C9 = prob.p, prob.R, prob.C9
    head = prob.v0 ** (-(p - 1))
    if prob.borderline:
        c2 = C9 * (p - 1)
        return BlowupTime(R * math.expm1(head / c2), Method.ClosedForm)
    gam = 1.0 - prob.s
    c1 = C9 * (p - 1) / gam
    return BlowupTime((head / c1 + R ** gam) ** (1.0 / gam) - R, Method.ClosedForm)


def integrate_riccati(prob: RiccatiProblem, rtol: float = 1e-11,
                      log_threshold: float = 25.0) -> BlowupTime:
    """Integrate ``v' = C9 |v|^p/(t+R)^s`` from ``v(0) = M eps`` and bracket its blowup.

    The unknown is ``y = ln v``, which keeps ``p`` near 1 free of overflow.
    Integration stops when ``(p-1) y`` has grown by ``log_threshold`` above
    its initial value; beyond that, ``v' >= K v^p`` bounds the remaining time
    by ``v^{1-p}/((p-1) K)``.
    """
    p, R, C9, s = prob.p, prob.R, prob.C9, prob.s
    y0 = math.log(prob.v0)
    Y = y0 + log_threshold / (p - 1)

    def rhs(t, y):
        return [C9 * math.exp((p - 1) * y[0]) / (t + R) ** s]

    event = lambda t, y: y[0] - Y
    event.terminal = True
    event.direction = 1

    def crossing(tol):
        t_end = 1.0
        while t_end < 1e300:
            sol = solve_ivp(rhs, (0.0, t_end), [y0], method="DOP853", rtol=tol,
                            atol=1e-12, events=event)
            if sol.t_events[0].size:
                return float(sol.t_events[0][0])
            t_end *= 100.0
        return math.inf

    t1 = crossing(rtol)
    if not math.isfinite(t1):
        return BlowupTime(math.inf, Method.Numerical, None, "no crossing")
    t2 = crossing(rtol / 10.0)
    err = abs(t2 - t1)
    tail = 0.0
    for _ in range(200):
        K = C9 / (t2 + tail + R) ** s
        new = math.exp(-(p - 1) * Y) / ((p - 1) * K)
        if abs(new - tail) <= 1e-14 * max(new, 1e-300):
            tail = new
            break
        tail = new
    lo, hi = t2 - err, t2 + tail + err
    return BlowupTime(0.5 * (lo + hi), Method.Numerical, (lo, hi))


# ---------------------------------------------------------------------------
# Lifespan exponents

def lifespan_exponent(kind: SourceKind, n: int, p: float):
    """``alpha`` with ``T <= A eps^{-alpha}``, or ``ExponentialLifespan``."""
    if kind is SourceKind.DisplacementPower:
        den = 2 + (n + 1) * p - (n - 1) * p * p
        if den <= 0:
            raise CriticalOrSupercritical(f"p = {p} is not subcritical for n = {n}")
        return 2 * p * (p - 1) / den
    gap = 1 - (n - 1) * (p - 1) / 2.0
    if abs(gap) <= 1e-12:
        return ExponentialLifespan
    if gap < 0:
        raise CriticalOrSupercritical(f"p = {p} is supercritical for n = {n}")
    return (p - 1) / gap


def theorem_exponent(spec: ProblemSpec, n: int | None = None):
    return lifespan_exponent(spec.source_kind, spec.n if n is None else n, spec.p)
