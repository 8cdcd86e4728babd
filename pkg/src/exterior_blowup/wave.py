"""Explicit leapfrog integration of the exterior semilinear wave problems.

The radial operator ``r^{1-n} (r^{n-1} a u_r)_r`` uses the same conservative
stencil as the elliptic solvers, so summation by parts against the discrete
weights is exact.  Time stepping is velocity Verlet (leapfrog); for the
velocity source the second half-kick is evaluated at a predicted velocity,
which keeps the scheme explicit and second order.

Only nodes with ``r <= r0 + R + sqrt(C) t`` are updated; the rest are
identically zero by finite propagation speed.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import functionals as fn
from .domain import (CoefficientField, DomainSpec, ProblemSpec, RadialGrid, SourceKind,
                     bump, build_grid, format_profile, parse_profile)
from .elliptic import flux_coefficients, solve_phi0, solve_phi1
from .errors import (CflViolation, ConfigError, SignViolation, SupportLeak,
                     SupportViolation, TrivialData)

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Data

def data_profile(text: str) -> Callable[[np.ndarray], np.ndarray]:
    """``"zero"`` or ``"bump(amplitude, center, width)"`` as a function of r."""
    name, params = parse_profile(text)
    if name == "zero" and not params:
        return lambda r: np.zeros_like(np.asarray(r, dtype=float))
    if name == "bump" and len(params) == 3:
        amp, center, width = params
        return lambda r: amp * bump((np.asarray(r, dtype=float) - center) / width)
    raise ConfigError(f"unknown data profile {text!r}")


@dataclass(frozen=True)
class InitialData:
    f: Callable
    g: Callable
    epsilon: float
    f_spec: str = "custom"
    g_spec: str = "custom"

    @classmethod
    def from_specs(cls, f: str, g: str, epsilon: float) -> "InitialData":
        return cls(f=data_profile(f), g=data_profile(g), epsilon=epsilon,
                   f_spec=format_profile(*parse_profile(f)),
                   g_spec=format_profile(*parse_profile(g)))

    def with_epsilon(self, epsilon: float) -> "InitialData":
        return replace(self, epsilon=epsilon)


@dataclass(frozen=True, eq=False)
class WaveState:
    t: float
    u: np.ndarray
    v: np.ndarray
    grid: RadialGrid


def init_state(data: InitialData, grid: RadialGrid,
               source_kind: SourceKind | None = None) -> WaveState:
    if not 0 < data.epsilon <= 1:
        raise ConfigError(f"epsilon must lie in (0, 1], got {data.epsilon}")
    r = grid.nodes
    f = np.asarray(data.f(r), dtype=float)
    g = np.asarray(data.g(r), dtype=float)
    if np.any(f < 0) or np.any(g < 0):
        raise SignViolation("initial data must be nonnegative")
    outside = r > grid.R
    if np.any(f[outside] != 0) or np.any(g[outside] != 0):
        raise SupportViolation("initial data must vanish for r > R")
    if source_kind is SourceKind.DisplacementPower and not np.any(f[1:] > 0):
        raise TrivialData("the |u|^p problem needs f not identically zero")
    if source_kind is SourceKind.VelocityPower and not np.any(g[1:] > 0):
        raise TrivialData("the |u_t|^p problem needs g not identically zero")
    u = data.epsilon * f
    v = data.epsilon * g
    u[0] = 0.0
    v[0] = 0.0
    return WaveState(t=0.0, u=u, v=v, grid=grid)


def discrete_energy(state: WaveState, coeff: CoefficientField) -> float:
    """``1/2 int (v^2 + a u_r^2)`` with the stencil's own midpoint fluxes."""
    grid = state.grid
    k = flux_coefficients(coeff, grid) * grid.measure_factor
    du = np.diff(state.u) / grid.spacing
    kinetic = np.dot(grid.trapezoid_weights(), state.v ** 2)
    potential = grid.spacing * np.dot(k, du ** 2)
    return 0.5 * float(kinetic + potential)


# ---------------------------------------------------------------------------
# Stepping

class LeapfrogStepper:
    """In-place velocity-Verlet update restricted to the active window."""

    def __init__(self, grid: RadialGrid, coeff: CoefficientField, spec: ProblemSpec,
                 source_off: bool = False):
        r = grid.nodes
        h = grid.spacing
        k = flux_coefficients(coeff, grid)
        inner = r[1:-1] ** (grid.n - 1) * h * h
        self.cp = np.zeros(r.size)
        self.cm = np.zeros(r.size)
        self.cp[1:-1] = k[1:] / inner
        self.cm[1:-1] = k[:-1] / inner
        self.size = r.size
        self.p = float(spec.p)
        self.kind = spec.source_kind
        self.source_off = source_off

    def laplacian(self, u, out, stop):
        """Write the operator on nodes ``1..stop-1`` into ``out``."""
        stop = min(stop, self.size - 1)
        out[1:stop] = (self.cp[1:stop] * (u[2:stop + 1] - u[1:stop])
                       - self.cm[1:stop] * (u[1:stop] - u[0:stop - 1]))

    def power(self, w):
        if self.source_off:
            return np.zeros_like(w)
        if self.p == 2.0:
            return w * w
        return np.abs(w) ** self.p

    def source(self, u, v):
        return self.power(u if self.kind is SourceKind.DisplacementPower else v)

    def advance(self, u, v, lap, stop, dt):
        """One step on nodes ``1..stop-1``; ``lap`` must hold the operator at the current ``u``
        on nodes ``1..stop`` and is refreshed for the new ``u``."""
        s = slice(1, stop)
        half = 0.5 * dt
        v_half = v[s] + half * (lap[s] + self.source(u[s], v[s]))
        u[s] += dt * v_half
        self.laplacian(u, lap, stop + 1)
        if self.kind is SourceKind.DisplacementPower:
            v[s] = v_half + half * (lap[s] + self.power(u[s]))
        else:
            v_pred = v_half + half * (lap[s] + self.power(v_half))
            v[s] = v_half + half * (lap[s] + self.power(v_pred))


def check_cfl(grid: RadialGrid, coeff: CoefficientField, dt: float) -> None:
    limit = grid.spacing / math.sqrt(coeff.C_ell)
    if not 0 < dt <= limit * (1 + 1e-12):
        raise CflViolation(f"dt = {dt} exceeds the CFL limit {limit}")


def step(state: WaveState, coeff: CoefficientField, spec: ProblemSpec, dt: float,
         source_off: bool = False) -> WaveState:
    """Advance a full-grid state by one leapfrog step."""
    check_cfl(state.grid, coeff, dt)
    stepper = LeapfrogStepper(state.grid, coeff, spec, source_off)
    u = state.u.copy()
    v = state.v.copy()
    lap = np.zeros_like(u)
    stop = state.grid.size - 1
    stepper.laplacian(u, lap, stop + 1)
    with np.errstate(over="ignore", invalid="ignore"):
        stepper.advance(u, v, lap, stop, dt)
    u[0] = 0.0
    v[0] = 0.0
    return WaveState(t=state.t + dt, u=u, v=v, grid=state.grid)


# ---------------------------------------------------------------------------
# Driver

@dataclass(frozen=True)
class SimConfig:
    spec: ProblemSpec
    domain: DomainSpec
    coefficient: CoefficientField
    data: InitialData
    T_max: float
    spacing: float = 5e-3
    cfl: float = 0.5
    U_max: float = 1e8
    lifespan_tol: float = 0.02
    sample_every: int = 1
    source_off: bool = False
    refine: bool = True

    @property
    def dt(self) -> float:
        return self.cfl * self.spacing / math.sqrt(self.coefficient.C_ell)


@dataclass
class LifespanResult:
    T_num: float
    threshold: float
    dt_used: float
    converged: bool
    T_coarse: float = math.nan
    T_low_threshold: float = math.nan
    threshold_consistent: bool = True


@dataclass
class SimTrace:
    times: np.ndarray
    F0: np.ndarray
    F1: np.ndarray
    G0: np.ndarray
    Fcum: np.ndarray
    sup_u: np.ndarray
    sup_v: np.ndarray
    psi1_ut: np.ndarray
    src_phi0: np.ndarray
    src_psi1: np.ndarray
    blowup: LifespanResult | None = None
    meta: dict = field(default_factory=dict)

    COLUMNS = ("t", "F0", "F1", "G0", "Fcum", "sup_u", "sup_v",
               "psi1_ut", "src_phi0", "src_psi1")

    def columns(self) -> dict[str, np.ndarray]:
        return {"t": self.times, "F0": self.F0, "F1": self.F1, "G0": self.G0,
                "Fcum": self.Fcum, "sup_u": self.sup_u, "sup_v": self.sup_v,
                "psi1_ut": self.psi1_ut, "src_phi0": self.src_phi0,
                "src_psi1": self.src_psi1}

    @classmethod
    def from_columns(cls, cols: dict, meta: dict | None = None,
                     blowup: LifespanResult | None = None) -> "SimTrace":
        return cls(times=np.asarray(cols["t"], float),
                   **{k: np.asarray(cols[k], float) for k in cls.COLUMNS[1:]},
                   blowup=blowup, meta=dict(meta or {}))

    def __len__(self):
        return self.times.size


@dataclass
class _Integration:
    trace: SimTrace | None
    t_cross: float
    t_cross_low: float
    state: WaveState
    edge_leak: float


def prepare_weights(config: SimConfig, grid: RadialGrid) -> fn.WeightPair:
    phi0 = solve_phi0(config.coefficient, grid) if grid.n >= 3 else None
    phi1 = solve_phi1(config.coefficient, grid)
    return fn.WeightPair(phi0=phi0, phi1=phi1)


def _integrate(config: SimConfig, grid: RadialGrid, weights: fn.WeightPair | None,
               dt: float, record: bool) -> _Integration:
    spec, coeff, data = config.spec, config.coefficient, config.data
    check_cfl(grid, coeff, dt)
    state = init_state(data, grid, spec.source_kind)
    u, v = state.u, state.v
    r = grid.nodes
    h = grid.spacing
    speed = coeff.max_speed
    size = grid.size
    stepper = LeapfrogStepper(grid, coeff, spec, config.source_off)
    lap = np.zeros(size)
    bound_slack = grid.r0 + grid.R + 2.0 * h

    # the active window reaches the support bound itself, so the leapfrog
    # precursor ahead of the cone has decayed to underflow at its edge
    def window_stop(t):
        return min(grid.index_at_or_below(grid.r0 + grid.R + speed * t) + 1, size - 1)

    stop = window_stop(0.0)
    stepper.laplacian(u, lap, stop + 1)
    n_steps = int(math.ceil(config.T_max / dt - 1e-9))
    low = config.U_max / 100.0
    t_cross = math.inf
    t_cross_low = math.inf
    edge_leak = 0.0

    sampler = None
    if record:
        sampler = fn.TraceSampler(weights, data, spec, config.source_off)
        sampler.sample(0.0, u, v, stop + 1)

    t = 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, n_steps + 1):
            t_new = k * dt
            stop = window_stop(t_new)
            stepper.advance(u, v, lap, stop, dt)
            t = t_new
            w = stop + 1
            if sampler is not None:
                sampler.accumulate(t, dt, v, w)
            su = float(np.max(np.abs(u[:w])))
            sv = float(np.max(np.abs(v[:w])))
            peak = max(su, sv)
            if not math.isfinite(peak):
                peak = math.inf
            if peak > low and t_cross_low == math.inf:
                t_cross_low = t
            if peak > config.U_max:
                t_cross = t
                if sampler is not None:
                    sampler.sample(t, u, v, w)
                break
            if sampler is not None and k % config.sample_every == 0:
                sampler.sample(t, u, v, w)
                # numerical support must stay inside the light cone
                nz = np.flatnonzero((u[:w] != 0) | (v[:w] != 0))
                if nz.size and r[nz[-1]] > bound_slack + speed * t:
                    raise SupportLeak(
                        f"nonzero data at r = {r[nz[-1]]} exceeds the cone "
                        f"{bound_slack + speed * t} at t = {t}")
                if peak > 0:
                    edge_leak = max(edge_leak, float(max(abs(u[stop - 1]), abs(v[stop - 1]))) / peak)
    final = WaveState(t=t, u=u, v=v, grid=grid)
    trace = sampler.finish() if sampler is not None else None
    return _Integration(trace=trace, t_cross=t_cross, t_cross_low=t_cross_low,
                        state=final, edge_leak=edge_leak)


def run(config: SimConfig, grid: RadialGrid | None = None,
        weights: fn.WeightPair | None = None) -> SimTrace:
    """Integrate to ``T_max`` or until the sup norm passes ``U_max``.

    On a threshold crossing the run is repeated at ``dt/2``; the lifespan is
    the refined crossing time and ``converged`` records whether the two
    agree to ``lifespan_tol``.
    """
    if grid is None:
        grid = build_grid(config.domain, config.spacing, config.T_max,
                          config.coefficient.C_ell, n=config.spec.n)
    if weights is None:
        weights = prepare_weights(config, grid)
    dt = config.dt
    first = _integrate(config, grid, weights, dt, record=True)
    trace = first.trace
    trace.meta.update(fn.data_integrals(weights, config.data))
    trace.meta.update(n=config.spec.n, p=config.spec.p, R=config.domain.R,
                      r0=config.domain.r0, epsilon=config.data.epsilon,
                      source_kind=config.spec.source_kind.value,
                      source_off=config.source_off, dt=dt, spacing=grid.spacing,
                      edge_leak=first.edge_leak)
    if math.isfinite(first.t_cross):
        T_coarse = first.t_cross
        T_fine, dt_used = T_coarse, dt
        if config.refine:
            fine = _integrate(config, grid, None, dt / 2.0, record=False)
            T_fine, dt_used = fine.t_cross, dt / 2.0
        converged = (math.isfinite(T_fine)
                     and abs(T_fine - T_coarse) <= config.lifespan_tol * T_fine)
        consistent = abs(first.t_cross_low - T_coarse) <= 0.05 * T_coarse
        if not consistent:
            log.warning("threshold sensitivity above 5%%: T(U/100) = %g, T(U) = %g",
                        first.t_cross_low, T_coarse)
        trace.blowup = LifespanResult(
            T_num=T_fine, threshold=config.U_max, dt_used=dt_used,
            converged=bool(converged), T_coarse=T_coarse,
            T_low_threshold=first.t_cross_low, threshold_consistent=bool(consistent))
    return trace
