"""Exterior geometry, radial coefficients and uniform radial grids.

The obstacle is the ball (or interval) of radius ``r0`` about the origin and
the operator is ``div(a(r) grad u)`` with a scalar radial profile ``a`` that
equals one outside ``B_R``.  For ``n = 1`` only the right component
``x > r0`` is represented.
"""
from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import gamma

from .errors import ConfigError, HorizonNegative, InvalidProblem, NonPositiveSpacing


class SourceKind(enum.Enum):
    DisplacementPower = "displacement"  # u_tt - div(a grad u) = |u|^p
    VelocityPower = "velocity"  # u_tt - div(a grad u) = |u_t|^p

    @classmethod
    def parse(cls, text: str) -> "SourceKind":
        key = str(text).strip().lower()
        for kind in cls:
            if key in (kind.value, kind.name.lower()):
                return kind
        raise ConfigError(f"unknown source kind {text!r}")


def p1_critical(n: int) -> float:
    """Larger root of ``(n-1) p^2 - (n+1) p - 2 = 0`` (Strauss exponent)."""
    if n < 2:
        return math.inf
    b = n + 1.0
    return (b + math.sqrt(b * b + 8.0 * (n - 1))) / (2.0 * (n - 1))


def p2_critical(n: int) -> float:
    """Critical power ``2/(n-1) + 1`` for the velocity source; infinite for n = 1."""
    if n < 2:
        return math.inf
    return 2.0 / (n - 1) + 1.0


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere S^{n-1} (2 for n = 1)."""
    return 2.0 * math.pi ** (n / 2.0) / float(gamma(n / 2.0))


def ball_volume(n: int) -> float:
    return math.pi ** (n / 2.0) / float(gamma(n / 2.0 + 1.0))


@dataclass(frozen=True)
class ProblemSpec:
    n: int
    p: float
    source_kind: SourceKind

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise InvalidProblem(f"dimension must be a positive integer, got {self.n}")
        if not self.p > 1.0:
            raise InvalidProblem(f"exponent must exceed 1, got {self.p}")
        if self.source_kind is SourceKind.DisplacementPower:
            if self.n < 3:
                raise InvalidProblem("the |u|^p problem is posed for n >= 3")
            if not self.p < self.p1_crit:
                raise InvalidProblem(
                    f"p = {self.p} is not below p1({self.n}) = {self.p1_crit}")
        elif (self.n - 1) * (self.p - 1) > 2.0 + 1e-12:
            raise InvalidProblem(
                f"p = {self.p} exceeds p2({self.n}) = {self.p2_crit}")

    @property
    def p1_crit(self) -> float:
        return p1_critical(self.n)

    @property
    def p2_crit(self) -> float:
        return p2_critical(self.n)

    @property
    def p_conjugate(self) -> float:
        return self.p / (self.p - 1.0)


class Sidedness(enum.Enum):
    RadialExterior = "radial"
    HalfLineRight = "half_line"


@dataclass(frozen=True)
class DomainSpec:
    r0: float
    R: float
    sidedness: Sidedness = Sidedness.RadialExterior

    def __post_init__(self):
        if not self.r0 > 0:
            raise InvalidProblem(f"obstacle radius must be positive, got {self.r0}")
        if not self.R > self.r0:
            raise InvalidProblem(f"need r0 < R, got r0={self.r0}, R={self.R}")

    @classmethod
    def for_dimension(cls, n: int, r0: float, R: float) -> "DomainSpec":
        side = Sidedness.HalfLineRight if n == 1 else Sidedness.RadialExterior
        return cls(r0=r0, R=R, sidedness=side)


# ---------------------------------------------------------------------------
# Profiles

def bump(s):
    """Smooth mollifier ``exp(s^2/(s^2-1))`` on (-1, 1), zero outside, peak 1."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    s2 = s[inside] ** 2
    out[inside] = np.exp(s2 / (s2 - 1.0))
    return out


_PROFILE_RE = re.compile(r"^\s*([A-Za-z_]+)\s*(?:\((.*)\))?\s*$")


def parse_profile(text: str) -> tuple[str, tuple[float, ...]]:
    """Split ``"bump(0.5, 1.5, 0.4)"`` into ``("bump", (0.5, 1.5, 0.4))``."""
    m = _PROFILE_RE.match(str(text))
    if m is None:
        raise ConfigError(f"cannot parse profile {text!r}")
    name = m.group(1).lower()
    args = m.group(2)
    params: tuple[float, ...] = ()
    if args is not None and args.strip():
        try:
            params = tuple(float(x) for x in args.split(","))
        except ValueError as exc:
            raise ConfigError(f"bad profile parameters in {text!r}") from exc
    return name, params


def format_profile(name: str, params: tuple[float, ...]) -> str:
    if not params:
        return name
    return f"{name}({', '.join(repr(float(x)) for x in params)})"


@dataclass(frozen=True)
class CoefficientField:
    """Scalar radial coefficient ``a(r)``, realizing ``a_ij = a(r) delta_ij``."""

    profile: Callable[[np.ndarray], np.ndarray]
    C_ell: float
    name: str = "custom"
    params: tuple[float, ...] = ()

    def __call__(self, r):
        return self.profile(np.asarray(r, dtype=float))

    @property
    def spec(self) -> str:
        return format_profile(self.name, self.params)

    @property
    def max_speed(self) -> float:
        return math.sqrt(self.C_ell)


def identity_coefficient() -> CoefficientField:
    return CoefficientField(profile=lambda r: np.ones_like(r, dtype=float),
                            C_ell=1.0, name="identity")


def bump_coefficient(amplitude: float, center: float, width: float) -> CoefficientField:
    """``a(r) = 1 + amplitude * bump((r - center)/width)``."""
    if not amplitude > -1.0:
        raise InvalidProblem("amplitude must exceed -1 to keep a(r) positive")
    if not width > 0:
        raise InvalidProblem("bump width must be positive")

    def profile(r):
        return 1.0 + amplitude * bump((r - center) / width)

    peak = 1.0 + amplitude
    return CoefficientField(profile=profile, C_ell=max(peak, 1.0 / peak),
                            name="bump", params=(amplitude, center, width))


def coefficient_from_spec(text: str) -> CoefficientField:
    name, params = parse_profile(text)
    if name == "identity" and not params:
        return identity_coefficient()
    if name == "bump" and len(params) == 3:
        return bump_coefficient(*params)
    raise ConfigError(f"unknown coefficient profile {text!r}")


# ---------------------------------------------------------------------------
# Grids

@dataclass(frozen=True, eq=False)
class RadialGrid:
    nodes: np.ndarray
    n: int
    r0: float
    R: float

    def __post_init__(self):
        self.nodes.setflags(write=False)

    @property
    def spacing(self) -> float:
        return float(self.nodes[1] - self.nodes[0])

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def r_outer(self) -> float:
        return float(self.nodes[-1])

    @property
    def measure_factor(self) -> float:
        """Angular factor of the volume element; 1 for the single n = 1 component."""
        return 1.0 if self.n == 1 else sphere_area(self.n)

    def volume_weight(self, r=None):
        r = self.nodes if r is None else np.asarray(r, dtype=float)
        return self.measure_factor * r ** (self.n - 1)

    def trapezoid_weights(self) -> np.ndarray:
        w = self.spacing * self.volume_weight()
        w[0] *= 0.5
        w[-1] *= 0.5
        return w

    def index_at_or_below(self, r: float) -> int:
        """Largest node index with ``nodes[i] <= r`` (clipped to the grid)."""
        i = int(math.floor((r - self.r0) / self.spacing + 1e-9))
        return min(max(i, 0), self.size - 1)

    def is_uniform(self, rtol: float = 1e-12) -> bool:
        d = np.diff(self.nodes)
        return bool(np.all(np.abs(d - self.spacing) <= rtol * max(self.spacing, 1.0)))

    def same_as(self, other: "RadialGrid") -> bool:
        return (self is other) or (
            self.n == other.n and self.size == other.size
            and np.array_equal(self.nodes, other.nodes))


def build_grid(domain: DomainSpec, spacing: float, horizon: float, C_ell: float = 1.0,
               n: int = 3) -> RadialGrid:
    """Uniform grid on ``[r0, r0 + R + sqrt(C_ell)*horizon + 2*spacing]`` (rounded up)."""
    if not spacing > 0:
        raise NonPositiveSpacing(f"spacing must be positive, got {spacing}")
    if horizon < 0:
        raise HorizonNegative(f"horizon must be nonnegative, got {horizon}")
    span = domain.R + math.sqrt(C_ell) * horizon + 2.0 * spacing
    m = int(math.ceil(span / spacing - 1e-9))
    nodes = domain.r0 + spacing * np.arange(m + 1, dtype=float)
    return RadialGrid(nodes=nodes, n=n, r0=domain.r0, R=domain.R)


@dataclass(frozen=True)
class EllipticityReport:
    min_a: float
    max_a: float
    tail_deviation: float
    C_ell: float
    violating_nodes: tuple[float, ...] = field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        return not self.violating_nodes


def validate_coefficient(coeff: CoefficientField, grid: RadialGrid) -> EllipticityReport:
    """Check ``1/C <= a <= C`` on the grid and ``a == 1`` bit-exactly for ``r >= R``."""
    r = grid.nodes
    a = coeff(r)
    tol = 1e-12
    bad = (a < 1.0 / coeff.C_ell - tol) | (a > coeff.C_ell + tol) | ~np.isfinite(a)
    tail = r >= grid.R
    bad |= tail & (a != 1.0)
    dev = float(np.max(np.abs(a[tail] - 1.0))) if np.any(tail) else 0.0
    return EllipticityReport(min_a=float(a.min()), max_a=float(a.max()),
                             tail_deviation=dev, C_ell=coeff.C_ell,
                             violating_nodes=tuple(float(x) for x in r[bad]))
