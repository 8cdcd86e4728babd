import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad, solve_ivp

from exterior_blowup.domain import ProblemSpec, SourceKind
from exterior_blowup.errors import CriticalOrSupercritical, InvalidProblem, RegimeMismatch
from exterior_blowup.ode import (ExponentialLifespan, Method, OdeProblem, RiccatiProblem,
                                 growth_threshold, integrate_riccati, integrate_sideris,
                                 lifespan_exponent, rescale_sideris, riccati_closed_form,
                                 theorem_exponent, unscaled_time)


def test_equality_case_against_quadrature():
    ode = OdeProblem(p=2, a=1, q=0, R=1, delta=1, F0_init=1.0, F0_prime_init=0.0, forced=False)
    res = integrate_sideris(ode)
    # F'^2 = (2/3)(F^3 - 1); substitute F = 1 + s^2 to remove the endpoint singularity
    ref, _ = quad(lambda s: 2.0 / math.sqrt(2.0 / 3.0 * (3 + 3 * s * s + s ** 4)), 0, math.inf,
                  epsabs=1e-13, epsrel=1e-13)
    lo, hi = res.certified_interval
    assert res.method is Method.Numerical and res.certified
    assert lo <= ref <= hi
    assert abs(res.value - ref) / ref <= 1e-2


def sideris_times(deltas, **kw):
    return np.array([integrate_sideris(OdeProblem(p=2, a=2, q=3, R=1, delta=d, **kw)).value
                     for d in deltas])


def test_delta_sweep_slope():
    deltas = np.array([1e-1, 1e-2, 1e-3, 1e-4])
    T = sideris_times(deltas)
    slope = np.polyfit(np.log(deltas), np.log(T), 1)[0]
    assert abs(slope + 1.0) <= 0.1


def test_rescaling():
    ode = OdeProblem(p=2, a=2, q=3, R=1, delta=0.01)
    assert ode.delta_exponent == pytest.approx(1.0)
    assert rescale_sideris(OdeProblem(p=2, a=2, q=3, R=1, delta=1.0)) == OdeProblem(
        p=2, a=2, q=3, R=1, delta=1.0)
    H = rescale_sideris(ode)
    assert H.delta == 1.0
    T_F = integrate_sideris(ode).value
    T_H = integrate_sideris(H).value
    assert abs(unscaled_time(ode, T_H) - T_F) / T_F <= 0.02


def test_rescaled_growth_bound():
    ode = OdeProblem(p=2, a=2, q=3, R=1, delta=0.01)
    assert ode.delta <= growth_threshold(ode)
    H = rescale_sideris(ode)
    T_H = integrate_sideris(H).value
    tau = np.linspace(0, 0.9 * T_H, 50)
    sol = solve_ivp(H.rhs, (0, tau[-1]), [H.F0_init, H.F0_prime_init], t_eval=tau,
                    method="DOP853", rtol=1e-10, atol=1e-12)
    assert np.all(sol.y[0] >= tau ** H.a)


def test_sideris_monotonicity():
    base = dict(p=2, a=2, q=3, R=1)
    t = lambda **kw: integrate_sideris(OdeProblem(**{**base, "delta": 0.01, **kw})).value
    assert t(delta=0.02) <= t()
    assert t(k=2.0) <= t()
    assert t(q=3.3) >= t()


def test_outside_scope_is_marked():
    res = integrate_sideris(OdeProblem(p=2, a=1, q=4, R=1, delta=1.0))
    assert not res.in_scope


def test_invalid_problem():
    with pytest.raises(InvalidProblem):
        OdeProblem(p=1.0, a=1, q=0, R=1, delta=1)
    with pytest.raises(InvalidProblem):
        RiccatiProblem(C9=1, M=1, epsilon=0.1, n=1, p=2, R=-1)


def test_closed_form_examples():
    power = RiccatiProblem(C9=1, M=1, epsilon=0.1, n=1, p=2, R=1)
    assert riccati_closed_form(power).value == pytest.approx(10.0, rel=1e-12)
    border = RiccatiProblem(C9=1, M=1, epsilon=0.2, n=3, p=2, R=1)
    assert riccati_closed_form(border).value == pytest.approx(math.exp(5.0) - 1, rel=1e-12)
    for prob in (power, border):
        num = integrate_riccati(prob)
        assert num.certified
        assert abs(num.value / riccati_closed_form(prob).value - 1) <= 1e-2


def test_regime_mismatch():
    with pytest.raises(RegimeMismatch):
        RiccatiProblem(C9=1, M=1, epsilon=0.1, n=3, p=3, R=1)


def test_p_near_one_does_not_overflow():
    prob = RiccatiProblem(C9=1, M=1, epsilon=0.5, n=1, p=1.01, R=1)
    num = integrate_riccati(prob)
    assert math.isfinite(num.value)
    assert abs(num.value / riccati_closed_form(prob).value - 1) <= 1e-2


@given(st.floats(0.05, 0.9), st.floats(0.3, 3.0), st.floats(0.5, 3.0),
       st.sampled_from([(1, 2.0), (1, 3.0), (2, 1.5), (2, 3.0), (3, 1.5), (3, 2.0), (5, 1.5)]))
def test_closed_form_matches_numerical(eps, C9, R, np_pair):
    n, p = np_pair
    prob = RiccatiProblem(C9=C9, M=1.0, epsilon=eps, n=n, p=p, R=R)
    T = riccati_closed_form(prob).value
    if T > 1e12:
        return
    assert abs(integrate_riccati(prob).value / T - 1) <= 1e-2


@given(st.floats(0.05, 0.9), st.floats(1.01, 1.1), st.sampled_from([(1, 2.0), (3, 2.0), (2, 1.5)]))
def test_closed_form_decreases_in_epsilon(eps, factor, np_pair):
    n, p = np_pair
    lo = RiccatiProblem(C9=1, M=1, epsilon=eps, n=n, p=p, R=1)
    hi = RiccatiProblem(C9=1, M=1, epsilon=eps * factor, n=n, p=p, R=1)
    assert riccati_closed_form(hi).value < riccati_closed_form(lo).value


def test_lifespan_exponents():
    assert theorem_exponent(ProblemSpec(3, 2.0, SourceKind.DisplacementPower)) == 2.0
    assert theorem_exponent(ProblemSpec(1, 2.0, SourceKind.VelocityPower)) == 1.0
    assert theorem_exponent(ProblemSpec(3, 2.0, SourceKind.VelocityPower)) is ExponentialLifespan
    with pytest.raises(CriticalOrSupercritical):
        lifespan_exponent(SourceKind.DisplacementPower, 3, 2.5)
    with pytest.raises(CriticalOrSupercritical):
        lifespan_exponent(SourceKind.VelocityPower, 3, 2.5)
