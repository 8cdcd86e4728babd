"""Numerical experiments on blowup for semilinear waves outside an obstacle.

The package solves the two exterior elliptic problems that define the test
weights, integrates the radial wave equations with ``|u|^p`` or ``|u_t|^p``
sources, evaluates the weighted functionals along the run, and checks the
differential inequalities and lifespan bounds that force blowup.
"""
from .domain import (CoefficientField, DomainSpec, ProblemSpec, RadialGrid, SourceKind,
                     build_grid, bump_coefficient, coefficient_from_spec, identity_coefficient,
                     p1_critical, p2_critical, validate_coefficient)
from .elliptic import (BoundFit, EigenWeight, HarmonicWeight, check_hopf_distance,
                       check_phi1_growth, solve_phi0, solve_phi1)
from .errors import BlowupLabError
from .functionals import (Inequality, InequalityReport, WeightPair, build_context, compute_F0,
                          compute_F1, compute_G0, verify_estimate_lemma, verify_inequality)
from .ode import (BlowupTime, ExponentialLifespan, OdeProblem, RiccatiProblem,
                  integrate_riccati, integrate_sideris, rescale_sideris, riccati_closed_form,
                  theorem_exponent)
from .wave import InitialData, LifespanResult, SimConfig, SimTrace, WaveState, init_state, run, step

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
