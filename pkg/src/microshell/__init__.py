"""Equilibrium theory of microcanonical ensembles with unbounded moment
constraints: tilted exponential families, phase classification,
large-deviation rate functions, shell MCMC and diagnostics."""

__version__ = "0.1.0"

from . import (  # noqa: F401
    diagnostics,
    dual_solver,
    observables,
    quadrature,
    rate_functions,
    sampler,
)
from .errors import *  # noqa: F401,F403
