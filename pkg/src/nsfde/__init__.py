"""Simulation and certification tools for stochastic neutral functional differential equations."""

from .errors import *  # noqa: F401,F403
from .measures import (
    DelayMeasure,
    HalfLineMeasure,
    Segment,
    convolve,
    cumulative_mass,
    exp_tilt_mass,
    integrate_segment,
    reflect,
    total_variation,
)
from .functionals import (
    Distributed,
    FunctionalSpec,
    MaxNorm,
    PointDelay,
    PointwiseMap,
    check_mao_contraction,
    decompose,
    evaluate,
    rho0,
    select_T1_alpha,
)

__version__ = "0.1.0"
