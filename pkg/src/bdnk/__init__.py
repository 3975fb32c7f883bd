"""Conformal causal viscous relativistic hydrodynamics toolkit.

Extended-state construction, principal-matrix assembly, closed-form
characteristic analysis with causality checking, pseudo-spectral evolution
on the 3-torus, and a frozen-coefficient iteration harness with discrete
Sobolev-norm energy monitoring.
"""

__version__ = "0.1.0"

from . import (
    characteristics,
    evolve,
    firstorder,
    grid,
    manufactured,
    picard,
    state,
    tensor,
)
from .characteristics import (
    CausalityReport,
    CovectorPair,
    DiagonalizationResult,
    RootFamilies,
    characteristic_roots,
    check_causality,
    det_symbol,
    diagonalize,
    rest_frame_speeds,
)
from .evolve import EvolveConfig, InitialData, Trajectory
from .grid import TorusGrid, sobolev_norm
from .picard import EnergyReport, IterationReport, energy_monitor, picard_iterate
from .state import ExtendedState, TransportModel, theta_from_eps
