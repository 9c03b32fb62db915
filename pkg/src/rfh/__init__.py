"""Spectral toolkit for Rabinowitz-Floer computations on coupled Dirac systems."""

from .critical import (
    CriticalPoint, IndexReport, NonconvergenceError, UnsupportedBranchError,
    analytic_index_oracle, h0_critical_manifolds, newton_solve, relative_index,
    rescale_to_dirac_solution,
)
from .flow import FlowTrajectory, HomotopySchedule, integrate_flow, integrate_homotopy
from .functional import FunctionalContext, action, gradient, hessian_form, reference_operator
from .homology import ChainComplexZ2, assemble_complex, assemble_h0_complex, homology
from .nonlinearity import NonlinearitySpec, check_hypotheses, select_s
from .perturbation import PerturbationMap, make_hitting_operator
from .spectral import (
    ExtendedPoint, PairField, Spectrum, build_circle_spectrum, l_spectrum,
)

__version__ = "0.1.0"

__all__ = [
    "ChainComplexZ2", "CriticalPoint", "ExtendedPoint", "FlowTrajectory", "FunctionalContext",
    "HomotopySchedule", "IndexReport", "NonconvergenceError", "NonlinearitySpec", "PairField",
    "PerturbationMap", "Spectrum", "UnsupportedBranchError", "action", "analytic_index_oracle",
    "assemble_complex", "assemble_h0_complex", "build_circle_spectrum", "check_hypotheses",
    "gradient", "h0_critical_manifolds", "hessian_form", "homology", "integrate_flow",
    "integrate_homotopy", "l_spectrum", "make_hitting_operator", "newton_solve",
    "reference_operator", "relative_index", "rescale_to_dirac_solution", "select_s",
]
