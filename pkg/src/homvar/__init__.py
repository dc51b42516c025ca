"""Homogeneous causal variational principle over negative definite measures.

Submodules
----------
krein     indefinite inner product on ``C^2n`` and spectral utilities
measure   finitely supported operator-valued measures
dirac     discretized Dirac sea on the lower mass shell
action    closed chain, Lagrangian and truncated action
optimize  finite-difference minimization under trace and bound constraints
harness   seeded empirical checks of the quantitative statements
cli       ``homvar`` command line
"""

from .action import ConstraintSet, QuadratureBox, action, lagrangian, t_functional
from .dirac import ShellGrid, build_dirac_sea
from .errors import (
    DimensionError,
    EigenSolverError,
    HomvarError,
    NeutralDegeneracyError,
    NotConvergedError,
    TraceProjectionError,
    UnboundedSequenceError,
    ValidationError,
)
from .kernels import BACKEND as KERNEL_BACKEND
from .krein import SignatureSpace, adjoint, approximate_diagonalize, eigenvalues, spectral_weight, ssp
from .measure import AtomicMeasure, CompactBox, NegativeDefiniteMeasure, measure_from_json, measure_to_json
from .optimize import FactorParameterization, RunConfig, gauge_normalize, minimize

__version__ = "0.1.0"

__all__ = [
    "AtomicMeasure", "CompactBox", "ConstraintSet", "DimensionError", "EigenSolverError",
    "FactorParameterization", "HomvarError", "KERNEL_BACKEND", "NegativeDefiniteMeasure",
    "NeutralDegeneracyError", "NotConvergedError", "QuadratureBox", "RunConfig", "ShellGrid",
    "SignatureSpace", "TraceProjectionError", "UnboundedSequenceError", "ValidationError",
    "action", "adjoint", "approximate_diagonalize", "build_dirac_sea", "eigenvalues",
    "gauge_normalize", "lagrangian", "measure_from_json", "measure_to_json", "minimize",
    "spectral_weight", "ssp", "t_functional",
]
