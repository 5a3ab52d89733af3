"""P1 finite elements for -Delta_p u - Delta_q u: quasi-eigenvalues, hypotheses, and critical points."""

__version__ = "0.1.0"

from .errors import (ConvergenceFailure, GeometryFailure, HypothesisViolation, InvalidArgument,
                     InvalidBasis, NumericDomainError, PqlapError, SpecInconsistency)
from .mesh import Mesh, build_interval_mesh, build_rect_mesh, read_mesh, write_mesh
from .fem import (FeFunction, grad_seminorm, interpolate, lebesgue_norm, read_field_csv,
                  write_field_csv, write_vtk)
from .nonlinearity import NonlinearitySpec, eval_F, eval_f, growth_constant
from .energy import ProblemSpec, apply_A, energy_I, jacobian, phi_alpha, residual
from .quasi_eigen import (EigenOptions, QuasiEigenPair, SubspaceBasis, decompose, eta_sequence,
                          eta_sequence_certified, lambda1_q, nu_sequence, operator_L,
                          verify_disug_Wh)
from .critical_points import (CritOptions, SolutionRecord, deflated_search, mountain_pass,
                              newton_refine, verify_solution)
from .hypothesis import (HypothesisReport, check_H, check_resonance, estimate_limits,
                         geometry_check)

__all__ = [
    "ConvergenceFailure", "GeometryFailure", "HypothesisViolation", "InvalidArgument",
    "InvalidBasis", "NumericDomainError", "PqlapError", "SpecInconsistency",
    "Mesh", "build_interval_mesh", "build_rect_mesh", "read_mesh", "write_mesh",
    "FeFunction", "grad_seminorm", "interpolate", "lebesgue_norm", "read_field_csv",
    "write_field_csv", "write_vtk",
    "NonlinearitySpec", "eval_F", "eval_f", "growth_constant",
    "ProblemSpec", "apply_A", "energy_I", "jacobian", "phi_alpha", "residual",
    "EigenOptions", "QuasiEigenPair", "SubspaceBasis", "decompose", "eta_sequence",
    "eta_sequence_certified", "lambda1_q", "nu_sequence", "operator_L", "verify_disug_Wh",
    "CritOptions", "SolutionRecord", "deflated_search", "mountain_pass", "newton_refine",
    "verify_solution",
    "HypothesisReport", "check_H", "check_resonance", "estimate_limits", "geometry_check",
]
