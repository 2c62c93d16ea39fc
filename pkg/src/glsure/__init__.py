"""Group Lasso with closed-form sensitivity, unbiased DOF and SURE."""

from .blocks import (BlockPartition, BlockSupport, BlockVector, apply_delta_P,
                     block_support, delta_P_matrix, normalize_blocks)
from .harness import (Design, GroundTruth, McReport, fd_divergence,
                      fd_jacobian, mc_dof, mc_sure_risk, select_lambda)
from .orthogonal import block_soft_threshold, dof_orthogonal, sure_orthogonal
from .purification import PurificationError, purify
from .sensitivity import (DegeneracyError, DegeneracyWarning, SensitivityReport,
                          assemble_system, check_assumption_A, dof_estimate,
                          jacobian, reliability_bound, sensitivity_report,
                          sure)
from .solver import (GroupLassoProblem, GroupLassoSolution,
                     NonConvergenceError, kkt_check, objective, solve)

__all__ = [
    "BlockPartition", "BlockSupport", "BlockVector", "apply_delta_P",
    "block_support", "delta_P_matrix", "normalize_blocks",
    "Design", "GroundTruth", "McReport", "fd_divergence", "fd_jacobian",
    "mc_dof", "mc_sure_risk", "select_lambda",
    "block_soft_threshold", "dof_orthogonal", "sure_orthogonal",
    "PurificationError", "purify",
    "DegeneracyError", "DegeneracyWarning", "SensitivityReport",
    "assemble_system", "check_assumption_A", "dof_estimate", "jacobian",
    "reliability_bound", "sensitivity_report", "sure",
    "GroupLassoProblem", "GroupLassoSolution", "NonConvergenceError",
    "kkt_check", "objective", "solve",
]
