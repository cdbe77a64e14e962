"""Noisy low-rank tensor completion with max-qnorm constrained least squares."""

from .completion import (CompletionResult, MaxQNormCompleter, complete_with_cv,
                         estimate_max_qnorm, matricized_baseline, rmse)
from .norms import (QnormBound, balance_factors, concat_factorizations,
                    m_norm_upper_bound, max_qnorm_upper_bound, max_qnorm_value,
                    project_rows, two_inf_norm)
from .observation import (ObservationSet, SamplingDistribution, draw_indices,
                          observe, split_train_validate)
from .solvers import SolverParams, SolverState, solve
from .tensor_core import cp_compose, random_low_rank, read_tns, write_tns

__version__ = "0.1.0"

__all__ = [
    "CompletionResult", "MaxQNormCompleter", "ObservationSet", "QnormBound",
    "SamplingDistribution", "SolverParams", "SolverState", "balance_factors",
    "complete_with_cv", "concat_factorizations", "cp_compose", "draw_indices",
    "estimate_max_qnorm", "m_norm_upper_bound", "matricized_baseline",
    "max_qnorm_upper_bound", "max_qnorm_value", "observe", "project_rows",
    "random_low_rank", "read_tns", "rmse", "solve", "split_train_validate",
    "two_inf_norm", "write_tns",
]
