"""Prediction workflow: covariate selection and predictive evaluation."""

from .evaluation import EvalError, EvalReport, cross_validate, evaluate, kfold_indices, rmse, roc_auc
from .lasso import LassoCV, LassoError, LassoPath, lasso_cv, lasso_path
from .selection import (
    SelectionError,
    SelectionResult,
    TraceEntry,
    best_subsets,
    lasso_then_backward,
    stepwise,
)

__all__ = [
    "EvalError",
    "EvalReport",
    "LassoCV",
    "LassoError",
    "LassoPath",
    "SelectionError",
    "SelectionResult",
    "TraceEntry",
    "best_subsets",
    "cross_validate",
    "evaluate",
    "kfold_indices",
    "lasso_cv",
    "lasso_path",
    "lasso_then_backward",
    "rmse",
    "roc_auc",
    "stepwise",
]
