"""LASSO regularisation paths for the gaussian family."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .. import glm
from ..data import Dataset
from ..glm import ModelSpec, Term
from ..kernels import lasso_path_cd
from .evaluation import kfold_indices, rmse

__all__ = ["LassoCV", "LassoError", "LassoPath", "lasso_cv", "lasso_path", "default_lambdas"]

N_LAMBDAS = 100
LAMBDA_RATIO = 1e-3


class LassoError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LassoPath:
    outcome: str
    terms: tuple[Term, ...]
    columns: tuple[str, ...]
    column_terms: tuple[Term, ...]
    lambdas: np.ndarray
    lambda_max: float
    coef_std: np.ndarray
    coef: np.ndarray
    intercept: np.ndarray
    sweeps: np.ndarray
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float
    encodings: tuple = ()

    def design_matrix(self, data: Dataset) -> np.ndarray:
        """Raw covariate columns for ``data`` using the training encodings."""
        spec = ModelSpec(self.outcome, self.terms, "gaussian")
        return glm.build_design(data, spec, self.encodings, with_response=False).X[:, 1:]

    @property
    def active_sets(self) -> list[tuple[str, ...]]:
        return [tuple(c for c, b in zip(self.columns, row) if b != 0.0) for row in self.coef_std]

    def active_terms(self, index: int) -> tuple[Term, ...]:
        """Candidate terms with at least one non-zero column at ``lambdas[index]``."""
        hit = {t for t, b in zip(self.column_terms, self.coef_std[index]) if b != 0.0}
        return tuple(t for t in self.terms if t in hit)

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Fitted means for raw (unstandardised) design columns, one column per lambda."""
        return self.intercept[None, :] + X @ self.coef.T


def default_lambdas(lambda_max: float, n_lambdas: int = N_LAMBDAS, ratio: float = LAMBDA_RATIO) -> np.ndarray:
    return lambda_max * np.logspace(0.0, np.log10(ratio), n_lambdas)


def _design(data: Dataset, outcome: str, candidates: Sequence[Term | str]):
    spec = ModelSpec(outcome, tuple(candidates), "gaussian")
    if data.n < 2:
        raise LassoError("lasso needs at least two observations")
    design = glm.build_design(data, spec)
    col_terms = [enc.term for enc in design.encodings for _ in enc.names]
    return spec, design, tuple(col_terms)


def lasso_path(
    data: Dataset,
    outcome: str,
    candidates: Sequence[Term | str],
    family: str = "gaussian",
    lambdas: Sequence[float] | None = None,
    tol: float = 1e-7,
    backend: str | None = None,
) -> LassoPath:
    """Coordinate-descent LASSO over a decreasing lambda grid.

    Covariates are standardised (population sd) and the response centred;
    the objective is (1/2n)||y - Xb||^2 + lambda * ||b||_1 and the intercept
    is never penalised. Without ``lambdas`` the grid runs from lambda_max,
    the smallest value giving an all-zero fit, down to 0.001 * lambda_max
    over 100 log-spaced points.
    """
    if glm.get_family(family) is not glm.GAUSSIAN:
        raise LassoError("lasso_path supports the gaussian family only")
    spec, design, col_terms = _design(data, outcome, candidates)
    X, y, columns = design.X[:, 1:], design.y, design.names[1:]
    n, p = X.shape
    x_mean = X.mean(axis=0)
    x_scale = X.std(axis=0)
    flat = np.flatnonzero(x_scale == 0.0)
    if flat.size:
        raise LassoError(f"zero-variance covariate {columns[flat[0]]!r}")
    Xs = (X - x_mean) / x_scale
    y_mean = float(y.mean())
    yc = y - y_mean

    lambda_max = float(np.max(np.abs(Xs.T @ yc)) / n) if p else 0.0
    if lambdas is None:
        grid = default_lambdas(lambda_max)
    else:
        grid = np.sort(np.asarray(lambdas, dtype=np.float64))[::-1]
        if np.any(grid < 0):
            raise LassoError("lambdas must be non-negative")

    coef_std = np.zeros((len(grid), p))
    sweeps = np.zeros(len(grid), dtype=np.int64)
    # at or above lambda_max the zero vector satisfies the KKT conditions exactly
    live = np.flatnonzero(grid < lambda_max)
    if live.size and p:
        coef_std[live], sweeps[live] = lasso_path_cd(Xs, yc, grid[live], tol=tol, backend=backend)

    coef = coef_std / x_scale
    intercept = y_mean - coef @ x_mean
    return LassoPath(
        outcome=outcome,
        terms=spec.terms,
        columns=tuple(columns),
        column_terms=col_terms,
        lambdas=grid,
        lambda_max=lambda_max,
        coef_std=coef_std,
        coef=coef,
        intercept=intercept,
        sweeps=sweeps,
        x_mean=x_mean,
        x_scale=x_scale,
        y_mean=y_mean,
        encodings=design.encodings,
    )


@dataclass(frozen=True, eq=False)
class LassoCV:
    lambdas: np.ndarray
    fold_rmse: np.ndarray  # (k, n_lambdas)
    mean_rmse: np.ndarray
    se_rmse: np.ndarray
    best_index: int
    one_se: bool

    @property
    def best_lambda(self) -> float:
        return float(self.lambdas[self.best_index])


def lasso_cv(
    data: Dataset,
    outcome: str,
    candidates: Sequence[Term | str],
    k: int = 5,
    seed: int = 0,
    lambdas: Sequence[float] | None = None,
    one_se: bool = False,
    backend: str | None = None,
) -> LassoCV:
    """k-fold CV of held-out rmse along one lambda grid.

    The grid comes from the full data unless given. The chosen lambda
    minimises mean CV rmse; with ``one_se`` it is instead the largest lambda
    within one standard error of that minimum.
    """
    if lambdas is None:
        lambdas = lasso_path(data, outcome, candidates, backend=backend).lambdas
    grid = np.sort(np.asarray(lambdas, dtype=np.float64))[::-1]
    folds = kfold_indices(data.n, k, seed)
    scores = np.zeros((k, len(grid)))
    for f, test in enumerate(folds):
        train = np.setdiff1d(np.arange(data.n), test, assume_unique=True)
        path = lasso_path(data.take(train), outcome, candidates, lambdas=grid, backend=backend)
        held = data.take(test)
        pred = path.predict(path.design_matrix(held))
        y = np.asarray(held[outcome], dtype=np.float64)
        scores[f] = [rmse(pred[:, j], y) for j in range(len(grid))]
    mean = scores.mean(axis=0)
    se = scores.std(axis=0, ddof=1) / np.sqrt(k)
    best = int(np.argmin(mean))
    if one_se:
        ok = np.flatnonzero(mean <= mean[best] + se[best])
        best = int(ok.min())  # grid is decreasing, so smallest index = largest lambda
    return LassoCV(grid, scores, mean, se, best, one_se)

