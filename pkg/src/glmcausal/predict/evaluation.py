"""Predictive performance: RMSE, rank-based ROC AUC and k-fold cross-validation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.stats import rankdata

from .. import glm
from ..data import Dataset
from ..glm import ModelSpec

__all__ = ["EvalError", "EvalReport", "cross_validate", "evaluate", "kfold_indices", "rmse", "roc_auc"]

METRICS = ("rmse", "auc", "adjusted-r2")


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class EvalReport:
    metric: str
    value: float
    source: str  # "training", "cv" or "heldout"
    k: int | None = None
    seed: int | None = None
    dataset_id: str | None = None
    fold_values: tuple[float, ...] = ()
    details: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"metric": self.metric, "value": self.value, "source": self.source}
        if self.source == "cv":
            out["k"] = self.k
            out["seed"] = self.seed
            out["fold_values"] = list(self.fold_values)
        if self.dataset_id is not None:
            out["dataset_id"] = self.dataset_id
        if self.details:
            out["details"] = self.details
        return out


def rmse(predictions, observations) -> float:
    pred = np.asarray(predictions, dtype=np.float64)
    obs = np.asarray(observations, dtype=np.float64)
    if pred.shape != obs.shape:
        raise EvalError(f"length mismatch: {pred.shape} vs {obs.shape}")
    if pred.size == 0:
        raise EvalError("rmse of an empty vector")
    return float(np.sqrt(np.mean((pred - obs) ** 2)))


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve via the Mann-Whitney U statistic.

    Tied scores contribute one half.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise EvalError("scores and labels differ in length")
    if not np.all((labels == 0) | (labels == 1)):
        raise EvalError("labels must be binary 0/1")
    pos = labels == 1
    n1 = int(pos.sum())
    n0 = labels.size - n1
    if n1 == 0 or n0 == 0:
        raise EvalError("AUC needs both outcome classes")
    ranks = rankdata(scores)
    u = ranks[pos].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n1 * n0))


def kfold_indices(n: int, k: int, seed: int) -> list[np.ndarray]:
    """Seeded shuffle (PCG64) split into ``k`` near-equal folds."""
    if not 2 <= k <= n:
        raise EvalError(f"k must lie in [2, {n}], got {k}")
    perm = np.random.Generator(np.random.PCG64(seed)).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


def _score(metric, family, mu, y):
    if metric == "rmse":
        return rmse(mu, y)
    if metric == "auc":
        if family is not glm.BINOMIAL:
            raise EvalError("auc requires the binomial family")
        try:
            return roc_auc(mu, y)
        except EvalError as exc:
            raise EvalError(f"cannot compute AUC on this fold: {exc}") from None
    raise EvalError(f"metric {metric!r} is not available out of sample")


def evaluate(result: glm.FittedGlm, data: Dataset | None = None, metric: str = "rmse", dataset_id: str | None = None) -> EvalReport:
    """Score a fitted model on its training data (``data=None``) or on a
    held-out dataset."""
    if metric not in METRICS:
        raise EvalError(f"unknown metric {metric!r}")
    if metric == "adjusted-r2":
        if data is not None:
            raise EvalError("adjusted-r2 is a training-data summary")
        return EvalReport(metric, glm.adjusted_r2(result), "training")
    if data is None:
        raise EvalError(f"{metric} needs the data to score against")
    mu = glm.predict(result, data)
    y = np.asarray(data[result.spec.outcome], dtype=np.float64)
    value = _score(metric, result.family, mu, y)
    source = "training" if dataset_id is None else "heldout"
    return EvalReport(metric, value, source, dataset_id=dataset_id)


def cross_validate(data: Dataset, model, family=None, k: int = 5, seed: int = 0, metric: str = "rmse", **kwargs) -> EvalReport:
    """Mean held-out ``metric`` over ``k`` seeded folds.

    ``model`` is a :class:`ModelSpec` or a :class:`LassoPath`; for a path
    the report carries the per-lambda curve and the CV-best lambda.
    """
    from .lasso import LassoPath, lasso_cv

    if isinstance(model, LassoPath):
        if metric != "rmse":
            raise EvalError("lasso paths are cross-validated on rmse")
        cv = lasso_cv(data, model.outcome, model.terms, k=k, seed=seed, lambdas=model.lambdas, **kwargs)
        return EvalReport(
            "rmse",
            float(cv.mean_rmse[cv.best_index]),
            "cv",
            k=k,
            seed=seed,
            fold_values=tuple(float(v) for v in cv.fold_rmse[:, cv.best_index]),
            details={"best_lambda": cv.best_lambda, "one_se": cv.one_se},
        )

    spec: ModelSpec = model if family is None else ModelSpec(model.outcome, model.terms, family)
    fam = glm.get_family(spec.family)
    if metric not in METRICS:
        raise EvalError(f"unknown metric {metric!r}")
    if metric == "auc" and fam is not glm.BINOMIAL:
        raise EvalError("auc requires the binomial family")
    values = []
    for test in kfold_indices(data.n, k, seed):
        train = np.setdiff1d(np.arange(data.n), test, assume_unique=True)
        fitted = glm.fit(data.take(train), spec)
        held = data.take(test)
        mu = glm.predict(fitted, held)
        values.append(_score(metric, fam, mu, np.asarray(held[spec.outcome], dtype=np.float64)))
    return EvalReport(metric, float(np.mean(values)), "cv", k=k, seed=seed, fold_values=tuple(values))
