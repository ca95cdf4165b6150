"""Automatic covariate selection: best subsets, stepwise, and LASSO followed
by backward elimination.

Every search records a trace of the candidate models it evaluated so the
chosen model can be audited against the alternatives.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .. import glm
from ..data import Dataset
from ..glm import ModelSpec, Term, as_terms
from .lasso import lasso_cv, lasso_path

__all__ = [
    "MAX_SUBSET_CANDIDATES",
    "SelectionError",
    "SelectionResult",
    "TraceEntry",
    "best_subsets",
    "lasso_then_backward",
    "stepwise",
]

log = logging.getLogger(__name__)

MAX_SUBSET_CANDIDATES = 20


class SelectionError(ValueError):
    pass


@dataclass(frozen=True)
class TraceEntry:
    step: int
    stage: str
    terms: tuple[str, ...]
    value: float | None
    note: str = ""

    def to_dict(self):
        return {"step": self.step, "stage": self.stage, "terms": list(self.terms), "value": self.value, "note": self.note}


@dataclass(frozen=True, eq=False)
class SelectionResult:
    spec: ModelSpec
    method: str
    criterion: str
    value: float
    trace: tuple[TraceEntry, ...]
    warnings: tuple[str, ...] = ()
    fit: glm.FittedGlm | None = field(default=None, repr=False)
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "method": self.method,
            "criterion": self.criterion,
            "value": self.value,
            "formula": self.spec.formula(),
            "terms": [str(t) for t in self.spec.terms],
            "family": self.spec.family,
            "coefficients": self.fit.as_dict() if self.fit is not None else {},
            "details": self.details,
            "warnings": list(self.warnings),
            "trace": [e.to_dict() for e in self.trace],
        }


def _criterion(name: str) -> Callable[[glm.FittedGlm], float]:
    try:
        return glm.CRITERIA[name]
    except KeyError:
        raise SelectionError(f"unknown criterion {name!r}; expected aic or bic") from None


def _evaluate(data: Dataset, spec: ModelSpec, criterion: str):
    """(value, fit, error message) for one candidate specification."""
    try:
        fitted = glm.fit(data, spec)
    except glm.GlmError as exc:
        return None, None, str(exc)
    return _criterion(criterion)(fitted), fitted, ""


def _map(fn, items: Iterable, jobs: int):
    items = list(items)
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    # results come back in submission order, so output matches a serial run
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _labels(terms: Sequence[Term]) -> tuple[str, ...]:
    return tuple(str(t) for t in terms)


def best_subsets(
    data: Dataset,
    outcome: str,
    candidates: Sequence[Term | str],
    family: str = "gaussian",
    criterion: str = "bic",
    jobs: int = 1,
) -> SelectionResult:
    """Fit every subset of ``candidates`` and keep the criterion minimiser.

    Ties go to fewer terms, then to earlier candidates.
    """
    terms = as_terms(candidates)
    _criterion(criterion)
    if len(terms) > MAX_SUBSET_CANDIDATES:
        raise SelectionError(f"best subsets is limited to {MAX_SUBSET_CANDIDATES} candidates, got {len(terms)}")
    subsets = [c for r in range(len(terms) + 1) for c in itertools.combinations(range(len(terms)), r)]
    specs = [ModelSpec(outcome, tuple(terms[i] for i in c), family) for c in subsets]
    results = _map(lambda s: _evaluate(data, s, criterion), specs, jobs)

    trace = []
    notes = []
    best = None
    for idx, spec, (value, fitted, err) in zip(subsets, specs, results):
        trace.append(TraceEntry(0, "best-subsets", _labels(spec.terms), value, err))
        if value is None:
            msg = f"skipped {spec.formula()}: {err}"
            log.warning(msg)
            notes.append(msg)
            continue
        key = (value, len(idx), idx)
        if best is None or key < best[0]:
            best = (key, spec, fitted)
    if best is None:
        raise SelectionError("no candidate subset could be fitted")
    (value, _, _), spec, fitted = best
    return SelectionResult(spec, "best-subsets", criterion, value, tuple(trace), tuple(notes), fitted)


def stepwise(
    data: Dataset,
    outcome: str,
    candidates: Sequence[Term | str],
    family: str = "gaussian",
    direction: str = "forward",
    criterion: str = "bic",
    jobs: int = 1,
    stage: str | None = None,
) -> SelectionResult:
    """Greedy forward addition or backward elimination, one term per step.

    Stops as soon as no single move lowers the criterion. Ties go to the
    earliest candidate in declaration order.
    """
    if direction not in ("forward", "backward"):
        raise SelectionError(f"direction must be forward or backward, got {direction!r}")
    terms = as_terms(candidates)
    stage = stage or direction
    current = () if direction == "forward" else tuple(range(len(terms)))

    def spec_of(idx):
        return ModelSpec(outcome, tuple(terms[i] for i in idx), family)

    value, fitted, err = _evaluate(data, spec_of(current), criterion)
    if value is None:
        if direction == "backward":
            raise SelectionError(f"full model cannot be fitted: {err}")
        raise SelectionError(f"intercept-only model cannot be fitted: {err}")
    trace = [TraceEntry(0, stage, _labels(spec_of(current).terms), value, "start")]
    notes = []
    step = 0
    while True:
        step += 1
        if direction == "forward":
            moves = [tuple(sorted(current + (i,))) for i in range(len(terms)) if i not in current]
        else:
            moves = [tuple(i for i in current if i != j) for j in current]
        if not moves:
            break
        results = _map(lambda m: _evaluate(data, spec_of(m), criterion), moves, jobs)
        best = None
        for m, (v, f, e) in zip(moves, results):
            trace.append(TraceEntry(step, stage, _labels(spec_of(m).terms), v, e))
            if v is None:
                notes.append(f"skipped {spec_of(m).formula()}: {e}")
                continue
            if best is None or v < best[0]:
                best = (v, m, f)
        if best is None or not best[0] < value:
            break
        value, current, fitted = best
    return SelectionResult(spec_of(current), stage, criterion, value, tuple(trace), tuple(notes), fitted)


def lasso_then_backward(
    data: Dataset,
    outcome: str,
    candidates: Sequence[Term | str],
    family: str = "gaussian",
    criterion: str = "bic",
    k: int = 5,
    seed: int = 0,
    lambdas: Sequence[float] | None = None,
    one_se: bool = False,
    jobs: int = 1,
) -> SelectionResult:
    """LASSO screening at the CV-best lambda, then backward elimination on
    the surviving terms."""
    terms = as_terms(candidates)
    path = lasso_path(data, outcome, terms, family=family, lambdas=lambdas)
    cv = lasso_cv(data, outcome, terms, k=k, seed=seed, lambdas=path.lambdas, one_se=one_se)
    active = path.active_terms(cv.best_index)
    lasso_entry = TraceEntry(
        0,
        "lasso",
        _labels(active),
        float(cv.mean_rmse[cv.best_index]),
        f"cv rmse at lambda={cv.best_lambda!r}",
    )
    details = {"lambda": cv.best_lambda, "lambda_max": path.lambda_max, "lasso_active": list(_labels(active))}
    if not active:
        spec = ModelSpec(outcome, (), family)
        fitted = glm.fit(data, spec)
        msg = "lasso kept no covariates; returning the intercept-only model"
        log.warning(msg)
        return SelectionResult(
            spec, "lasso+backward", criterion, _criterion(criterion)(fitted), (lasso_entry,), (msg,), fitted, details
        )
    back = stepwise(data, outcome, active, family, "backward", criterion, jobs=jobs)
    return SelectionResult(
        back.spec,
        "lasso+backward",
        criterion,
        back.value,
        (lasso_entry,) + back.trace,
        back.warnings,
        back.fit,
        details,
    )
