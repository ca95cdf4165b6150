"""Causal workflow: choose a valid adjustment set from a DAG, estimate the
total effect of the exposure, and test the DAG's implied independencies.

Only the exposure coefficient is reported as causal. Every other
coefficient in the fitted model is kept, but under a label that marks it
as an adjustment term with no causal reading.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import norm

from . import glm
from .dag import AdjustmentVerdict, CONDITION_TEXT, Dag, check_adjustment, implied_independencies, minimal_adjustment_sets
from .data import Dataset
from .glm import ModelSpec

__all__ = [
    "CAUSAL_LABEL",
    "NON_CAUSAL_LABEL",
    "CausalError",
    "EffectReport",
    "IndependenceTestResult",
    "InvalidAdjustmentError",
    "NoValidAdjustmentError",
    "estimate_total_effect",
    "fisher_z_test",
    "render_effect_report",
    "test_implied_independencies",
]

CAUSAL_LABEL = "total causal effect"
NON_CAUSAL_LABEL = "adjustment — not causally interpretable"
Z_95 = 1.96

_SCALES = {"gaussian": "identity (difference in mean)", "binomial": "logit (log odds ratio)", "poisson": "log (log rate ratio)"}


class CausalError(ValueError):
    pass


class NoValidAdjustmentError(CausalError):
    def __init__(self, message: str, verdict: AdjustmentVerdict | None = None):
        self.verdict = verdict
        super().__init__(message)


class InvalidAdjustmentError(CausalError):
    def __init__(self, verdict: AdjustmentVerdict):
        self.verdict = verdict
        parts = [
            f"condition {c} ({CONDITION_TEXT[c]}) fails on path {path}"
            for c, path in verdict.offending_paths
        ]
        parts.extend(verdict.notes)
        super().__init__(
            f"adjustment set {{{', '.join(verdict.adjustment_set)}}} is not valid: " + "; ".join(parts)
        )


@dataclass(frozen=True)
class Coefficient:
    name: str
    estimate: float
    se: float
    label: str


@dataclass(frozen=True)
class EffectReport:
    exposure: str
    outcome: str
    estimate: float
    se: float
    ci_low: float
    ci_high: float
    scale: str
    adjustment_set: tuple[str, ...]
    family: str
    dag_fingerprint: str
    non_causal: tuple[Coefficient, ...] = ()
    warnings: tuple[str, ...] = ()

    @property
    def coefficients(self) -> tuple[Coefficient, ...]:
        """All model coefficients, each with its interpretability label."""
        main = Coefficient(self.exposure, self.estimate, self.se, CAUSAL_LABEL)
        return (main,) + self.non_causal

    def to_dict(self) -> dict:
        return {
            "exposure": self.exposure,
            "outcome": self.outcome,
            "effect": {
                "estimate": self.estimate,
                "se": self.se,
                "ci_low": self.ci_low,
                "ci_high": self.ci_high,
                "scale": self.scale,
                "label": CAUSAL_LABEL,
            },
            "adjustment_set": list(self.adjustment_set),
            "non_causal_coefficients": {
                c.name: {"estimate": c.estimate, "se": c.se, "label": c.label} for c in self.non_causal
            },
            "family": self.family,
            "dag_fingerprint": self.dag_fingerprint,
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, d: dict) -> EffectReport:
        eff = d["effect"]
        return cls(
            exposure=d["exposure"],
            outcome=d["outcome"],
            estimate=eff["estimate"],
            se=eff["se"],
            ci_low=eff["ci_low"],
            ci_high=eff["ci_high"],
            scale=eff["scale"],
            adjustment_set=tuple(d["adjustment_set"]),
            family=d["family"],
            dag_fingerprint=d["dag_fingerprint"],
            non_causal=tuple(
                Coefficient(name, c["estimate"], c["se"], c["label"]) for name, c in d["non_causal_coefficients"].items()
            ),
            warnings=tuple(d["warnings"]),
        )


def _check_columns(dag: Dag, data: Dataset, names: Iterable[str]):
    missing = [v for v in names if v not in data]
    if missing:
        raise CausalError(f"DAG node(s) {missing} have no matching data column")


def estimate_total_effect(
    dag: Dag,
    data: Dataset,
    family: str = "gaussian",
    adjustment: Sequence[str] | None = None,
) -> EffectReport:
    """Fit ``outcome ~ exposure + adjustment set`` and report the exposure
    coefficient as the total causal effect.

    Without ``adjustment`` the first minimal adjustment set whose variables
    are all measured is used. An explicit set that fails the graphical
    conditions is refused with :class:`InvalidAdjustmentError`.
    """
    x, y = dag.require_roles()
    _check_columns(dag, data, (x, y))
    if not data.is_numeric(x):
        raise CausalError(f"exposure column {x!r} must be numeric")
    notes: list[str] = []

    if adjustment is not None:
        verdict = check_adjustment(dag, adjustment)
        if not verdict.valid:
            raise InvalidAdjustmentError(verdict)
        chosen = verdict.adjustment_set
        _check_columns(dag, data, chosen)
    else:
        sets = minimal_adjustment_sets(dag)
        if not sets:
            pool = [v for v in dag.nodes if v not in (x, y) and v not in dag.descendants(x)]
            verdict = check_adjustment(dag, pool)
            paths = "; ".join(str(p) for _, p in verdict.offending_paths)
            raise NoValidAdjustmentError(
                f"no adjustment set can satisfy the conditions for {x} -> {y}; unblockable path(s): {paths}",
                verdict,
            )
        measured = [s for s in sets if all(v in data for v in s)]
        if not measured:
            raise CausalError(
                "every minimal adjustment set needs an unmeasured variable: "
                + " | ".join("{" + ", ".join(s) + "}" for s in sets)
            )
        chosen = measured[0]
        if len(sets) > 1:
            notes.append(f"{len(sets)} minimal adjustment sets exist; using the first measured one")

    spec = ModelSpec(y, (x,) + tuple(chosen), family)
    fitted = glm.fit(data, spec)
    notes.extend(fitted.warnings)

    est = fitted.coefficient(x)
    se = fitted.std_error(x)
    non_causal = tuple(
        Coefficient(name, float(b), float(s), NON_CAUSAL_LABEL)
        for name, b, s in zip(fitted.names, fitted.coef, fitted.se)
        if name != x
    )
    return EffectReport(
        exposure=x,
        outcome=y,
        estimate=est,
        se=se,
        ci_low=est - Z_95 * se,
        ci_high=est + Z_95 * se,
        scale=_SCALES[spec.family],
        adjustment_set=tuple(chosen),
        family=spec.family,
        dag_fingerprint=dag.fingerprint(),
        non_causal=non_causal,
        warnings=tuple(notes),
    )


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def render_effect_report(report: EffectReport, fmt: str = "text") -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2) + "\n"
    adj = ", ".join(report.adjustment_set) if report.adjustment_set else "(none)"
    lines = [
        f"{CAUSAL_LABEL} of {report.exposure} on {report.outcome}: "
        f"{_fmt(report.estimate)} (SE {_fmt(report.se)}, 95% CI {_fmt(report.ci_low)} to {_fmt(report.ci_high)})",
        f"  scale: {report.scale}",
        f"  family: {report.family}",
        f"  adjusted for: {adj}",
        f"  dag: {report.dag_fingerprint}",
    ]
    if report.warnings:
        lines.append("")
        lines.append("warnings:")
        lines.extend(f"  - {w}" for w in report.warnings)
    lines.append("")
    lines.append(f"{NON_CAUSAL_LABEL}:")
    lines.append("  These coefficients only adjust the estimate above. They are not")
    lines.append("  effects of those variables on the outcome.")
    for c in report.non_causal:
        lines.append(f"  {c.name}: {_fmt(c.estimate)} (SE {_fmt(c.se)})")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# implied independencies


@dataclass(frozen=True)
class IndependenceTestResult:
    x: str
    y: str
    z: tuple[str, ...]
    statistic: float
    p_value: float
    consistent: bool

    def to_dict(self):
        return {
            "x": self.x,
            "y": self.y,
            "z": list(self.z),
            "statistic": self.statistic,
            "p_value": self.p_value,
            "consistent": self.consistent,
        }


def fisher_z_test(x, y, z=None) -> tuple[float, float]:
    """Fisher z test of zero partial correlation between ``x`` and ``y``
    given the columns of ``z``. Returns ``(statistic, two-sided p)``."""
    cols = [np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)]
    if z is not None:
        z = np.asarray(z, dtype=np.float64)
        cols.extend(z.T if z.ndim == 2 else [z])
    n = len(cols[0])
    k = len(cols) - 2
    if n <= k + 3:
        raise CausalError(f"need more than {k + 3} observations to test with {k} conditioning variables, got {n}")
    corr = np.corrcoef(np.vstack(cols))
    prec = np.linalg.pinv(corr)
    r = -prec[0, 1] / math.sqrt(prec[0, 0] * prec[1, 1])
    r = min(max(r, -1 + 1e-15), 1 - 1e-15)
    stat = math.sqrt(n - k - 3) * math.atanh(r)
    p = float(2.0 * norm.sf(abs(stat)))
    return stat, min(max(p, 0.0), 1.0)


def test_implied_independencies(
    dag: Dag, data: Dataset, alpha: float = 0.01, max_set_size: int | None = None
) -> list[IndependenceTestResult]:
    """Check each independence the DAG implies against ``data``."""
    _check_columns(dag, data, dag.nodes)
    cat = [v for v in dag.nodes if not data.is_numeric(v)]
    if cat:
        raise CausalError(f"independence tests need numeric columns; categorical: {cat}")
    out = []
    for a, b, z in implied_independencies(dag, max_set_size):
        zmat = np.column_stack([data[v] for v in z]) if z else None
        stat, p = fisher_z_test(data[a], data[b], zmat)
        out.append(IndependenceTestResult(a, b, z, stat, p, p >= alpha))
    return out


test_implied_independencies.__test__ = False  # keep pytest from collecting it
