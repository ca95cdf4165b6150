"""Structural-equation simulation with known causal ground truth.

Each node is a linear function of its DAG parents plus independent noise,
either gaussian (``sd``) or a Bernoulli draw through a logit link.

Reproducibility contract: a dataset is generated from
``numpy.random.Generator(numpy.random.PCG64(seed))``. Nodes are visited in
the DAG's topological order (ties by declaration order) and each node
consumes exactly ``n`` variates: ``standard_normal`` (numpy's ziggurat
method) for gaussian nodes, ``random`` for Bernoulli nodes, which are 1
when the uniform draw is below ``expit(eta)``. Output is identical for
identical ``(sem, n, seed)`` on any platform with the same numpy stream
version.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping, Sequence

import numpy as np
from scipy.special import expit

from .dag import Dag, parse_dag
from .data import Dataset

__all__ = [
    "Mechanism",
    "Scenario",
    "Sem",
    "SimError",
    "builtin_scenario",
    "population_coefficients",
    "scenario_names",
    "simulate",
    "true_total_effect",
]


class SimError(ValueError):
    pass


@dataclass(frozen=True)
class Mechanism:
    coefficients: Mapping[str, float] = field(default_factory=dict)
    noise: str = "gaussian"  # or "bernoulli"
    sd: float = 1.0
    intercept: float = 0.0

    def __post_init__(self):
        if self.noise not in ("gaussian", "bernoulli"):
            raise SimError(f"unknown noise type {self.noise!r}")
        if self.noise == "gaussian" and self.sd < 0:
            raise SimError("noise sd must be non-negative")
        object.__setattr__(self, "coefficients", dict(self.coefficients))

    def to_dict(self):
        noise = {"type": self.noise}
        if self.noise == "gaussian":
            noise["sd"] = self.sd
        return {"intercept": self.intercept, "coefficients": dict(self.coefficients), "noise": noise}

    @classmethod
    def from_dict(cls, d):
        noise = d.get("noise", {"type": "gaussian", "sd": 1.0})
        return cls(
            coefficients={k: float(v) for k, v in d.get("coefficients", {}).items()},
            noise=noise.get("type", "gaussian"),
            sd=float(noise.get("sd", 1.0)),
            intercept=float(d.get("intercept", 0.0)),
        )


@dataclass(frozen=True, eq=False)
class Sem:
    dag: Dag
    mechanisms: Mapping[str, Mechanism]

    def __post_init__(self):
        missing = [v for v in self.dag.nodes if v not in self.mechanisms]
        if missing:
            raise SimError(f"no mechanism for node(s) {missing}")
        extra = [v for v in self.mechanisms if v not in self.dag.index]
        if extra:
            raise SimError(f"mechanism(s) for unknown node(s) {extra}")
        for v in self.dag.nodes:
            have = set(self.mechanisms[v].coefficients)
            want = set(self.dag.parents[v])
            if have != want:
                raise SimError(
                    f"mechanism for {v!r} uses parents {sorted(have)} but the DAG gives {sorted(want)}"
                )

    @property
    def order(self) -> tuple[str, ...]:
        return self.dag.topological_order()

    def edge_coefficient(self, a: str, b: str) -> float:
        return self.mechanisms[b].coefficients[a]

    def to_dict(self) -> dict:
        return {
            "dag": self.dag.to_source(),
            "mechanisms": {v: self.mechanisms[v].to_dict() for v in self.dag.nodes},
        }

    @classmethod
    def from_dict(cls, d) -> Sem:
        dag = parse_dag(d["dag"])
        return cls(dag, {k: Mechanism.from_dict(m) for k, m in d["mechanisms"].items()})

    @classmethod
    def linear(cls, dag: Dag, coefficients: Mapping[tuple[str, str], float], noise: Mapping[str, str] | None = None) -> Sem:
        """Gaussian(1) noise everywhere unless ``noise`` marks a node bernoulli."""
        noise = noise or {}
        mechs = {}
        for v in dag.nodes:
            coefs = {p: float(coefficients[(p, v)]) for p in dag.parents[v]}
            mechs[v] = Mechanism(coefs, noise.get(v, "gaussian"))
        return cls(dag, mechs)


def simulate(sem: Sem, n: int, seed: int) -> Dataset:
    """Draw ``n`` rows; columns follow the DAG's declaration order."""
    if n < 1:
        raise SimError("n must be at least 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    values: dict[str, np.ndarray] = {}
    for v in sem.order:
        mech = sem.mechanisms[v]
        eta = np.full(n, mech.intercept)
        for p, b in mech.coefficients.items():
            eta = eta + b * values[p]
        if mech.noise == "gaussian":
            values[v] = eta + mech.sd * rng.standard_normal(n)
        else:
            values[v] = (rng.random(n) < expit(eta)).astype(np.float64)
    return Dataset({v: values[v] for v in sem.dag.nodes}, {})


def true_total_effect(sem: Sem, exposure: str | None = None, outcome: str | None = None) -> float:
    """Sum over directed exposure->outcome paths of edge-coefficient products."""
    dag = sem.dag
    x = exposure or dag.exposure
    y = outcome or dag.outcome
    if x is None or y is None:
        raise SimError("exposure and outcome must be annotated or given")
    on_path = (dag.descendants(x) & (dag.ancestors(y) | {y}))
    bern = sorted(v for v in on_path if sem.mechanisms[v].noise == "bernoulli")
    if bern:
        raise SimError(
            f"Bernoulli node(s) {bern} lie on a causal path: no closed-form total effect; "
            "compare against a large simulated sample instead"
        )
    # effect[v] = d E[v] / d x, accumulated in topological order
    effect = {x: 1.0}
    for v in sem.order:
        if v == x or v not in on_path:
            continue
        effect[v] = sum(b * effect.get(p, 0.0) for p, b in sem.mechanisms[v].coefficients.items())
    return float(effect.get(y, 0.0))


def implied_covariance(sem: Sem) -> np.ndarray:
    """Population covariance of all nodes (DAG declaration order).

    Bernoulli nodes are allowed only as roots, where their variance is
    p(1 - p) and they enter children linearly.
    """
    nodes = sem.dag.nodes
    idx = sem.dag.index
    k = len(nodes)
    B = np.zeros((k, k))
    omega = np.zeros(k)
    for v in nodes:
        mech = sem.mechanisms[v]
        for p, b in mech.coefficients.items():
            B[idx[v], idx[p]] = b
        if mech.noise == "gaussian":
            omega[idx[v]] = mech.sd**2
        elif mech.coefficients:
            raise SimError(f"no closed-form covariance: Bernoulli node {v!r} has parents")
        else:
            q = float(expit(mech.intercept))
            omega[idx[v]] = q * (1 - q)
    A = np.linalg.inv(np.eye(k) - B)
    return A @ np.diag(omega) @ A.T


def population_coefficients(sem: Sem, outcome: str, regressors: Sequence[str]) -> dict[str, float]:
    """Large-sample OLS slopes of ``outcome`` on ``regressors`` (with intercept)."""
    cov = implied_covariance(sem)
    idx = sem.dag.index
    r = [idx[v] for v in regressors]
    beta = np.linalg.solve(cov[np.ix_(r, r)], cov[r, idx[outcome]])
    return {v: float(b) for v, b in zip(regressors, beta)}


# --------------------------------------------------------------------------
# built-in scenarios


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    sem: Sem
    true_effect: float
    # label -> (regressors besides the exposure, analytic exposure coefficient)
    comparisons: Mapping[str, tuple[tuple[str, ...], float]]
    description: str = ""

    @property
    def exposure(self) -> str:
        return self.sem.dag.exposure

    @property
    def outcome(self) -> str:
        return self.sem.dag.outcome

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "exposure": self.exposure,
            "outcome": self.outcome,
            "true_total_effect": self.true_effect,
            "comparisons": {
                label: {"adjusted_for": list(adj), "exposure_coefficient": value}
                for label, (adj, value) in self.comparisons.items()
            },
            "sem": self.sem.to_dict(),
        }


def _scenario(name, description, sem, comparisons):
    x, y = sem.dag.require_roles()
    table = {}
    for label, adj in comparisons.items():
        table[label] = (tuple(adj), population_coefficients(sem, y, (x,) + tuple(adj))[x])
    return Scenario(name, sem, true_total_effect(sem), table, description)


def _confounding():
    dag = parse_dag("dag { X [exposure] Y [outcome] C -> X C -> Y X -> Y }")
    sem = Sem.linear(dag, {("C", "X"): 0.5, ("C", "Y"): 0.8, ("X", "Y"): 0.3})
    return _scenario(
        "confounding",
        "C is a common cause of X and Y; leaving it out inflates the X coefficient.",
        sem,
        {"unadjusted": (), "adjusted for C": ("C",)},
    )


def _collider():
    dag = parse_dag("dag { X [exposure] Y [outcome] X -> Y U -> Y X -> S U -> S }")
    sem = Sem.linear(dag, {("X", "Y"): 0.3, ("U", "Y"): 1.0, ("X", "S"): 1.0, ("U", "S"): 1.0})
    return _scenario(
        "collider",
        "S is caused by X and by U, which also causes Y; conditioning on S opens X -> S <- U -> Y.",
        sem,
        {"unconditioned": (), "conditioned on S": ("S",)},
    )


def _mediator():
    dag = parse_dag("dag { X [exposure] Y [outcome] X -> M -> Y X -> Y }")
    sem = Sem.linear(dag, {("X", "M"): 0.5, ("M", "Y"): 0.4, ("X", "Y"): 0.3})
    return _scenario(
        "mediator",
        "M carries part of the effect of X; adjusting for M leaves only the direct component.",
        sem,
        {"M excluded": (), "adjusted for M": ("M",)},
    )


FIGURE1_COEFFICIENTS = {
    ("Age", "Chemotherapy"): -0.3,
    ("Age", "VTE"): 0.2,
    ("Sex", "Chemotherapy"): 0.2,
    ("Sex", "VTE"): 0.3,
    ("TumourSite", "Chemotherapy"): 0.4,
    ("TumourSite", "VTE"): 0.3,
    ("TumourSize", "Chemotherapy"): 0.5,
    ("TumourSize", "VTE"): 0.4,
    ("Chemotherapy", "PlateletCount"): 0.6,
    ("PlateletCount", "VTE"): 0.5,
    ("Chemotherapy", "VTE"): 0.25,
}


def figure1_dag() -> Dag:
    return parse_dag(resources.files("glmcausal").joinpath("fixtures/fig1.dag").read_text(encoding="utf-8"))


def _figure1():
    dag = figure1_dag()
    sem = Sem.linear(dag, FIGURE1_COEFFICIENTS, noise={"Sex": "bernoulli"})
    confounders = ("Age", "Sex", "TumourSite", "TumourSize")
    return _scenario(
        "figure1",
        "Chemotherapy and VTE with four confounders and platelet count as a mediator. "
        "Coefficients are illustrative fixture values; Sex is a fair coin.",
        sem,
        {
            "unadjusted": (),
            "adjusted for confounders": confounders,
            "adjusted for confounders and PlateletCount": confounders + ("PlateletCount",),
        },
    )


def _selection():
    dag = parse_dag("dag { x1 [exposure] y [outcome] x1 -> y x2 x3 x4 x5 x6 }")
    sem = Sem.linear(dag, {("x1", "y"): 2.0})
    return _scenario(
        "selection",
        "y = 2*x1 + noise with five unrelated covariates; a covariate-selection benchmark.",
        sem,
        {"x1 only": ()},
    )


_BUILTIN = {
    "confounding": _confounding,
    "collider": _collider,
    "mediator": _mediator,
    "figure1": _figure1,
    "selection": _selection,
}


def scenario_names() -> tuple[str, ...]:
    return tuple(_BUILTIN)


def builtin_scenario(name: str) -> Scenario:
    try:
        return _BUILTIN[name]()
    except KeyError:
        raise SimError(f"unknown scenario {name!r}; choose from {', '.join(_BUILTIN)}") from None


def load_sem(path) -> Sem:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return Sem.from_dict(doc.get("sem", doc))
