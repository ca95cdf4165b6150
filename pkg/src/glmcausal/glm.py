"""Generalised linear models fitted by iteratively reweighted least squares.

Three family/link pairs are supported: gaussian/identity, binomial/logit
and poisson/log. Each weighted least-squares step is solved through a QR
factorisation of the weighted design rather than the normal equations.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import expit, gammaln, log_expit, xlogy

from .data import Dataset

__all__ = [
    "BINOMIAL",
    "GAUSSIAN",
    "POISSON",
    "ConvergenceError",
    "Design",
    "Family",
    "FittedGlm",
    "GlmError",
    "ModelSpec",
    "RankDeficientError",
    "Term",
    "adjusted_r2",
    "aic",
    "bic",
    "build_design",
    "fit",
    "fit_irls",
    "get_family",
    "loglik",
    "predict",
    "score",
]

RANK_TOL = 1e-10
INTERCEPT = "(Intercept)"
_EPS = float(np.finfo(np.float64).eps)


class GlmError(ValueError):
    pass


class RankDeficientError(GlmError):
    def __init__(self, column: str):
        self.column = column
        super().__init__(f"design matrix is rank deficient: column {column!r} is collinear with earlier columns")


class ConvergenceError(GlmError):
    pass


# --------------------------------------------------------------------------
# families


@dataclass(frozen=True)
class Family:
    name: str
    link: str

    def __str__(self):
        return self.name

    def linkinv(self, eta):
        if self.link == "identity":
            return eta
        if self.link == "logit":
            return expit(eta)
        return np.exp(eta)

    def linkfun(self, mu):
        if self.link == "identity":
            return mu
        if self.link == "logit":
            return np.log(mu) - np.log1p(-mu)
        return np.log(mu)

    def mu_eta(self, eta, mu):
        """d mu / d eta, floored at machine epsilon so separated fits stay finite."""
        if self.link == "identity":
            return np.ones_like(eta)
        if self.link == "logit":
            return np.maximum(mu * (1.0 - mu), _EPS)
        return np.maximum(mu, _EPS)

    def variance(self, mu):
        if self.link == "identity":
            return np.ones_like(mu)
        if self.link == "logit":
            return np.maximum(mu * (1.0 - mu), _EPS)
        return np.maximum(mu, _EPS)

    def start_mu(self, y):
        if self.link == "logit":
            return (y + 0.5) / 2.0
        return y + 0.1

    def check_response(self, y):
        if not np.all(np.isfinite(y)):
            raise GlmError("response contains non-finite values")
        if self.link == "logit" and not np.all((y == 0) | (y == 1)):
            raise GlmError("binomial outcome must contain only 0 and 1")
        if self.link == "log" and not np.all((y >= 0) & (y == np.floor(y))):
            raise GlmError("poisson outcome must contain non-negative integers")

    def deviance(self, y, eta, mu):
        if self.link == "identity":
            r = y - mu
            return float(r @ r)
        if self.link == "logit":
            return -2.0 * self._binomial_ll(y, eta)
        return 2.0 * float(np.sum(xlogy(y, y) - xlogy(y, mu) - (y - mu)))

    @staticmethod
    def _binomial_ll(y, eta):
        return float(np.sum(y * log_expit(eta) + (1.0 - y) * log_expit(-eta)))

    def loglik(self, y, eta, mu) -> float:
        n = len(y)
        if self.link == "identity":
            # profile likelihood, sigma^2 = deviance / n
            dev = self.deviance(y, eta, mu)
            if dev <= 0.0:
                return math.inf
            return -0.5 * n * (math.log(2.0 * math.pi * dev / n) + 1.0)
        if self.link == "logit":
            return self._binomial_ll(y, eta)
        return float(np.sum(y * eta - mu - gammaln(y + 1.0)))


GAUSSIAN = Family("gaussian", "identity")
BINOMIAL = Family("binomial", "logit")
POISSON = Family("poisson", "log")

_FAMILIES = {
    "gaussian": GAUSSIAN,
    "gaussian-identity": GAUSSIAN,
    "binomial": BINOMIAL,
    "binomial-logit": BINOMIAL,
    "poisson": POISSON,
    "poisson-log": POISSON,
}


def get_family(family: str | Family) -> Family:
    if isinstance(family, Family):
        return family
    try:
        return _FAMILIES[family.lower()]
    except KeyError:
        raise GlmError(f"unknown family {family!r}; expected gaussian, binomial or poisson") from None


# --------------------------------------------------------------------------
# model specification and design matrices


TRANSFORMS = ("identity", "log", "standardize")
_TERM_RE = re.compile(r"^(log|std)\((.+)\)$")


@dataclass(frozen=True)
class Term:
    column: str
    transform: str = "identity"

    def __post_init__(self):
        if self.transform not in TRANSFORMS:
            raise GlmError(f"unknown transform {self.transform!r}")

    @classmethod
    def parse(cls, text: str) -> Term:
        """``x`` -> identity, ``log(x)`` -> log, ``std(x)`` -> standardize."""
        text = text.strip()
        m = _TERM_RE.match(text)
        if m is None:
            return cls(text)
        return cls(m.group(2).strip(), "log" if m.group(1) == "log" else "standardize")

    def __str__(self):
        if self.transform == "log":
            return f"log({self.column})"
        if self.transform == "standardize":
            return f"std({self.column})"
        return self.column


def as_terms(items: Sequence[Term | str]) -> tuple[Term, ...]:
    return tuple(t if isinstance(t, Term) else Term.parse(t) for t in items)


@dataclass(frozen=True)
class ModelSpec:
    outcome: str
    terms: tuple[Term, ...] = ()
    family: str = "gaussian"

    def __post_init__(self):
        object.__setattr__(self, "terms", as_terms(self.terms))
        object.__setattr__(self, "family", get_family(self.family).name)
        if any(t.column == self.outcome for t in self.terms):
            raise GlmError(f"outcome {self.outcome!r} also appears among the terms")
        if len(set(self.terms)) != len(self.terms):
            raise GlmError("duplicate terms in model specification")

    def with_terms(self, terms: Sequence[Term | str]) -> ModelSpec:
        return ModelSpec(self.outcome, tuple(terms), self.family)

    def formula(self) -> str:
        rhs = " + ".join(str(t) for t in self.terms) or "1"
        return f"{self.outcome} ~ {rhs}"


@dataclass(frozen=True)
class TermEncoding:
    """How a term maps to design columns; reused verbatim at prediction time."""

    term: Term
    names: tuple[str, ...]
    levels: tuple[str, ...] = ()
    center: float = 0.0
    scale: float = 1.0

    def apply(self, data: Dataset) -> np.ndarray:
        col = data[self.term.column]
        if self.levels:
            if data.is_numeric(self.term.column):
                raise GlmError(f"column {self.term.column!r} was categorical when the model was fitted")
            unseen = sorted(set(col.tolist()) - set(self.levels))
            if unseen:
                raise GlmError(f"unseen level(s) {unseen} in categorical column {self.term.column!r}")
            out = np.empty((len(col), len(self.levels) - 1))
            for j, lv in enumerate(self.levels[1:]):
                out[:, j] = col == lv
            return out
        if not data.is_numeric(self.term.column):
            raise GlmError(f"column {self.term.column!r} is categorical; transform {self.term.transform!r} needs numbers")
        if self.term.transform == "log":
            if np.any(col <= 0):
                raise GlmError(f"log transform of non-positive values in column {self.term.column!r}")
            return np.log(col)[:, None]
        return ((col - self.center) / self.scale)[:, None]


def encode_term(data: Dataset, term: Term) -> TermEncoding:
    data.require(term.column)
    name = term.column
    if not data.is_numeric(name):
        if term.transform != "identity":
            raise GlmError(f"transform {term.transform!r} is not defined for categorical column {name!r}")
        present = set(data[name].tolist())
        levels = tuple(lv for lv in data.levels[name] if lv in present)
        return TermEncoding(term, tuple(f"{name}={lv}" for lv in levels[1:]), levels=levels)
    if term.transform == "standardize":
        col = data[name]
        sd = float(col.std())
        if sd == 0.0:
            raise GlmError(f"cannot standardize constant column {name!r}")
        return TermEncoding(term, (str(term),), center=float(col.mean()), scale=sd)
    return TermEncoding(term, (str(term),))


@dataclass(frozen=True, eq=False)
class Design:
    X: np.ndarray
    y: np.ndarray | None
    names: tuple[str, ...]
    encodings: tuple[TermEncoding, ...]


def build_design(
    data: Dataset,
    spec: ModelSpec,
    encodings: Sequence[TermEncoding] | None = None,
    with_response: bool = True,
) -> Design:
    """Intercept column, then one block per term in spec order."""
    family = get_family(spec.family)
    if encodings is None:
        encodings = tuple(encode_term(data, t) for t in spec.terms)
    blocks = [np.ones((data.n, 1))]
    names = [INTERCEPT]
    for enc in encodings:
        blocks.append(enc.apply(data))
        names.extend(enc.names)
    X = np.hstack(blocks)
    y = None
    if with_response:
        data.require(spec.outcome)
        if not data.is_numeric(spec.outcome):
            raise GlmError(f"outcome column {spec.outcome!r} is not numeric")
        y = np.array(data[spec.outcome], dtype=np.float64)
        family.check_response(y)
    return Design(X, y, tuple(names), tuple(encodings))


# --------------------------------------------------------------------------
# fitting


@dataclass(frozen=True, eq=False)
class FittedGlm:
    coef: np.ndarray
    names: tuple[str, ...]
    family: Family
    loglik: float
    deviance: float
    null_deviance: float
    cov: np.ndarray
    n: int
    p: int
    iterations: int
    step_norm: float
    fitted: np.ndarray
    deviance_history: tuple[float, ...] = ()
    warnings: tuple[str, ...] = ()
    spec: ModelSpec | None = None
    encodings: tuple[TermEncoding, ...] = field(default=(), repr=False)

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))

    @property
    def n_params(self) -> int:
        """Parameters counted by AIC/BIC (gaussian adds the variance)."""
        return self.p + (1 if self.family is GAUSSIAN else 0)

    def coefficient(self, name: str) -> float:
        return float(self.coef[self.names.index(name)])

    def std_error(self, name: str) -> float:
        return float(self.se[self.names.index(name)])

    def as_dict(self) -> dict[str, float]:
        return {k: float(v) for k, v in zip(self.names, self.coef)}


def _wls(X, z, w, names):
    sw = np.sqrt(w)
    Q, R = np.linalg.qr(X * sw[:, None])
    d = np.abs(np.diag(R))
    bad = np.flatnonzero(d <= RANK_TOL * d.max())
    if bad.size:
        raise RankDeficientError(names[bad[0]])
    beta = solve_triangular(R, Q.T @ (sw * z))
    return beta, R


def _converged(dev, dev_old, tol):
    return abs(dev - dev_old) / (abs(dev) + 0.1) < tol


def fit_irls(
    X,
    y,
    family: str | Family = GAUSSIAN,
    names: Sequence[str] | None = None,
    max_iter: int = 100,
    tol: float = 1e-8,
) -> FittedGlm:
    """Maximum-likelihood GLM fit by IRLS.

    Converges when the relative change in deviance drops below ``tol``.
    A deviance increase triggers step halving. The gaussian family is a
    single weighted least-squares solve.
    """
    family = get_family(family)
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise GlmError("design and response have incompatible shapes")
    n, p = X.shape
    names = tuple(names) if names is not None else tuple(f"x{j}" for j in range(p))
    if n < p:
        raise GlmError(f"more coefficients ({p}) than observations ({n})")
    family.check_response(y)

    if family is GAUSSIAN:
        beta, _ = _wls(X, y, np.ones(n), names)
        eta = X @ beta
        mu = eta
        dev = family.deviance(y, eta, mu)
        history = [dev]
        iterations, step = 1, float(np.linalg.norm(beta))
    else:
        mu = family.start_mu(y)
        eta = family.linkfun(mu)
        beta = None
        dev = family.deviance(y, eta, mu)
        history = []
        for iterations in range(1, max_iter + 1):
            d = family.mu_eta(eta, mu)
            w = np.maximum(d * d / family.variance(mu), 1e-300)
            z = eta + (y - mu) / d
            new_beta, _ = _wls(X, z, w, names)
            new_eta = X @ new_beta
            new_mu = family.linkinv(new_eta)
            new_dev = family.deviance(y, new_eta, new_mu)
            if beta is not None:
                halvings = 0
                while not (np.isfinite(new_dev) and new_dev <= dev * (1 + 1e-12)):
                    if halvings == 40:
                        raise ConvergenceError("step halving failed to reduce the deviance")
                    new_beta = 0.5 * (beta + new_beta)
                    new_eta = X @ new_beta
                    new_mu = family.linkinv(new_eta)
                    new_dev = family.deviance(y, new_eta, new_mu)
                    halvings += 1
            step = float(np.linalg.norm(new_beta - beta)) if beta is not None else float(np.linalg.norm(new_beta))
            done = beta is not None and _converged(new_dev, dev, tol)
            beta, eta, mu, dev = new_beta, new_eta, new_mu, new_dev
            history.append(dev)
            if done:
                break
        else:
            raise ConvergenceError(f"IRLS did not converge in {max_iter} iterations")

    # covariance from the weights at the optimum
    d = family.mu_eta(eta, mu)
    w = np.maximum(d * d / family.variance(mu), 1e-300)
    _, R = _wls(X, np.zeros(n), w, names)
    Rinv = solve_triangular(R, np.eye(p))
    cov = Rinv @ Rinv.T
    if family is GAUSSIAN:
        cov = cov * (dev / (n - p)) if n > p else np.full((p, p), np.nan)

    notes = []
    if family is BINOMIAL and np.any((mu < 1e-10) | (mu > 1 - 1e-10)):
        notes.append("quasi-separation: fitted probabilities within 1e-10 of 0 or 1")

    ybar = np.full(n, y.mean())
    with np.errstate(divide="ignore"):
        null_dev = family.deviance(y, family.linkfun(ybar), ybar)

    return FittedGlm(
        coef=beta,
        names=names,
        family=family,
        loglik=family.loglik(y, eta, mu),
        deviance=dev,
        null_deviance=null_dev,
        cov=cov,
        n=n,
        p=p,
        iterations=iterations,
        step_norm=step,
        fitted=mu,
        deviance_history=tuple(history),
        warnings=tuple(notes),
    )


def fit(data: Dataset, spec: ModelSpec, **kwargs) -> FittedGlm:
    """Build the design for ``spec`` and fit it; the result can ``predict``."""
    design = build_design(data, spec)
    result = fit_irls(design.X, design.y, spec.family, design.names, **kwargs)
    object.__setattr__(result, "spec", spec)
    object.__setattr__(result, "encodings", design.encodings)
    return result


def predict(result: FittedGlm, newdata: Dataset) -> np.ndarray:
    """Expected outcome on the mean scale for each row of ``newdata``."""
    if result.spec is None:
        raise GlmError("fit has no model specification; use glm.fit to predict from data")
    design = build_design(newdata, result.spec, result.encodings, with_response=False)
    return result.family.linkinv(design.X @ result.coef)


def loglik(beta, X, y, family: str | Family) -> float:
    family = get_family(family)
    eta = np.asarray(X) @ np.asarray(beta, dtype=np.float64)
    return family.loglik(np.asarray(y, dtype=np.float64), eta, family.linkinv(eta))


def score(beta, X, y, family: str | Family) -> np.ndarray:
    """Gradient of :func:`loglik` with respect to the coefficients."""
    family = get_family(family)
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    eta = X @ np.asarray(beta, dtype=np.float64)
    mu = family.linkinv(eta)
    if family is GAUSSIAN:
        r = y - mu
        return len(y) * (X.T @ r) / float(r @ r)
    return X.T @ ((y - mu) * family.mu_eta(eta, mu) / family.variance(mu))


# --------------------------------------------------------------------------
# criteria


def aic(result: FittedGlm) -> float:
    return 2.0 * result.n_params - 2.0 * result.loglik


def bic(result: FittedGlm) -> float:
    return result.n_params * math.log(result.n) - 2.0 * result.loglik


def r_squared(result: FittedGlm) -> float:
    if result.family is not GAUSSIAN:
        raise GlmError("R^2 is only defined here for the gaussian family")
    if result.null_deviance == 0.0:
        return math.nan
    return 1.0 - result.deviance / result.null_deviance


def adjusted_r2(result: FittedGlm) -> float:
    r2 = r_squared(result)
    return 1.0 - (1.0 - r2) * (result.n - 1) / (result.n - result.p)


CRITERIA = {"aic": aic, "bic": bic}
