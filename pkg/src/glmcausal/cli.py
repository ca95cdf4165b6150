"""Command-line front end.

    glmcausal dag {paths,adjust,independencies,classify} --dag FILE
    glmcausal fit --data CSV --outcome COL --select METHOD
    glmcausal effect --dag FILE --data CSV
    glmcausal simulate --scenario NAME --n N --out CSV

Exit codes: 0 success, 2 bad input (parse, data or model errors),
3 no valid adjustment set / invalid set in ``dag adjust``, 4 an explicit
``effect --set`` that fails validation. Reports go to standard output (or
``--output``); errors go to standard error.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
from pathlib import Path
from typing import Sequence

from . import __version__, causal, dag as dagmod, glm, sim
from .data import DataError, read_csv, write_csv
from .predict import evaluation, lasso, selection

DEFAULT_SEED = 20200101
EXIT_OK, EXIT_INPUT, EXIT_NO_SET, EXIT_BAD_SET = 0, 2, 3, 4


class CliExit(Exception):
    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


def default_seed() -> int:
    raw = os.environ.get("GLMCAUSAL_SEED")
    if raw is None or raw == "":
        return DEFAULT_SEED
    try:
        return int(raw)
    except ValueError:
        raise CliExit(EXIT_INPUT, f"GLMCAUSAL_SEED must be an integer, got {raw!r}") from None


def _split(text: str | None) -> list[str]:
    if text is None:
        return []
    return [s.strip() for s in text.split(",") if s.strip()]


def _dump(doc) -> str:
    return json.dumps(doc, indent=2) + "\n"


def _fmt(v) -> str:
    return f"{v:.6g}" if isinstance(v, float) else str(v)


def _braces(names) -> str:
    return "{" + ", ".join(names) + "}"


def _load_dag(args) -> dagmod.Dag:
    try:
        text = Path(args.dag).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliExit(EXIT_INPUT, f"cannot read DAG file: {exc}") from None
    g = dagmod.parse_dag(text)
    if getattr(args, "exposure", None) or getattr(args, "outcome", None):
        g = g.with_roles(args.exposure, args.outcome)
    return g


def _load_data(path):
    try:
        return read_csv(path)
    except OSError as exc:
        raise CliExit(EXIT_INPUT, f"cannot read data file: {exc}") from None


# --------------------------------------------------------------------------
# dag


def _path_kind(path: dagmod.Path) -> str:
    if path.is_directed():
        return "causal"
    return "collider" if path.has_collider() else "confounding"


def _verdict_dict(v: dagmod.AdjustmentVerdict) -> dict:
    return {
        "set": list(v.adjustment_set),
        "valid": v.valid,
        "condition1_blocked_confounding": v.condition1_blocked_confounding,
        "condition2_no_causal_blocked": v.condition2_no_causal_blocked,
        "condition3_no_collider_opened": v.condition3_no_collider_opened,
        "offending_paths": [{"condition": c, "path": list(p.nodes), "text": str(p)} for c, p in v.offending_paths],
        "notes": list(v.notes),
    }


def cmd_dag(args) -> tuple[str, int, str]:
    g = _load_dag(args)
    action = args.action
    doc: dict = {"command": f"dag {action}", "dag_fingerprint": g.fingerprint()}
    text: list[str] = []
    code = EXIT_OK
    message = ""

    if action == "paths":
        a = args.source or g.exposure
        b = args.target or g.outcome
        if a is None or b is None:
            raise CliExit(EXIT_INPUT, "give --from/--to or annotate exposure and outcome")
        paths = dagmod.enumerate_paths(g, a, b, args.max_length)
        doc.update({
            "from": a,
            "to": b,
            "paths": [
                {
                    "nodes": list(p.nodes),
                    "text": str(p),
                    "orientations": [o.value for o in p.orientations],
                    "kind": _path_kind(p),
                }
                for p in paths
            ],
        })
        text.append(f"{len(paths)} path(s) between {a} and {b}:")
        text.extend(f"  [{_path_kind(p)}] {p}" for p in paths)

    elif action == "adjust":
        x, y = g.require_roles()
        sets = dagmod.minimal_adjustment_sets(g)
        doc.update({"exposure": x, "outcome": y, "minimal_sets": [list(s) for s in sets], "verdict": None})
        if sets:
            text.append(f"minimal adjustment set(s) for the effect of {x} on {y}:")
            text.extend(f"  {_braces(s)}" for s in sets)
        else:
            text.append(f"no valid adjustment set exists for the effect of {x} on {y}")
            code = EXIT_NO_SET
            message = f"no valid adjustment set for {x} -> {y}"
        if args.set is not None:
            verdict = dagmod.check_adjustment(g, _split(args.set))
            doc["verdict"] = _verdict_dict(verdict)
            text.append("")
            text.append(f"verdict for {_braces(verdict.adjustment_set)}: {'valid' if verdict.valid else 'invalid'}")
            for c in (1, 2, 3):
                ok = c not in verdict.failed_conditions
                text.append(f"  condition {c} ({dagmod.CONDITION_TEXT[c]}): {'ok' if ok else 'FAILS'}")
            for c, p in verdict.offending_paths:
                text.append(f"  condition {c} witness: {p}")
            text.extend(f"  note: {n}" for n in verdict.notes)
            if not verdict.valid:
                code = EXIT_NO_SET
                failed = ", ".join(str(c) for c in verdict.failed_conditions)
                message = f"adjustment set {_braces(verdict.adjustment_set)} is not valid (condition {failed})"

    elif action == "independencies":
        triples = dagmod.implied_independencies(g, args.max_set_size)
        doc["independencies"] = [{"x": a, "y": b, "z": list(z)} for a, b, z in triples]
        text.extend(f"({a}, {b} | {', '.join(z)})" for a, b, z in triples)
        if not triples:
            text.append("(no implied independencies)")

    elif action == "classify":
        x, y = g.require_roles()
        roles = {v: sorted(r.value for r in dagmod.classify_node(g, v)) for v in g.nodes}
        doc.update({"exposure": x, "outcome": y, "roles": roles})
        width = max(len(v) for v in g.nodes)
        text.extend(f"{v.ljust(width)}  {', '.join(r)}" for v, r in roles.items())

    if args.format == "json":
        return _dump(doc), code, message
    return "\n".join(text) + "\n", code, message


# --------------------------------------------------------------------------
# fit


def _fit_lasso(args, data, candidates, seed) -> tuple[dict, list[str]]:
    path = lasso.lasso_path(data, args.outcome, candidates, family=args.family)
    k = args.cv or 5
    cv = lasso.lasso_cv(data, args.outcome, candidates, k=k, seed=seed, lambdas=path.lambdas, one_se=args.one_se)
    best = cv.best_index
    active = path.active_sets
    coefs = {"(Intercept)": float(path.intercept[best])}
    coefs.update({c: float(b) for c, b in zip(path.columns, path.coef[best]) if b != 0.0})
    doc = {
        "method": "lasso",
        "lambda_max": path.lambda_max,
        "lambdas": [float(v) for v in path.lambdas],
        "active_counts": [len(a) for a in active],
        "cv": {
            "k": k,
            "seed": seed,
            "rule": "one-se" if args.one_se else "min",
            "mean_rmse": [float(v) for v in cv.mean_rmse],
            "best_lambda": cv.best_lambda,
            "best_rmse": float(cv.mean_rmse[best]),
        },
        "active_set": list(active[best]),
        "coefficients": coefs,
    }
    text = [
        f"lasso path: {len(path.lambdas)} lambdas from {_fmt(float(path.lambdas[0]))} "
        f"to {_fmt(float(path.lambdas[-1]))} (lambda_max {_fmt(path.lambda_max)})",
        f"CV-best lambda ({k}-fold, seed {seed}, {'one-se' if args.one_se else 'min'} rule): "
        f"{_fmt(cv.best_lambda)}, mean rmse {_fmt(float(cv.mean_rmse[best]))}",
        f"active set at best lambda: {_braces(active[best])}",
        "coefficients (original scale):",
    ]
    text.extend(f"  {name}: {_fmt(v)}" for name, v in coefs.items())
    return doc, text


def cmd_fit(args) -> tuple[str, int, str]:
    data = _load_data(args.data)
    if args.outcome not in data:
        raise CliExit(EXIT_INPUT, f"outcome column {args.outcome!r} not found in {args.data}")
    seed = args.seed if args.seed is not None else default_seed()
    candidates = _split(args.candidates) or [c for c in data.names if c != args.outcome]
    for c in candidates:
        col = glm.Term.parse(c).column
        if col not in data:
            raise CliExit(EXIT_INPUT, f"candidate column {col!r} not found in {args.data}")

    doc: dict = {"command": "fit", "rows": data.n, "outcome": args.outcome, "family": glm.get_family(args.family).name,
                 "candidates": candidates}
    if args.select == "lasso":
        body, text = _fit_lasso(args, data, candidates, seed)
        doc["selection"] = body
    else:
        if args.select == "best-subsets":
            res = selection.best_subsets(data, args.outcome, candidates, args.family, args.criterion, jobs=args.jobs)
        elif args.select in ("forward", "backward"):
            res = selection.stepwise(data, args.outcome, candidates, args.family, args.select, args.criterion, jobs=args.jobs)
        else:
            res = selection.lasso_then_backward(
                data, args.outcome, candidates, args.family, args.criterion,
                k=args.cv or 5, seed=seed, one_se=args.one_se, jobs=args.jobs,
            )
        doc["selection"] = res.to_dict()
        fitted = res.fit
        text = [
            f"{res.method} selection by {res.criterion.upper()}: {res.spec.formula()}",
            f"  {res.criterion.upper()} = {_fmt(res.value)} ({len(res.trace)} candidate fits in trace)",
            "  coefficients:",
        ]
        text.extend(f"    {k}: {_fmt(v)}" for k, v in fitted.as_dict().items())
        steps = {}
        for e in res.trace:
            steps.setdefault((e.stage, e.step), []).append(e)
        text.append("  trace summary:")
        for (stage, step), entries in steps.items():
            vals = [e.value for e in entries if e.value is not None]
            best = min(vals) if vals else float("nan")
            text.append(f"    {stage} step {step}: {len(entries)} model(s), best {_fmt(best)}")
        for w in res.warnings:
            text.append(f"  warning: {w}")

        evals = []
        if fitted.family is glm.GAUSSIAN:
            evals.append(evaluation.evaluate(fitted, metric="adjusted-r2"))
            evals.append(evaluation.evaluate(fitted, data, metric="rmse"))
        if args.cv:
            metric = args.metric or ("auc" if fitted.family is glm.BINOMIAL else "rmse")
            evals.append(evaluation.cross_validate(data, res.spec, k=args.cv, seed=seed, metric=metric))
        doc["evaluation"] = [e.to_dict() for e in evals]
        if evals:
            text.append("  evaluation:")
            for e in evals:
                where = f"{e.k}-fold CV, seed {e.seed}" if e.source == "cv" else e.source
                text.append(f"    {e.metric} ({where}): {_fmt(e.value)}")

    if args.format == "json":
        return _dump(doc), EXIT_OK, ""
    return "\n".join(text) + "\n", EXIT_OK, ""


# --------------------------------------------------------------------------
# effect


def cmd_effect(args) -> tuple[str, int, str]:
    g = _load_dag(args)
    data = _load_data(args.data)
    override = _split(args.set) if args.set is not None else None
    report = causal.estimate_total_effect(g, data, args.family, override)
    if args.list_sets:
        sets = [list(s) for s in dagmod.minimal_adjustment_sets(g)]
    if args.format == "json":
        doc = report.to_dict()
        if args.list_sets:
            doc = {**doc, "minimal_sets": sets}
        return _dump(doc), EXIT_OK, ""
    out = causal.render_effect_report(report)
    if args.list_sets:
        out += "\nminimal adjustment sets:\n" + "".join(f"  {_braces(s)}\n" for s in sets)
    return out, EXIT_OK, ""


# --------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> tuple[str, int, str]:
    seed = args.seed if args.seed is not None else default_seed()
    if args.scenario:
        try:
            scen = sim.builtin_scenario(args.scenario)
        except sim.SimError as exc:
            raise CliExit(EXIT_INPUT, str(exc)) from None
        sem, name = scen.sem, scen.name
        comparisons = scen.comparisons
    else:
        try:
            sem = sim.load_sem(args.sem)
        except OSError as exc:
            raise CliExit(EXIT_INPUT, f"cannot read SEM file: {exc}") from None
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise CliExit(EXIT_INPUT, f"malformed SEM file: {exc}") from None
        name = Path(args.sem).stem
        comparisons = {}
    data = sim.simulate(sem, args.n, seed)
    try:
        true = sim.true_total_effect(sem) if sem.dag.exposure and sem.dag.outcome else None
    except sim.SimError:
        true = None

    if args.out is None:
        buf = io.StringIO()
        write_csv(data, buf)
        return buf.getvalue(), EXIT_OK, ""
    write_csv(data, args.out)

    doc = {
        "command": "simulate",
        "scenario": name,
        "n": args.n,
        "seed": seed,
        "out": str(args.out),
        "columns": list(data.names),
        "exposure": sem.dag.exposure,
        "outcome": sem.dag.outcome,
        "true_total_effect": true,
        "comparisons": {
            label: {"adjusted_for": list(adj), "exposure_coefficient": value}
            for label, (adj, value) in comparisons.items()
        },
    }
    if args.format == "json":
        return _dump(doc), EXIT_OK, ""
    text = [f"wrote {args.n} rows ({', '.join(data.names)}) to {args.out} [scenario {name}, seed {seed}]"]
    if true is not None:
        text.append(f"true total effect of {sem.dag.exposure} on {sem.dag.outcome}: {_fmt(true)}")
    for label, (adj, value) in comparisons.items():
        text.append(f"  large-sample {sem.dag.exposure} coefficient, {label}: {_fmt(value)}")
    return "\n".join(text) + "\n", EXIT_OK, ""


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="glmcausal", description="GLMs for prediction and for causal effect estimation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--format", choices=("text", "json"), default="text")
        sp.add_argument("--output", help="write the report here instead of standard output")

    d = sub.add_parser("dag", help="inspect a causal DAG")
    d.add_argument("action", choices=("paths", "adjust", "independencies", "classify"))
    d.add_argument("--dag", required=True)
    d.add_argument("--exposure")
    d.add_argument("--outcome")
    d.add_argument("--set", help="comma-separated adjustment set to validate (adjust)")
    d.add_argument("--from", dest="source", help="path start (paths; default exposure)")
    d.add_argument("--to", dest="target", help="path end (paths; default outcome)")
    d.add_argument("--max-length", type=int)
    d.add_argument("--max-set-size", type=int)
    common(d)
    d.set_defaults(func=cmd_dag)

    f = sub.add_parser("fit", help="prediction workflow: select and evaluate a GLM")
    f.add_argument("--data", required=True)
    f.add_argument("--outcome", required=True)
    f.add_argument("--candidates", help="comma-separated terms, e.g. x1,log(x2),std(x3); default all other columns")
    f.add_argument("--family", default="gaussian", choices=("gaussian", "binomial", "poisson"))
    f.add_argument("--select", default="backward",
                   choices=("best-subsets", "forward", "backward", "lasso", "lasso-backward"))
    f.add_argument("--criterion", default="bic", choices=("aic", "bic"))
    f.add_argument("--cv", type=int, help="k for k-fold cross-validation")
    f.add_argument("--metric", choices=("rmse", "auc"))
    f.add_argument("--seed", type=int)
    f.add_argument("--one-se", action="store_true", help="one-standard-error rule for the lasso lambda")
    f.add_argument("--jobs", type=int, default=1)
    common(f)
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("effect", help="causal workflow: total effect of the exposure")
    e.add_argument("--dag", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--family", default="gaussian", choices=("gaussian", "binomial", "poisson"))
    e.add_argument("--set", help="comma-separated adjustment set (validated before fitting)")
    e.add_argument("--exposure")
    e.add_argument("--outcome")
    e.add_argument("--list-sets", action="store_true")
    common(e)
    e.set_defaults(func=cmd_effect)

    s = sub.add_parser("simulate", help="simulate data from a structural equation model")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", help=f"built-in scenario: {', '.join(sim.scenario_names())}")
    src.add_argument("--sem", help="SEM definition in JSON")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", help="CSV destination (default: CSV on standard output)")
    common(s)
    s.set_defaults(func=cmd_simulate)
    return p


_INPUT_ERRORS = (
    dagmod.DagError,
    DataError,
    glm.GlmError,
    sim.SimError,
    selection.SelectionError,
    evaluation.EvalError,
    lasso.LassoError,
    causal.CausalError,
)


def run(argv: Sequence[str] | None = None) -> tuple[int, str, str]:
    """Run the CLI; returns ``(exit code, stdout text, stderr text)``."""
    args = build_parser().parse_args(argv)
    try:
        out, code, message = args.func(args)
    except CliExit as exc:
        return exc.code, "", f"error: {exc}\n"
    except causal.InvalidAdjustmentError as exc:
        return EXIT_BAD_SET, "", f"error: {exc}\n"
    except causal.NoValidAdjustmentError as exc:
        return EXIT_NO_SET, "", f"error: {exc}\n"
    except _INPUT_ERRORS as exc:
        return EXIT_INPUT, "", f"error: {exc}\n"
    err = f"error: {message}\n" if message else ""
    if args.output:
        Path(args.output).write_text(out, encoding="utf-8")
        return code, "", err
    return code, out, err


def main(argv: Sequence[str] | None = None) -> int:
    try:
        code, out, err = run(argv)
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code or 0) if exc.code in (0, None) else EXIT_INPUT
    if out:
        sys.stdout.write(out)
    if err:
        sys.stderr.write(err)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
