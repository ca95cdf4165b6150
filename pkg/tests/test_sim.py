import io
import json
import random
from importlib import resources

import jsonschema
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit

import oracles
from glmcausal import glm, sim
from glmcausal.dag import Dag, parse_dag
from glmcausal.data import write_csv
from glmcausal.glm import ModelSpec
from glmcausal.sim import Mechanism, Sem, SimError

SEEDS = range(20)
N = 10_000


def load_schema(name):
    return json.loads(resources.files("glmcausal").joinpath(f"schemas/{name}").read_text())


def coef_and_se(data, outcome, terms, name, family="gaussian"):
    r = glm.fit(data, ModelSpec(outcome, terms, family))
    return r.coefficient(name), r.std_error(name)


# ----------------------------------------------------------- simulate


def test_single_node_moments():
    sem = Sem(parse_dag("dag { Z }"), {"Z": Mechanism()})
    z = sim.simulate(sem, 100_000, 1)["Z"]
    assert abs(z.mean()) < 0.02
    assert abs(z.std() - 1) < 0.02


def test_chain_slope():
    sem = Sem.linear(parse_dag("dag { A -> B }"), {("A", "B"): 2.0})
    d = sim.simulate(sem, 5000, 3)
    b, se = coef_and_se(d, "B", ["A"], "A")
    assert abs(b - 2.0) < 3 * se


def test_determinism_byte_identical():
    sem = sim.builtin_scenario("figure1").sem
    a, b = sim.simulate(sem, 500, 99), sim.simulate(sem, 500, 99)
    assert a.equals(b)
    ca, cb = io.StringIO(), io.StringIO()
    write_csv(a, ca)
    write_csv(b, cb)
    assert ca.getvalue() == cb.getvalue()
    assert not a.equals(sim.simulate(sem, 500, 100))


def test_documented_rng_contract():
    """Regenerate a dataset by hand from the documented recipe."""
    dag = parse_dag("dag { Y [outcome] X [exposure] B -> X  X -> Y  B -> Y }")
    sem = Sem(dag, {
        "B": Mechanism({}, "bernoulli", intercept=0.3),
        "X": Mechanism({"B": 0.7}, sd=2.0, intercept=1.0),
        "Y": Mechanism({"X": 0.5, "B": -1.0}),
    })
    n, seed = 50, 123
    rng = np.random.Generator(np.random.PCG64(seed))
    # topological order: B, X, Y (declaration order breaks ties)
    b = (rng.random(n) < expit(0.3)).astype(float)
    x = 1.0 + 0.7 * b + 2.0 * rng.standard_normal(n)
    y = 0.5 * x - 1.0 * b + rng.standard_normal(n)
    d = sim.simulate(sem, n, seed)
    assert d.names == ("Y", "X", "B")
    np.testing.assert_array_equal(d["B"], b)
    np.testing.assert_array_equal(d["X"], x)
    np.testing.assert_array_equal(d["Y"], y)


def test_simulate_rejects_empty():
    with pytest.raises(SimError):
        sim.simulate(sim.builtin_scenario("mediator").sem, 0, 1)


# --------------------------------------------------------- SEM model


def test_mechanism_parents_must_match():
    dag = parse_dag("dag { A -> B }")
    with pytest.raises(SimError, match="parents"):
        Sem(dag, {"A": Mechanism(), "B": Mechanism({"C": 1.0})})
    with pytest.raises(SimError, match="no mechanism"):
        Sem(dag, {"A": Mechanism()})
    with pytest.raises(SimError):
        Mechanism(noise="cauchy")
    with pytest.raises(SimError):
        Mechanism(sd=-1.0)


def test_sem_json_round_trip():
    schema = load_schema("sem.schema.json")
    for name in sim.scenario_names():
        scen = sim.builtin_scenario(name)
        doc = scen.sem.to_dict()
        jsonschema.validate(doc, schema)
        again = Sem.from_dict(json.loads(json.dumps(doc)))
        assert again.dag == scen.sem.dag
        assert again.to_dict() == doc
        assert sim.simulate(again, 50, 4).equals(sim.simulate(scen.sem, 50, 4))
        jsonschema.validate(scen.to_dict()["sem"], schema)


def test_load_sem_accepts_scenario_documents(tmp_path):
    scen = sim.builtin_scenario("confounding")
    p = tmp_path / "scen.json"
    p.write_text(json.dumps(scen.to_dict()))
    assert sim.load_sem(p).dag == scen.sem.dag


# ------------------------------------------------------ total effects


def test_total_effect_examples():
    direct = Sem.linear(parse_dag("dag { X [exposure] Y [outcome] X -> Y }"), {("X", "Y"): 0.3})
    assert sim.true_total_effect(direct) == pytest.approx(0.3)
    assert sim.true_total_effect(sim.builtin_scenario("mediator").sem) == pytest.approx(0.5)
    assert sim.builtin_scenario("confounding").true_effect == pytest.approx(0.3)


def test_total_effect_figure1_matches_path_walk():
    sem = sim.builtin_scenario("figure1").sem
    g = sem.dag
    coef = {(a, b): sem.edge_coefficient(a, b) for a, b in g.edges}
    want = oracles.total_effect(g.nodes, g.edges, coef, "Chemotherapy", "VTE")
    assert sim.true_total_effect(sem) == pytest.approx(want, abs=1e-15)
    assert want == pytest.approx(0.25 + 0.6 * 0.5)


def test_total_effect_random_dags_match_path_walk():
    rng = random.Random(8)
    nodes = tuple("ABCDEFG")
    for _ in range(100):
        edges = oracles.random_dag(nodes, rng, p=0.5)
        coef = {e: rng.uniform(-1, 1) for e in edges}
        x, y = rng.sample(nodes, 2)
        sem = Sem.linear(Dag(nodes, tuple(edges), x, y), coef)
        assert sim.true_total_effect(sem) == pytest.approx(oracles.total_effect(nodes, edges, coef, x, y), abs=1e-12)


def test_total_effect_errors():
    dag = parse_dag("dag { X [exposure] Y [outcome] X -> M -> Y }")
    sem = Sem.linear(dag, {("X", "M"): 1.0, ("M", "Y"): 1.0}, noise={"M": "bernoulli"})
    with pytest.raises(SimError, match="M"):
        sim.true_total_effect(sem)
    bare = Sem.linear(parse_dag("dag { A -> B }"), {("A", "B"): 1.0})
    with pytest.raises(SimError):
        sim.true_total_effect(bare)
    assert sim.true_total_effect(bare, "A", "B") == 1.0
    assert sim.true_total_effect(bare, "B", "A") == 0.0


# ---------------------------------------------------- analytic values


def test_confounding_analytic():
    scen = sim.builtin_scenario("confounding")
    adj, value = scen.comparisons["unadjusted"]
    assert adj == ()
    assert value == pytest.approx(0.3 + 0.8 * 0.5 / 1.25, abs=1e-12)
    assert value == pytest.approx(0.62, abs=1e-12)
    assert scen.comparisons["adjusted for C"][1] == pytest.approx(0.3, abs=1e-12)


def test_collider_analytic():
    scen = sim.builtin_scenario("collider")
    assert scen.comparisons["unconditioned"][1] == pytest.approx(0.3, abs=1e-12)
    # Var(X)=1, Var(S)=3, Cov(X,S)=1, Cov(X,Y)=0.3, Cov(S,Y)=0.3+1=1.3
    want = (0.3 * 3 - 1 * 1.3) / (1 * 3 - 1 * 1)
    assert scen.comparisons["conditioned on S"][1] == pytest.approx(want, abs=1e-12)
    assert want == pytest.approx(-0.2)


def test_independent_collider_analytic():
    dag = parse_dag("dag { X Y S X -> S Y -> S }")
    sem = Sem.linear(dag, {("X", "S"): 1.0, ("Y", "S"): 1.0})
    got = sim.population_coefficients(sem, "Y", ["X", "S"])["X"]
    assert got == pytest.approx((0 - 1 * 1 / 3) / (1 - 1 / 3), abs=1e-12)
    assert got == pytest.approx(-0.5, abs=1e-12)


def test_mediator_analytic():
    scen = sim.builtin_scenario("mediator")
    assert scen.true_effect == pytest.approx(0.5)
    assert scen.comparisons["M excluded"][1] == pytest.approx(0.5, abs=1e-12)
    assert scen.comparisons["adjusted for M"][1] == pytest.approx(0.3, abs=1e-12)


def test_figure1_analytic():
    scen = sim.builtin_scenario("figure1")
    assert scen.comparisons["adjusted for confounders"][1] == pytest.approx(scen.true_effect, abs=1e-12)
    assert scen.comparisons["adjusted for confounders and PlateletCount"][1] == pytest.approx(0.25, abs=1e-12)
    assert abs(scen.comparisons["unadjusted"][1] - scen.true_effect) > 0.1
    assert set(scen.sem.dag.nodes) == {"Chemotherapy", "VTE", "Age", "Sex", "TumourSite", "TumourSize", "PlateletCount"}


def test_population_coefficients_match_large_sample():
    scen = sim.builtin_scenario("figure1")
    d = sim.simulate(scen.sem, 200_000, 5)
    adj, value = scen.comparisons["unadjusted"]
    b, se = coef_and_se(d, "VTE", ["Chemotherapy"], "Chemotherapy")
    assert abs(b - value) < 4 * se


def test_unknown_scenario():
    with pytest.raises(SimError, match="unknown scenario"):
        sim.builtin_scenario("nope")


def test_covariance_rejects_bernoulli_child():
    dag = parse_dag("dag { A -> B }")
    sem = Sem.linear(dag, {("A", "B"): 1.0}, noise={"B": "bernoulli"})
    with pytest.raises(SimError):
        sim.implied_covariance(sem)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_implied_covariance_matches_sample(seed):
    rng = random.Random(seed)
    nodes = tuple("ABCD")
    edges = oracles.random_dag(nodes, rng, p=0.6)
    sem = Sem.linear(Dag(nodes, tuple(edges)), {e: rng.uniform(-1, 1) for e in edges})
    cov = sim.implied_covariance(sem)
    d = sim.simulate(sem, 40_000, seed % 1000)
    sample = np.cov(np.vstack([d[v] for v in nodes]))
    assert np.max(np.abs(sample - cov)) < 0.08 * max(1.0, np.max(np.abs(cov)))


# ------------------------------------------------ recovery properties


def adjusted_z_scores(name):
    from glmcausal.dag import minimal_adjustment_sets

    scen = sim.builtin_scenario(name)
    adj = minimal_adjustment_sets(scen.sem.dag)[0]
    out = []
    for seed in SEEDS:
        d = sim.simulate(scen.sem, N, seed)
        b, se = coef_and_se(d, scen.outcome, (scen.exposure,) + adj, scen.exposure)
        out.append((b - scen.true_effect) / se)
    return np.array(out)


@pytest.mark.parametrize("name", ["confounding", "collider", "mediator", "figure1"])
def test_correct_adjustment_recovers_total_effect(name):
    z = adjusted_z_scores(name)
    assert np.all(np.abs(z) < 3), z


def test_selection_scenario_is_calibrated():
    # Not one of the four bias scenarios. With 20 seeds a 3 SE band is
    # missed by at least one seed about 5% of the time, and seed 1 does
    # land at 3.3 SE, so check calibration instead of a per-seed bound.
    z = adjusted_z_scores("selection")
    assert np.sum(np.abs(z) >= 3) <= 1
    assert abs(z.mean()) < 3 / np.sqrt(len(z))
    assert 0.5 < z.std() < 1.6


def test_confounding_bias_is_detectable():
    scen = sim.builtin_scenario("confounding")
    for seed in SEEDS:
        d = sim.simulate(scen.sem, N, seed)
        b, se = coef_and_se(d, "Y", ["X"], "X")
        assert abs(b - 0.62) < 3 * se
        assert abs(b - 0.3) > 5 * se


def test_logistic_outcome_recovery_within_four_se():
    dag = parse_dag("dag { X [exposure] Y [outcome] X -> Y }")
    sem = Sem(dag, {"X": Mechanism(), "Y": Mechanism({"X": 0.7}, "bernoulli", intercept=-0.4)})
    for seed in range(5):
        d = sim.simulate(sem, N, seed)
        b, se = coef_and_se(d, "Y", ["X"], "X", "binomial")
        assert abs(b - 0.7) < 4 * se
