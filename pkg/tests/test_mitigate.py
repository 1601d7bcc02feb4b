import json

import jsonschema
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from fairlend.data import Dataset, GroupLabels
from fairlend.exceptions import FairlendError, TrainingDivergedError
from fairlend.learners import fit_logistic, fit_tree, load_model, model_to_json
from fairlend.metrics import fairness_report
from fairlend.mitigate import (AdversarialConfig, AdversarialDebiasingModel,
                               FairDecisionTreeRiskModel, RegularizationConfig, adversary_leakage,
                               evaluate_split, fit_adversarial, fit_fair_tree,
                               regularized_objective)
from fairlend.reporting import load_schema

# accuracy and AIR of the two cutoffs on the tradeoff fixture, recounted by hand from
# its count table: 600 -> 75/100 correct, AIR (26/50)/(40/50); 700 -> 73/100, (15/50)/(19/50)
AT_600 = (0.75, 0.65)
AT_700 = (0.73, 15 / 19)


# --- evaluate_split -------------------------------------------------------------

def test_fixture_cutoffs(tradeoff):
    acc, air = evaluate_split(tradeoff.dataset, tradeoff.groups, "credit_score", 600)
    assert acc == pytest.approx(AT_600[0], abs=1e-12) and air == pytest.approx(AT_600[1], abs=1e-12)
    acc, air = evaluate_split(tradeoff.dataset, tradeoff.groups, "credit_score", 700)
    assert acc == pytest.approx(AT_700[0], abs=1e-12) and air == pytest.approx(AT_700[1], abs=1e-12)


def test_cutoff_below_all_values_treats_groups_alike(tradeoff):
    _, air = evaluate_split(tradeoff.dataset, tradeoff.groups, "credit_score", 100)
    assert air == 1.0


def test_split_without_control_approvals_flags_air():
    ds = Dataset(("x",), np.array([[1.0], [2.0], [3.0], [4.0]]), np.array([0, 1, 1, 1]))
    g = GroupLabels.for_dataset(np.array([True, False, False, False]), ds)
    assert evaluate_split(ds, g, "x", 1.5).air is None


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 100_000))
def test_split_matches_oracle_on_random_instance(seed):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 10, 50).astype(float)
    y = (rng.random(50) < 0.2 + 0.06 * x).astype(int)
    prot = rng.random(50) < 0.5
    prot[:2] = [True, False]
    ds = Dataset(("x",), x[:, None], y)
    g = GroupLabels.for_dataset(prot, ds)
    cutoff = float(rng.integers(1, 10)) - 0.5
    left = [v < cutoff for v in x.tolist()]
    rate = {}
    for side in (True, False):
        ys = [o for o, s in zip(y.tolist(), left) if s == side]
        rate[side] = sum(ys) / len(ys) if ys else None
    fav = [1 if rate[s] < 0.5 else 0 for s in left]
    acc, air = evaluate_split(ds, g, "x", cutoff)
    assert abs(acc - oracles.accuracy(fav, y.tolist())) <= 1e-12
    rp, rc = oracles.favorable_rates(fav, prot.tolist())
    if rc == 0:
        assert air is None
    else:
        assert abs(air - rp / rc) <= 1e-12


# --- regularized objective --------------------------------------------------------

def test_objective_examples():
    assert regularized_objective(0.75, 0.65, 0.0) == 0.75
    assert regularized_objective(0.75, 0.65, 1.0) == pytest.approx(0.40, abs=1e-12)
    assert regularized_objective(0.73, 0.79, 1.0) == pytest.approx(0.52, abs=1e-12)
    assert regularized_objective(0.8, 1.0, 3.0) == 0.8
    assert regularized_objective(0.8, 1.3, 3.0) == 0.8
    assert regularized_objective(0.8, None, 0.5) == pytest.approx(0.3)
    assert np.allclose(regularized_objective(np.array([0.8, 0.8]), np.array([np.nan, 0.5]), 1.0),
                       [-0.2, 0.3])


@settings(max_examples=100)
@given(st.floats(0, 1), st.floats(0.01, 0.999), st.floats(0, 5), st.floats(0, 5))
def test_objective_non_increasing_in_lambda(acc, air, lam1, lam2):
    lo, hi = sorted((lam1, lam2))
    assert regularized_objective(acc, air, hi) <= regularized_objective(acc, air, lo)
    assert regularized_objective(acc, 1.0, hi) == regularized_objective(acc, 1.0, lo)


def test_crossover_lambda():
    star = (0.75 - 0.73) / (0.79 - 0.65)
    assert star == pytest.approx(0.142857, abs=1e-6)
    for lam, winner in ((star - 1e-6, 0), (star + 1e-6, 1)):
        values = [regularized_objective(0.75, 0.65, lam), regularized_objective(0.73, 0.79, lam)]
        assert int(np.argmax(values)) == winner


def test_fair_tree_flips_at_fixture_crossover(tradeoff):
    star = (AT_600[0] - AT_700[0]) / (AT_700[1] - AT_600[1])
    picks = [fit_fair_tree(tradeoff.dataset, tradeoff.groups, RegularizationConfig(lam),
                           {"max_depth": 1}).root_split[1]
             for lam in (star - 1e-3, star + 1e-3)]
    assert picks == [600.0, 700.0]


# --- fair tree ---------------------------------------------------------------------

@pytest.mark.parametrize("lam, cutoff", [(0.0, 600.0), (1.0, 700.0)])
def test_fair_tree_on_fixture(tradeoff, lam, cutoff):
    model = fit_fair_tree(tradeoff.dataset, tradeoff.groups, RegularizationConfig(lam),
                          {"max_depth": 1})
    assert model.root_split == ("credit_score", cutoff)


def test_lambda_zero_reproduces_plain_tree(default_split):
    train = default_split[0]
    plain = fit_tree(train.dataset)
    fair = fit_fair_tree(train.dataset, train.groups, RegularizationConfig(0.0))
    a, b = plain.to_dict(), fair.to_dict()
    assert json.dumps(a["parameters"]) == json.dumps(b["parameters"])
    assert b["training"]["lam"] == 0.0 and b["kind"] == "fair_tree"


def test_lambda_sweep_endpoints(default_split):
    train, test = default_split
    airs = []
    for lam in (0.0, 0.25, 0.5, 1.0, 2.0):
        model = fit_fair_tree(train.dataset, train.groups, RegularizationConfig(lam))
        airs.append(model.train_air_)
    # greedy growth can make single steps non-monotone; the endpoints must not be
    assert airs[-1] >= airs[0]


def test_fair_tree_requires_groups(tradeoff):
    with pytest.raises(FairlendError, match="group"):
        FairDecisionTreeRiskModel().fit(tradeoff.dataset)
    with pytest.raises(FairlendError, match="lambda"):
        FairDecisionTreeRiskModel(lam=-1).fit(tradeoff.dataset, groups=tradeoff.groups)


# --- adversarial ----------------------------------------------------------------

def test_alpha_zero_matches_plain_logistic(default_split):
    train = default_split[0]
    plain = fit_logistic(train.dataset)
    adv = fit_adversarial(train.dataset, train.groups, AdversarialConfig(alpha=0.0))
    assert np.max(np.abs(plain.coef_ - adv.coef_)) <= 1e-9
    assert abs(plain.intercept_ - adv.intercept_) <= 1e-9


def test_debiasing_lowers_leakage_and_raises_air(default_split):
    train, test = default_split
    base = fit_logistic(train.dataset)
    adv0 = fit_adversarial(train.dataset, train.groups, AdversarialConfig(alpha=0.0))
    adv2 = fit_adversarial(train.dataset, train.groups, AdversarialConfig(alpha=2.0))
    assert (adversary_leakage(adv2, test.dataset, test.groups)
            < adversary_leakage(adv0, test.dataset, test.groups))
    y = test.dataset.outcome
    air_base = fairness_report(base.risk_scores(test.dataset), y, test.groups, 0.5).air
    air_adv = fairness_report(adv2.risk_scores(test.dataset), y, test.groups, 0.5).air
    assert air_adv > air_base


def test_leakage_of_constant_scores_is_majority_share():
    prot = np.array([True] * 30 + [False] * 70)
    assert adversary_leakage(np.full(100, 0.2), None, prot) == pytest.approx(0.7)


def test_leakage_of_group_indicator_is_total():
    prot = np.array([True, False] * 50)
    scores = np.where(prot, 0.9, 0.1) + np.linspace(-0.01, 0.01, 100)
    assert adversary_leakage(scores, None, prot) >= 0.99


def test_baseline_leaks_group_on_proxy_scenario(default_split):
    train, test = default_split
    model = fit_logistic(train.dataset)
    majority = max(test.groups.is_protected.mean(), 1 - test.groups.is_protected.mean())
    assert adversary_leakage(model, test.dataset, test.groups) > majority


def test_leakage_needs_two_groups():
    with pytest.raises(FairlendError):
        adversary_leakage(np.full(4, 0.3), None, np.array([True] * 4))


def test_adversarial_divergence_names_component():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(20, 2))
    y = (X[:, 0] > 0).astype(int)
    g = np.array([True] * 10 + [False] * 10)
    with pytest.raises(TrainingDivergedError, match="adversary|predictor") as info:
        AdversarialDebiasingModel(alpha=1.0, learning_rate=1000, l2_penalty=1.0).fit(X, y,
                                                                                   groups=g)
    assert info.value.epoch > 1


def test_adversarial_validation():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(20, 2))
    y = (X[:, 0] > 0).astype(int)
    with pytest.raises(FairlendError, match="alpha"):
        AdversarialDebiasingModel(alpha=-1).fit(X, y, groups=np.arange(20) % 2 == 0)
    with pytest.raises(FairlendError, match="group"):
        AdversarialDebiasingModel().fit(X, y)
    with pytest.raises(FairlendError, match="adversary"):
        fit_adversarial(X, np.arange(20) % 2 == 0, AdversarialConfig(adversary={"depth": 2}))


@pytest.mark.parametrize("factory", [
    lambda: FairDecisionTreeRiskModel(lam=0.5, max_depth=2),
    lambda: AdversarialDebiasingModel(alpha=1.0, epochs=50),
])
def test_mitigated_models_round_trip(german, factory):
    model = factory().fit(german.dataset, groups=german.groups)
    doc = model.to_dict()
    jsonschema.validate(doc, load_schema("model"))
    again = load_model(model_to_json(model))
    assert np.array_equal(again.risk_scores(german.dataset), model.risk_scores(german.dataset))
    assert model_to_json(again) == model_to_json(model)
    extra = "lam" if model.kind == "fair_tree" else "alpha"
    assert extra in doc["training"] and extra in doc["hyperparams"]
