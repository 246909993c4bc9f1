import numpy as np
import pytest

from conftest import dataset, random_table
from itr_eval.core import realize, threshold_rule
from itr_eval.crossfit import (
    HEURISTIC,
    BaselineRiskScorer,
    ConstantScorer,
    FixedRuleAlgorithm,
    FoldPlan,
    ScoringAlgorithm,
    StratumCATELearner,
    cross_fit_pape,
    cross_fit_pav,
    make_folds,
    nadeau_bengio_decomposition,
    suggest_k,
)
from itr_eval.errors import Indivisible, TrainFailure
from itr_eval.estimators import DEGENERATE_RULE
from itr_eval.oracle import oracle_truth


def _data(n=8, n1=4, seed=0):
    rng = np.random.default_rng(seed)
    t = np.zeros(n, int)
    t[rng.permutation(n)[:n1]] = 1
    return dataset(rng.normal(0, 2, n), t, rng.normal(size=(n, 2)))


def test_fold_counts():
    plan = make_folds(_data(), 2, seed=1)
    assert plan.K == 2 and plan.m == 4 and plan.m1 == 2 and plan.m0 == 2
    plan.check(_data())


def test_indivisible_with_suggestion():
    d = _data(9, 3)
    with pytest.raises(Indivisible) as e:
        make_folds(d, 2, seed=0)
    assert e.value.suggestion == 3


def test_suggest_k():
    assert suggest_k(12, 6, 5) == 6
    assert suggest_k(12, 6, 4) == 3
    assert suggest_k(9, 4, 2) is None


def test_fold_membership_frequency():
    d = _data(8, 4, seed=3)
    draws = 100_000
    rng = np.random.default_rng(0)
    hits = np.zeros(8)
    for _ in range(draws):
        hits += make_folds(d, 2, rng).assignment == 0
    treated = d.treatment == 1
    assert np.all(np.abs(hits[treated] / draws - 0.5) < 0.01)


def test_plan_deterministic():
    a = make_folds(_data(40, 20), 4, seed=7)
    b = make_folds(_data(40, 20), 4, seed=7)
    assert np.array_equal(a.assignment, b.assignment)


def test_constant_algorithms():
    d = _data(12, 6, seed=4)
    plan = make_folds(d, 3, seed=0)
    y, t = d.outcome, d.treatment == 1
    one = cross_fit_pav(d, ConstantScorer(1.0), plan)
    assert one.value == pytest.approx(y[t].mean(), abs=1e-12)
    zero = cross_fit_pav(d, ConstantScorer(-1.0), plan)
    assert zero.value == pytest.approx(y[~t].mean(), abs=1e-12)
    pape = cross_fit_pape(d, ConstantScorer(1.0), plan)
    assert pape.value == 0.0 and all(r.estimate == 0.0 for r in pape.per_fold)
    assert HEURISTIC in pape.flags and DEGENERATE_RULE in pape.flags


def test_hand_worked_example():
    x = np.array([-1, 1, -1, 1, -1, 1, -1, 1.0]).reshape(-1, 1)
    t = [1, 1, 0, 0, 1, 1, 0, 0]
    y = [2, 5, 4, 1, 3, 7, 2, 0]
    d = dataset(y, t, x)
    plan = FoldPlan(2, np.array([0, 0, 0, 0, 1, 1, 1, 1]), 4, 2, 2)
    r = cross_fit_pav(d, StratumCATELearner(0, [0.0]), plan)
    # trained on fold 1 both strata look beneficial, so fold 0 gets its treated mean 3.5;
    # trained on fold 0 only x > 0 is treated: fold 1 value 7/2 + 2/2 = 4.5
    assert [f.estimate for f in r.per_fold] == [3.5, 4.5]
    assert r.value == 4.0


def test_nb_decomposition_examples():
    c = nadeau_bengio_decomposition([1.0, 1.0, 1.0], [2.0, 2.0, 2.0])
    assert c["s_f_sq"] == 0.0 and c["v_pooled"] == c["v_single"] == 2.0
    c = nadeau_bengio_decomposition([0.0, 2.0], [1.0, 1.0])
    assert c["s_f_sq"] == 2.0 and c["v_pooled"] == 0.0


def test_pooled_is_mean_of_folds_and_se_assembly():
    d = _data(40, 20, seed=5)
    plan = make_folds(d, 4, seed=2)
    r = cross_fit_pav(d, StratumCATELearner(0, [0.0]), plan, seed=3)
    vals = [f.estimate for f in r.per_fold]
    assert r.value == pytest.approx(np.mean(vals), abs=1e-15)
    comp = nadeau_bengio_decomposition(vals, [f.variance_plugin for f in r.per_fold])
    assert r.components["v_pooled"] == pytest.approx(comp["v_pooled"])
    assert r.std_error == pytest.approx(np.sqrt(max(comp["v_pooled"], 0.0)))
    assert r.to_dict()["per_fold"][0]["fold"] == 0


class Exploding(ScoringAlgorithm):
    name = "exploding"

    def train(self, X, T, Y, seed):
        raise RuntimeError("boom")


def test_train_failure_reports_fold():
    d = _data(8, 4)
    with pytest.raises(TrainFailure) as e:
        cross_fit_pav(d, Exploding(), make_folds(d, 2, 0))
    assert e.value.fold == 0


def test_determinism_and_workers():
    d = _data(40, 20, seed=6)
    plan = make_folds(d, 4, seed=1)
    algo = BaselineRiskScorer()
    a = cross_fit_pav(d, algo, plan, seed=11)
    b = cross_fit_pav(d, algo, plan, seed=11, workers=4)
    assert a.to_dict() == b.to_dict()


def test_fixed_rule_algorithm_targets_tau_f():
    rng = np.random.default_rng(9)
    pop = random_table(rng, 5000)
    rule = threshold_rule(0, 0.0)
    target = oracle_truth(pop, rule).tau_f
    vals = []
    for s in range(1500):
        g = np.random.default_rng(s)
        sample = pop.take(g.integers(0, pop.n, 40))
        t = np.zeros(40, int)
        t[g.permutation(40)[:20]] = 1
        d = realize(sample, t)
        vals.append(cross_fit_pape(d, FixedRuleAlgorithm(rule), make_folds(d, 2, g)).value)
    vals = np.asarray(vals)
    assert abs(vals.mean() - target) < 3 * vals.std(ddof=1) / np.sqrt(vals.size)


def test_stratum_learner_pooled_fallback():
    X = np.array([[-1.0], [-1.0], [1.0], [1.0]])
    L = StratumCATELearner(0, [0.0])
    scores = L.stratum_scores(X, np.array([1, 0, 1, 1]), np.array([3.0, 1.0, 5.0, 7.0]))
    # stratum 1 has no controls and uses the pooled difference 5 - 1
    assert scores.tolist() == [2.0, 4.0]
