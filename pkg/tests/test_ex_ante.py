import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import chisquare

import oracles
from conftest import random_table
from itr_eval.core import PotentialOutcomeTable, TreatmentRule, constant_rule, threshold_rule
from itr_eval.errors import BadCounts, EmptyCell, Unroundable, ValidationError
from itr_eval.estimators import ARM_TOO_SMALL, DEGENERATE_RULE
from itr_eval.ex_ante import (
    ALIGNMENT,
    INTERMEDIATE,
    ROUNDED,
    DesignWarning,
    ExAnteDataset,
    centre_within_rule_groups,
    correct_on_average,
    design_ex_ante,
    estimate_intermediate,
    estimate_pape_ex_ante,
    shift_change_in_difference,
    variance_difference_ex_ante_vs_ex_post,
    variance_difference_lower_form,
)
from itr_eval.oracle import conditional_expectation, conditional_variance, enumerate_randomizations


def half_rule():
    # treats units 0 and 3 of a four-unit table with covariate = index
    return TreatmentRule(lambda x: np.isin(x[:, 0], [0, 3]), "half")


X4 = np.arange(4.0).reshape(-1, 1)


def test_design_counts_half():
    a = design_ex_ante(X4, half_rule(), 2, seed=1)
    assert a.plan.counts["n_r1"] == 1 and a.plan.counts["n_r0"] == 1
    assert ALIGNMENT not in a.plan.flags


def test_design_constant_rule_treats_whole_random_arm():
    a = design_ex_ante(np.zeros((6, 1)), constant_rule(1), 2, seed=0)
    assert a.plan.counts["n_r1"] == a.plan.counts["n_r"] == 4
    assert a.treatment.tolist() == [1] * 6


def test_design_rounding_and_strict():
    rule = TreatmentRule(lambda x: x[:, 0] < 1, "one")  # p_hat = 1/5
    x = np.arange(5.0).reshape(-1, 1)
    with pytest.warns(DesignWarning):
        a = design_ex_ante(x, rule, 2, seed=0)
    assert a.plan.counts["n_r1"] == 1 and ROUNDED in a.plan.flags and ALIGNMENT in a.plan.flags
    with pytest.raises(Unroundable):
        design_ex_ante(x, rule, 2, seed=0, strict=True)


def test_design_bad_counts():
    with pytest.raises(BadCounts):
        design_ex_ante(X4, half_rule(), 4, seed=0)
    with pytest.raises(BadCounts):
        design_ex_ante(X4, half_rule(), 2, seed=0, n_r1=3)


def test_design_rule_arm_follows_rule():
    rule = threshold_rule(0, 1.5)
    a = design_ex_ante(X4, rule, 2, seed=3)
    f = rule(X4)
    assert np.array_equal(a.treatment[a.arm == 1], f[a.arm == 1])


def test_design_two_stage_uniformity():
    rng = np.random.default_rng(5)
    counts = {}
    draws = 60_000
    for _ in range(draws):
        a = design_ex_ante(X4, half_rule(), 2, seed=rng)
        key = (tuple(a.arm), tuple(a.treatment * (1 - a.arm)))
        counts[key] = counts.get(key, 0) + 1
    assert len(counts) == 12
    freq = np.array(list(counts.values()))
    assert np.all(np.abs(freq / draws - 1 / 12) < 0.01)
    assert chisquare(freq).pvalue > 1e-4


def test_same_seed_same_design():
    a = design_ex_ante(np.arange(20.0).reshape(-1, 1), threshold_rule(0, 9.5), 10, seed=42)
    b = design_ex_ante(np.arange(20.0).reshape(-1, 1), threshold_rule(0, 9.5), 10, seed=42)
    assert np.array_equal(a.arm, b.arm) and np.array_equal(a.treatment, b.treatment)


def test_hand_example_value_zero():
    # F = [1,1,0,0], Y = [5,7,2,10], random arm T = [., ., 1, 0], p_hat = 0.5
    d = ExAnteDataset(X4, [1, 1, 0, 0], [1, 0, 1, 0], [5.0, 7.0, 2.0, 10.0], [1, 0, 0, 1])
    e = estimate_pape_ex_ante(d)
    assert e.value == pytest.approx(0.0, abs=1e-15)
    assert ARM_TOO_SMALL in e.flags and e.std_error is None
    assert estimate_intermediate(d).value == pytest.approx(0.0, abs=1e-15)


def test_dataset_validation():
    with pytest.raises(ValidationError) as e:
        ExAnteDataset(X4, [1, 1, 0, 0], [0, 0, 1, 0], [1.0, 2, 3, 4], [1, 0, 0, 1])
    assert "RULE_ARM_MISMATCH" in e.value.codes
    with pytest.raises(ValidationError) as e:
        ExAnteDataset(X4, [1, 2, 0, 0], [1, 0, 1, 0], [1.0, 2, 3, 4], [1, 0, 0, 1])
    assert "BAD_BINARY" in e.value.codes


def test_empty_weighted_group():
    # p_hat = 1: the random-arm control group carries zero weight and may be empty
    tab = PotentialOutcomeTable(np.zeros((4, 1)), [1.0, 2, 3, 4], [0.0, 0, 0, 0])
    d = ExAnteDataset.from_table(tab, [1, 1, 1, 1], [1, 1, 0, 0], [0, 0, 1, 1])
    e = estimate_pape_ex_ante(d)
    assert e.value == pytest.approx(4 / 3 * (1.5 - 3.5))
    assert DEGENERATE_RULE in e.flags
    d2 = ExAnteDataset.from_table(tab, [1, 0, 1, 0], [1, 1, 0, 0], [0, 0, 1, 1])
    with pytest.raises(EmptyCell):
        estimate_pape_ex_ante(d2)


def test_constant_rule_mean_zero_by_monte_carlo():
    rng = np.random.default_rng(8)
    tab = random_table(rng, 40)
    vals = []
    for s in range(3000):
        a = design_ex_ante(tab, constant_rule(1), 20, seed=s)
        vals.append(estimate_pape_ex_ante(ExAnteDataset.from_table(tab, a.decisions, a.arm, a.treatment)).value)
    vals = np.asarray(vals)
    assert abs(vals.mean()) < 3 * vals.std(ddof=1) / np.sqrt(vals.size)


def test_enumeration_four_units_matches_lemma():
    rng = np.random.default_rng(12)
    tab = random_table(rng, 4, p=1)
    f = np.array([1, 0, 0, 1])
    design = {"n_f": 2, "n_r1": 1}
    r = enumerate_randomizations(tab, "PAPE_EX_ANTE", f, design=design)
    assert r.count == 12
    inner = oracles.cond_mean_intermediate(tab.y1.tolist(), tab.y0.tolist(), f.tolist())
    assert abs(r.mean - 4 / 3 * inner) < 1e-12
    ri = enumerate_randomizations(tab, "EX_ANTE_INTERMEDIATE", f, design=design)
    assert abs(ri.mean - inner) < 1e-12


@pytest.mark.parametrize("n,n_f", [(4, 2), (6, 2), (6, 3), (6, 4), (8, 4)])
def test_conditional_variance_matches_enumeration(n, n_f):
    rng = np.random.default_rng(n * 10 + n_f)
    tab = random_table(rng, n, p=1)
    for trial in range(5):
        f = rng.integers(0, 2, n)
        if f.sum() in (0, n):
            continue
        n_r = n - n_f
        for n_r1 in range(1, n_r):
            design = {"n_f": n_f, "n_r1": n_r1}
            for tag in ("PAPE_EX_ANTE", "EX_ANTE_INTERMEDIATE"):
                r = enumerate_randomizations(tab, tag, f, design=design)
                assert abs(r.mean - conditional_expectation(tab, tag, f, design=design)) < 1e-12
                # the weighted variance form describes the intermediate estimator only when aligned
                aligned = abs(f.mean() - n_r1 / n_r) < 1e-12
                if tag == "PAPE_EX_ANTE" or aligned:
                    assert r.variance == pytest.approx(conditional_variance(tab, tag, f, design), rel=1e-9, abs=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_intermediate_is_scaled_ex_ante_when_aligned(seed):
    rng = np.random.default_rng(seed)
    n = 12
    tab = random_table(rng, n)
    f = np.zeros(n, int)
    f[rng.permutation(n)[:6]] = 1
    a = design_ex_ante(tab.covariates, TreatmentRule(lambda x, f=f: f, "fixed"), 6, seed=rng)
    d = ExAnteDataset.from_table(tab, a.decisions, a.arm, a.treatment)
    assert d.aligned()
    inter = estimate_intermediate(d)
    assert INTERMEDIATE in inter.flags
    assert abs(inter.value - (n - 1) / n * estimate_pape_ex_ante(d).value) < 1e-12


# -- variance comparison


def test_difference_requires_balanced_n():
    tab = random_table(np.random.default_rng(0), 10)
    with pytest.raises(BadCounts):
        variance_difference_ex_ante_vs_ex_post(tab, threshold_rule(0, 0.0), 10)


def test_difference_zero_for_zero_outcomes():
    x = np.random.default_rng(0).standard_normal((10, 1))
    tab = PotentialOutcomeTable(x, np.zeros(10), np.zeros(10))
    assert variance_difference_ex_ante_vs_ex_post(tab, threshold_rule(0, 0.0), 8) == 0.0


def _conforming(rng, N=200):
    while True:
        tab = random_table(rng, N, scale=float(rng.uniform(0.5, 5)))
        tab = PotentialOutcomeTable(tab.covariates, tab.y1 + rng.normal(0, 2) * (tab.covariates[:, 0] > 0), tab.y0)
        rule = threshold_rule(0, float(rng.uniform(-1, 1)))
        c = centre_within_rule_groups(tab, rule)
        if correct_on_average(c, rule):
            return c, rule


@given(st.integers(0, 2**32 - 1))
def test_lower_form_agrees_under_centring(seed):
    rng = np.random.default_rng(seed)
    c, rule = _conforming(rng)
    a = variance_difference_ex_ante_vs_ex_post(c, rule, 100)
    b = variance_difference_lower_form(c, rule, 100)
    assert a == pytest.approx(b, rel=1e-9, abs=1e-12)
    assert a >= -1e-12


@given(st.integers(0, 2**32 - 1), st.floats(-20, 20))
def test_shift_decomposition(seed, delta):
    rng = np.random.default_rng(seed)
    tab = random_table(rng, 50)
    rule = threshold_rule(0, 0.0)
    if rule(tab.covariates).sum() in (0, 50):
        return
    n = 40
    change = variance_difference_ex_ante_vs_ex_post(tab.shifted(delta), rule, n) - variance_difference_ex_ante_vs_ex_post(tab, rule, n)
    f = rule(tab.covariates).tolist()
    ref = oracles.shift_change_closed_form(tab.y1.tolist(), tab.y0.tolist(), f, n, delta)
    assert change == pytest.approx(ref, abs=1e-10)
    assert shift_change_in_difference(tab, rule, n, delta) == pytest.approx(ref, abs=1e-10)
