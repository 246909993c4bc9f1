"""K-fold cross-fitting evaluation of a scoring algorithm.

Each fold is scored by a rule trained on the other K - 1 folds. Folds are
stratified so each holds exactly m1 treated and m0 control units, and the
pooled estimate is the mean of the K fold estimates. Its variance combines
the per-fold plug-ins with the across-fold spread of the estimates.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import (
    Estimand,
    Estimate,
    ExperimentDataset,
    PlanKind,
    RandomizationPlan,
    SeedLike,
    TreatmentRule,
    _frozen,
    as_generator,
    spawn_seeds,
)
from .errors import DomainError, Indivisible, TrainFailure
from .estimators import CLIPPED, DEGENERATE_RULE, estimate_pape, estimate_pav

HEURISTIC = "HEURISTIC"
MISSING_FOLD_VARIANCE = "MISSING_FOLD_VARIANCE"

ScoreFn = Callable[[np.ndarray], np.ndarray]


# ---------------------------------------------------------------------------
# algorithms


class ScoringAlgorithm:
    """Training interface: data in, scoring function out.

    ``train`` receives the training covariates, treatment and outcome plus
    an integer seed and returns a function mapping a covariate matrix to
    real scores. The induced rule treats when the score is strictly
    positive. Set ``parallel_safe = False`` when training must not run
    concurrently.
    """

    name = "algorithm"
    parallel_safe = True

    def train(self, X: np.ndarray, T: np.ndarray, Y: np.ndarray, seed: int) -> ScoreFn:
        raise NotImplementedError


class ConstantScorer(ScoringAlgorithm):
    """Scores every unit with ``value``; treats everyone when it is positive."""

    def __init__(self, value: float = 1.0):
        self.value = float(value)
        self.name = f"constant({self.value:g})"

    def train(self, X, T, Y, seed):
        v = self.value
        return lambda x: np.full(np.asarray(x).shape[0], v)


class FixedRuleAlgorithm(ScoringAlgorithm):
    """Ignores the training data and returns a fixed rule."""

    def __init__(self, rule: TreatmentRule):
        self.rule = rule
        self.name = f"fixed({rule.label})"

    def train(self, X, T, Y, seed):
        rule = self.rule
        return lambda x: rule(x).astype(float) - 0.5


class StratumCATELearner(ScoringAlgorithm):
    """Difference in means within strata of one covariate.

    Strata are the intervals cut by ``cutpoints`` on column ``column``
    (a unit with value v falls in stratum ``searchsorted(cutpoints, v,
    side="right")``). A stratum's score is its treated mean minus its
    control mean; strata missing either arm fall back to the pooled
    difference in means.
    """

    def __init__(self, column: int, cutpoints: Sequence[float]):
        self.column = int(column)
        self.cutpoints = np.sort(np.asarray(cutpoints, dtype=float))
        self.n_strata = self.cutpoints.size + 1
        self.name = f"stratum-cate(x[{self.column}])"

    def strata(self, X: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.cutpoints, np.asarray(X, dtype=float)[:, self.column], side="right")

    def stratum_scores(self, X, T, Y) -> np.ndarray:
        s = self.strata(X)
        t = np.asarray(T) == 1
        y = np.asarray(Y, dtype=float)
        pooled = y[t].mean() - y[~t].mean() if t.any() and (~t).any() else 0.0
        k = self.n_strata
        c1 = np.bincount(s[t], minlength=k)
        c0 = np.bincount(s[~t], minlength=k)
        s1 = np.bincount(s[t], weights=y[t], minlength=k)
        s0 = np.bincount(s[~t], weights=y[~t], minlength=k)
        ok = (c1 > 0) & (c0 > 0)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(ok, s1 / np.maximum(c1, 1) - s0 / np.maximum(c0, 1), pooled)

    def train(self, X, T, Y, seed):
        scores = self.stratum_scores(X, T, Y)
        return lambda x: scores[self.strata(x)]


class BaselineRiskScorer(ScoringAlgorithm):
    """Treat units whose predicted control outcome exceeds a threshold.

    The baseline model is least squares of Y on (1, X) among training
    controls. ``threshold`` defaults to the median prediction over the
    training sample. With ``treat_high=False`` the rule treats low-risk
    units instead.
    """

    def __init__(self, threshold: Optional[float] = None, treat_high: bool = True):
        self.threshold = threshold
        self.treat_high = treat_high
        self.name = "baseline-risk"

    def train(self, X, T, Y, seed):
        X = np.asarray(X, dtype=float)
        c = np.asarray(T) == 0
        design = np.column_stack([np.ones(c.sum()), X[c]])
        beta, *_ = np.linalg.lstsq(design, np.asarray(Y, dtype=float)[c], rcond=None)
        pred = beta[0] + X @ beta[1:]
        cut = float(np.median(pred)) if self.threshold is None else float(self.threshold)
        sign = 1.0 if self.treat_high else -1.0

        def score(x):
            x = np.asarray(x, dtype=float)
            return sign * (beta[0] + x @ beta[1:] - cut)

        return score


# ---------------------------------------------------------------------------
# folds


@dataclass(frozen=True)
class FoldPlan:
    """Stratified K-way partition: every fold has m1 treated and m0 controls."""

    K: int
    assignment: np.ndarray
    m: int
    m1: int
    m0: int
    seed: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "assignment", _frozen(self.assignment, np.int64))

    @property
    def n(self) -> int:
        return int(self.assignment.size)

    def fold(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == k)

    def complement(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.assignment != k)

    def as_randomization_plan(self) -> RandomizationPlan:
        counts = {"n": self.n, "K": self.K, "m": self.m, "m1": self.m1, "m0": self.m0}
        return RandomizationPlan(PlanKind.FOLDED, counts, self.seed)

    def check(self, data: ExperimentDataset) -> None:
        if data.n != self.n:
            raise Indivisible(f"plan covers {self.n} units, data has {data.n}")
        t = data.treatment == 1
        for k in range(self.K):
            idx = self.assignment == k
            if idx.sum() != self.m or (idx & t).sum() != self.m1:
                raise Indivisible(f"fold {k} does not have m={self.m}, m1={self.m1}")


def suggest_k(n: int, n1: int, K: int) -> Optional[int]:
    """Nearest fold count >= 2 dividing both n and n1 (ties go to the larger)."""
    g = math.gcd(n, n1)
    candidates = [k for k in range(2, g + 1) if g % k == 0]
    if not candidates:
        return None
    return min(candidates, key=lambda k: (abs(k - K), -k))


def make_folds(data: ExperimentDataset, K: int, seed: SeedLike) -> FoldPlan:
    """Uniformly random stratified partition into K equal folds."""
    n, n1 = data.n, data.n1
    if K < 2:
        raise Indivisible(f"need K >= 2, got K={K}", suggestion=suggest_k(n, n1, 2))
    if n % K or n1 % K:
        s = suggest_k(n, n1, K)
        hint = f"; try K={s}" if s else ""
        raise Indivisible(f"K={K} must divide n={n} and n1={n1}{hint}", suggestion=s)
    rng = as_generator(seed)
    assignment = np.empty(n, dtype=np.int64)
    for arm in (1, 0):
        idx = np.flatnonzero(data.treatment == arm)
        perm = idx[rng.permutation(idx.size)]
        assignment[perm] = np.arange(idx.size) % K
    m, m1 = n // K, n1 // K
    plan_seed = int(seed) if isinstance(seed, (int, np.integer)) else None
    return FoldPlan(K, assignment, m, m1, m - m1, plan_seed)


# ---------------------------------------------------------------------------
# estimation


@dataclass(frozen=True)
class FoldResult:
    fold: int
    rule: str
    estimate: float
    p_hat: float
    variance_plugin: Optional[float]
    flags: Tuple[str, ...] = ()


@dataclass(frozen=True)
class CrossFitResult:
    estimand: Estimand
    per_fold: Tuple[FoldResult, ...]
    value: float
    std_error: Optional[float]
    components: Dict[str, float]
    flags: Tuple[str, ...]
    n: int
    n1: int
    n0: int

    def to_estimate(self) -> Estimate:
        p = float(np.mean([r.p_hat for r in self.per_fold]))
        return Estimate(self.value, self.std_error, self.estimand, self.n, self.n1, self.n0, p, self.components, self.flags)

    def to_dict(self) -> dict:
        out = self.to_estimate().to_dict()
        out["per_fold"] = [
            {
                "fold": r.fold,
                "rule": r.rule,
                "estimate": r.estimate,
                "p_hat": r.p_hat,
                "variance_plugin": r.variance_plugin,
                "flags": list(r.flags),
            }
            for r in self.per_fold
        ]
        return out


def nadeau_bengio_decomposition(
    fold_estimates: Sequence[float], within_fold_variance_plugins: Sequence[float], training_cov: float = 0.0
) -> Dict[str, float]:
    """Pooled cross-fitting variance from per-fold pieces.

    Returns ``v_single`` (mean plug-in plus ``training_cov``), ``s_f_sq``
    (sample variance of the fold estimates) and ``v_pooled`` =
    v_single - (K - 1) / K * s_f_sq, unclipped.
    """
    a = np.asarray(fold_estimates, dtype=float)
    K = a.size
    if K < 2:
        raise DomainError("need at least two folds")
    v_single = float(np.mean(within_fold_variance_plugins)) + training_cov
    s_f_sq = float(np.var(a, ddof=1))
    return {
        "v_single": v_single,
        "s_f_sq": s_f_sq,
        "training_cov": float(training_cov),
        "v_pooled": v_single - (K - 1) / K * s_f_sq,
    }


def _train_fold(data: ExperimentDataset, algo: ScoringAlgorithm, plan: FoldPlan, k: int, seed) -> np.ndarray:
    train_idx = plan.complement(k)
    test_idx = plan.fold(k)
    X = data.covariates
    try:
        score = algo.train(X[train_idx], data.treatment[train_idx], data.outcome[train_idx], seed)
        f = np.asarray(score(X[test_idx])).reshape(-1) > 0
    except Exception as exc:
        raise TrainFailure(f"training for fold {k} failed: {exc}", fold=k) from exc
    if f.size != test_idx.size:
        raise TrainFailure(f"fold {k}: scoring returned {f.size} values for {test_idx.size} units", fold=k)
    return f.astype(np.int8)


def _cross_fit(data, algo, plan, seed, estimator, estimand, workers) -> CrossFitResult:
    plan.check(data)
    seeds = [int(s.generate_state(1, np.uint64)[0]) for s in spawn_seeds(seed, plan.K)]

    def run(k):
        f = _train_fold(data, algo, plan, k, seeds[k])
        sub = data.subset(plan.fold(k))
        est = estimator(sub, f)
        var = None if est.std_error is None else est.variance_components.get("total", est.std_error**2)
        return FoldResult(k, f"{algo.name}[-{k}]", est.value, float(f.mean()), var, est.flags)

    if workers > 1 and algo.parallel_safe:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            folds = tuple(pool.map(run, range(plan.K)))
    else:
        folds = tuple(run(k) for k in range(plan.K))
    values = [r.estimate for r in folds]
    value = float(np.mean(values))
    flags: List[str] = []
    if estimand is Estimand.PAPE_CROSSFIT:
        flags.append(HEURISTIC)
        if any(DEGENERATE_RULE in r.flags for r in folds):
            flags.append(DEGENERATE_RULE)
    plugins = [r.variance_plugin for r in folds]
    se = None
    if any(v is None for v in plugins):
        flags.append(MISSING_FOLD_VARIANCE)
        comps = {"s_f_sq": float(np.var(values, ddof=1))}
    else:
        comps = nadeau_bengio_decomposition(values, plugins)
        total = comps["v_pooled"]
        if total < 0:
            flags.append(CLIPPED)
            total = 0.0
        comps["total"] = total
        se = math.sqrt(total)
    return CrossFitResult(estimand, folds, value, se, comps, tuple(flags), data.n, data.n1, data.n0)


def cross_fit_pav(
    data: ExperimentDataset, algo: ScoringAlgorithm, plan: FoldPlan, seed: SeedLike = 0, workers: int = 1
) -> CrossFitResult:
    """Cross-fitted PAV with the fold-correlation-corrected standard error.

    ``seed`` drives the algorithm (one derived seed per fold); the fold
    partition comes from ``plan``. The training-covariance term is taken
    as zero.
    """
    return _cross_fit(data, algo, plan, seed, estimate_pav, Estimand.PAV_CROSSFIT, workers)


def cross_fit_pape(
    data: ExperimentDataset, algo: ScoringAlgorithm, plan: FoldPlan, seed: SeedLike = 0, workers: int = 1
) -> CrossFitResult:
    """Cross-fitted PAPE: mean of per-fold PAPE estimates, each with its own p_hat.

    The standard error mirrors the PAV construction and is flagged
    HEURISTIC.
    """
    return _cross_fit(data, algo, plan, seed, estimate_pape, Estimand.PAPE_CROSSFIT, workers)
