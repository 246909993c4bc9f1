"""Ground truth computed from full potential-outcome tables.

Two sampling models appear here.

* Superpopulation: a sample of size n is drawn i.i.d. (with replacement)
  from the table, then randomised. Table moments are the population
  moments, and theorem variances are assembled exactly, with the
  expectations of sample-variance terms evaluated by ``moments``.
* Conditional: the table *is* the sample, and only the assignment is
  random. ``enumerate_randomizations`` averages over every assignment and
  ``conditional_expectation`` / ``conditional_variance`` give the matching
  closed forms.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .core import (
    PotentialOutcomeTable,
    SeedLike,
    TreatmentRule,
    as_generator,
    draw_complete_randomization,
    realize,
    spawn_seeds,
)
from .errors import BadCounts, DomainError, EmptyCell, TooLarge
from .estimators import estimate_ate, estimate_pape, estimate_pav, estimate_pav_difference, pape_bracket
from .moments import centred_contrast_moments, expected_sample_variance_centred, expected_weighted_sample_variance

RuleLike = Union[TreatmentRule, np.ndarray]
MAX_ENUMERATION = 10**6

ESTIMATOR_TAGS = ("ATE", "PAV", "PAPE", "PAV_DIFF", "PAPE_EX_ANTE", "EX_ANTE_INTERMEDIATE")


def rule_decisions(rule: RuleLike, table: PotentialOutcomeTable) -> np.ndarray:
    if isinstance(rule, TreatmentRule):
        return rule(table.covariates)
    f = np.asarray(rule).reshape(-1)
    if f.size != table.n:
        raise ValueError(f"decision vector has length {f.size}, table has {table.n} rows")
    return f.astype(np.int8)


# ---------------------------------------------------------------------------
# superpopulation truth


@dataclass(frozen=True)
class OracleTruth:
    """Estimands and theorem variances for one (table, rule, design).

    ``variances`` holds the exact sampling variance of each estimator under
    the superpopulation model for the design counts given; ``moment_se``
    holds the standard error of each table moment as an estimate of the
    moment of the infinite population the table was drawn from.
    """

    lambda_f: float
    tau_f: float
    p_f: float
    tau: float
    sigma1_sq: float
    sigma0_sq: float
    ite_variance: float
    normalized_pape: float
    kappa11: Optional[float]
    kappa00: Optional[float]
    table_size: int
    variances: Mapping[str, float] = field(default_factory=dict)
    moment_se: Mapping[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in (
            "lambda_f", "tau_f", "p_f", "tau", "sigma1_sq", "sigma0_sq", "ite_variance",
            "normalized_pape", "kappa11", "kappa00", "table_size",
        )}
        out["variances"] = dict(self.variances)
        out["moment_se"] = dict(self.moment_se)
        return out


def pav_variance(table: PotentialOutcomeTable, f: np.ndarray, n1: int, n0: int) -> float:
    """Exact variance of the PAV estimator (population variances of masked outcomes)."""
    return float(np.var(f * table.y1) / n1 + np.var((1 - f) * table.y0) / n0)


def pape_variance(table: PotentialOutcomeTable, f: np.ndarray, n1: int, n0: int) -> float:
    n = n1 + n0
    f = f.astype(float)
    p = float(f.mean())
    tau = table.ate
    tau_f = float(np.mean(f * table.ite) - p * tau)
    s1 = expected_sample_variance_centred(f, table.y1, n)
    s0 = expected_sample_variance_centred(f, table.y0, n)
    return (n / (n - 1.0)) ** 2 * (s1 / n1 + s0 / n0 + pape_bracket(n, p, tau_f, tau))


def pape_ex_ante_variance(table: PotentialOutcomeTable, f: np.ndarray, n_f: int, n_r1: int, n_r0: int) -> float:
    """Exact variance of the ex-ante PAPE estimator with design counts held fixed."""
    n = n_f + n_r1 + n_r0
    f = f.astype(float)
    p = float(f.mean())
    tau = table.ate
    tau_f = float(np.mean(f * table.ite) - p * tau)
    yf = np.where(f == 1, table.y1, table.y0)
    e1 = expected_weighted_sample_variance(f, table.y1, n)
    e0 = expected_weighted_sample_variance(1 - f, table.y0, n)
    return (n / (n - 1.0)) ** 2 * (float(np.var(yf)) / n_f + e1 / n_r1 + e0 / n_r0 + pape_bracket(n, p, tau_f, tau))


def pape_variance_total(table: PotentialOutcomeTable, f: np.ndarray, n1: int, n0: int) -> float:
    """Same quantity as :func:`pape_variance` by the law of total variance.

    Sums the expected conditional (randomisation) variance and the
    variance of the conditional mean, an independent route used as a
    cross-check.
    """
    n = n1 + n0
    f = f.astype(float)
    s1 = expected_sample_variance_centred(f, table.y1, n)
    s0 = expected_sample_variance_centred(f, table.y0, n)
    _, var_mean, es2 = centred_contrast_moments(f, table.ite, n)
    return (n / (n - 1.0)) ** 2 * (s1 / n1 + s0 / n0 - es2 / n + var_mean)


def _cell_mean(v: np.ndarray, mask: np.ndarray, name: str) -> float:
    if not mask.any():
        raise EmptyCell(f"{name}: conditioning set is empty")
    return float(v[mask].mean())


def oracle_truth(
    table: PotentialOutcomeTable,
    rule: RuleLike,
    n1: Optional[int] = None,
    n0: Optional[int] = None,
    ex_ante_counts: Optional[Tuple[int, int, int]] = None,
) -> OracleTruth:
    """Every estimand of ``rule`` on ``table``, plus theorem variances.

    Parameters
    ----------
    n1, n0 : ex-post arm sizes; when given, ATE/PAV/PAPE variances are added.
    ex_ante_counts : ``(n_f, n_r1, n_r0)``; when given, the ex-ante PAPE
        variance is added.

    The conditional means ``kappa11``/``kappa00`` are None when their
    conditioning set is empty.
    """
    f = rule_decisions(rule, table).astype(float)
    y1, y0, ite = table.y1, table.y0, table.ite
    p = float(f.mean())
    tau = table.ate
    yf = np.where(f == 1, y1, y0)
    lam = float(yf.mean())
    tau_f = float(np.mean(f * ite) - p * tau)
    ite_var = float(np.var(ite))
    denom = math.sqrt(p * (1 - p) * ite_var)
    corr = tau_f / denom if denom > 0 else 0.0
    corr = min(1.0, max(-1.0, corr))
    k11 = float(y1[f == 1].mean()) if (f == 1).any() else None
    k00 = float(y0[f == 0].mean()) if (f == 0).any() else None
    N = table.n
    root = math.sqrt(N)
    moment_se = {
        "lambda_f": float(np.std(yf)) / root,
        "tau_f": float(np.std((f - p) * (ite - tau))) / root,
        "p_f": math.sqrt(p * (1 - p)) / root,
        "tau": math.sqrt(ite_var) / root,
    }
    variances: Dict[str, float] = {}
    if n1 is not None and n0 is not None:
        if n1 < 1 or n0 < 1:
            raise BadCounts("n1 and n0 must be positive")
        variances["ate"] = table.sigma1_sq / n1 + table.sigma0_sq / n0
        variances["pav"] = pav_variance(table, f, n1, n0)
        if 0 < p < 1:
            variances["pape"] = pape_variance(table, f, n1, n0)
    if ex_ante_counts is not None:
        n_f, n_r1, n_r0 = ex_ante_counts
        if min(n_f, n_r1, n_r0) < 1:
            raise BadCounts("ex-ante counts must all be positive")
        variances["pape_ex_ante"] = pape_ex_ante_variance(table, f, n_f, n_r1, n_r0)
    return OracleTruth(
        lambda_f=lam,
        tau_f=tau_f,
        p_f=p,
        tau=tau,
        sigma1_sq=table.sigma1_sq,
        sigma0_sq=table.sigma0_sq,
        ite_variance=ite_var,
        normalized_pape=corr,
        kappa11=k11,
        kappa00=k00,
        table_size=N,
        variances=variances,
        moment_se=moment_se,
    )


def conditional_moments(table: PotentialOutcomeTable, rule: RuleLike) -> Dict[str, float]:
    """M_st = E(Y(s) | f = t) and the second moments used by the ex-ante comparison."""
    f = rule_decisions(rule, table) == 1
    y1, y0 = table.y1, table.y0
    return {
        "M11": _cell_mean(y1, f, "E(Y(1)|f=1)"),
        "M01": _cell_mean(y0, f, "E(Y(0)|f=1)"),
        "M10": _cell_mean(y1, ~f, "E(Y(1)|f=0)"),
        "M00": _cell_mean(y0, ~f, "E(Y(0)|f=0)"),
        "E11_sq": _cell_mean(y1 * y1, f, "E(Y(1)^2|f=1)"),
        "E00_sq": _cell_mean(y0 * y0, ~f, "E(Y(0)^2|f=0)"),
    }


# ---------------------------------------------------------------------------
# conditional (table = sample) truth


def _s2(v: np.ndarray) -> float:
    return float(np.var(v, ddof=1))


def conditional_expectation(
    table: PotentialOutcomeTable,
    tag: str,
    rule: Optional[RuleLike] = None,
    rule2: Optional[RuleLike] = None,
    design: Optional[Mapping[str, int]] = None,
) -> float:
    """Closed-form mean of an estimator over all assignments of the table's units.

    For the intermediate estimator the random arm treats a share
    n_r1 / n_r of its units, taken from ``design`` when given; without a
    design the aligned share p_hat is assumed.
    """
    tag = tag.upper()
    y1, y0 = table.y1, table.y0
    n = table.n
    if tag == "ATE":
        return table.ate
    f = rule_decisions(rule, table).astype(float)
    yf = np.where(f == 1, y1, y0)
    if tag == "PAV":
        return float(yf.mean())
    if tag == "PAV_DIFF":
        g = rule_decisions(rule2, table)
        return float(np.mean(yf - np.where(g == 1, y1, y0)))
    # mean Y(f) minus the double sum over (i, j) of Y_i(1) f_j + Y_i(0)(1 - f_j)
    double = (np.sum(y1) * np.sum(f) + np.sum(y0) * np.sum(1 - f)) / n**2
    inner = float(yf.mean() - double)
    if tag == "EX_ANTE_INTERMEDIATE":
        if design is None:
            return inner
        q = design["n_r1"] / (n - design["n_f"])
        return float(yf.mean() - q * y1.mean() - (1 - q) * y0.mean())
    if tag in ("PAPE", "PAPE_EX_ANTE"):
        return n / (n - 1.0) * inner
    raise ValueError(f"unknown estimator tag {tag!r}")


def conditional_variance(
    table: PotentialOutcomeTable,
    tag: str,
    rule: Optional[RuleLike] = None,
    design: Optional[Mapping[str, int]] = None,
) -> float:
    """Closed-form randomisation variance with the table's units held fixed.

    ``design`` is ``{"n1": ...}`` for ex-post tags and ``{"n_f": ...,
    "n_r1": ...}`` for the ex-ante tags.
    """
    tag = tag.upper()
    design = dict(design or {})
    n = table.n
    y1, y0, ite = table.y1, table.y0, table.ite
    if tag in ("ATE", "PAV", "PAPE"):
        n1 = design["n1"]
        n0 = n - n1
        if tag == "ATE":
            return _s2(y1) / n1 + _s2(y0) / n0 - _s2(ite) / n
        f = rule_decisions(rule, table).astype(float)
        if tag == "PAV":
            yf = np.where(f == 1, y1, y0)
            return _s2(f * y1) / n1 + _s2((1 - f) * y0) / n0 - _s2(yf) / n
        p = f.mean()
        c = (f - p)
        return (n / (n - 1.0)) ** 2 * (_s2(c * y1) / n1 + _s2(c * y0) / n0 - _s2(c * ite) / n)
    if tag in ("PAPE_EX_ANTE", "EX_ANTE_INTERMEDIATE"):
        n_f, n_r1 = design["n_f"], design["n_r1"]
        n_r0 = n - n_f - n_r1
        f = rule_decisions(rule, table).astype(float)
        p = f.mean()
        yf = np.where(f == 1, y1, y0)
        v = _s2(yf) / n_f + p**2 * _s2(y1) / n_r1 + (1 - p) ** 2 * _s2(y0) / n_r0 - _s2((f - p) * ite) / n
        return (n / (n - 1.0)) ** 2 * v if tag == "PAPE_EX_ANTE" else v
    raise ValueError(f"conditional variance not available for {tag!r}")


@dataclass(frozen=True)
class EnumerationResult:
    tag: str
    mean: float
    variance: float
    count: int
    values: np.ndarray


def _count_assignments(tag: str, n: int, design: Mapping[str, int]) -> int:
    if tag in ("PAPE_EX_ANTE", "EX_ANTE_INTERMEDIATE"):
        n_f, n_r1 = design["n_f"], design["n_r1"]
        return math.comb(n, n_f) * math.comb(n - n_f, n_r1)
    return math.comb(n, design["n1"])


def enumerate_randomizations(
    table: PotentialOutcomeTable,
    tag: str,
    rule: Optional[RuleLike] = None,
    rule2: Optional[RuleLike] = None,
    design: Optional[Mapping[str, int]] = None,
) -> EnumerationResult:
    """Exact mean and variance of an estimator over every admissible assignment.

    Ex-post tags take ``design={"n1": k}``; ex-ante tags take
    ``design={"n_f": a, "n_r1": b}``. Variance uses divisor equal to the
    number of assignments (each assignment is equally likely).
    """
    from .ex_ante import ExAnteDataset, estimate_intermediate, estimate_pape_ex_ante

    tag = tag.upper()
    if tag not in ESTIMATOR_TAGS:
        raise ValueError(f"unknown estimator tag {tag!r}; expected one of {ESTIMATOR_TAGS}")
    design = dict(design or {})
    n = table.n
    total = _count_assignments(tag, n, design)
    if total > MAX_ENUMERATION:
        raise TooLarge(f"{total} assignments exceed the enumeration limit of {MAX_ENUMERATION}")
    values = []
    if tag in ("PAPE_EX_ANTE", "EX_ANTE_INTERMEDIATE"):
        n_f, n_r1 = design["n_f"], design["n_r1"]
        f = rule_decisions(rule, table)
        for arm_idx in itertools.combinations(range(n), n_f):
            arm = np.zeros(n, dtype=np.int8)
            arm[list(arm_idx)] = 1
            rest = np.flatnonzero(arm == 0)
            for tr in itertools.combinations(rest, n_r1):
                t = np.zeros(n, dtype=np.int8)
                t[list(tr)] = 1
                data = ExAnteDataset.from_table(table, f, arm, t)
                est = estimate_pape_ex_ante(data) if tag == "PAPE_EX_ANTE" else estimate_intermediate(data)
                values.append(est.value)
    else:
        n1 = design["n1"]
        for tr in itertools.combinations(range(n), n1):
            t = np.zeros(n, dtype=np.int8)
            t[list(tr)] = 1
            data = realize(table, t)
            if tag == "ATE":
                values.append(estimate_ate(data).value)
            elif tag == "PAV":
                values.append(estimate_pav(data, rule_decisions(rule, table)).value)
            elif tag == "PAPE":
                values.append(estimate_pape(data, rule_decisions(rule, table)).value)
            else:
                values.append(
                    estimate_pav_difference(data, rule_decisions(rule, table), rule_decisions(rule2, table)).value
                )
    v = np.asarray(values)
    return EnumerationResult(tag, float(v.mean()), float(v.var()), int(v.size), v)


# ---------------------------------------------------------------------------
# cross-fitting truth


@dataclass(frozen=True)
class CrossFitTruth:
    """Cross-fitting estimands of a training algorithm at training size n - m.

    ``fbar`` is the average trained rule on each table row. ``tau_F_cov`` is
    Cov(fbar, ITE) on the table, which equals ``tau_F`` by linearity.
    ``training_cov_term`` is the cross-fit variance's covariance-of-training term and
    ``single_fold_variance`` the exact variance of one fold's PAV estimate.
    Each ``*_mc_se`` is the Monte Carlo error from using finitely many
    training draws.
    """

    lambda_F: float
    p_F: float
    tau_F: float
    tau_F_cov: float
    fbar: np.ndarray
    training_cov_term: float
    single_fold_variance: float
    draws: int
    lambda_F_mc_se: float
    tau_F_mc_se: float
    p_F_mc_se: float


def crossfit_truth(
    table: PotentialOutcomeTable,
    algo,
    n: int,
    n1: int,
    K: int,
    draws: int = 200,
    seed: SeedLike = 0,
) -> CrossFitTruth:
    """Estimate lambda^F, p^F and tau^F by training on fresh draws of size n - m.

    Each draw samples n - m table rows with replacement, treats exactly
    n1 - m1 of them at random, trains ``algo`` and evaluates the induced
    rule on the whole table.
    """
    if n % K or n1 % K:
        raise BadCounts("K must divide n and n1")
    if draws < 2:
        raise DomainError("need at least two training draws")
    m, m1 = n // K, n1 // K
    m0 = m - m1
    n_train, n1_train = n - m, n1 - m1
    y1, y0, ite = table.y1, table.y0, table.ite
    if isinstance(seed, np.random.Generator):
        seed = int(seed.integers(2**63))
    seeds = spawn_seeds(seed, draws)
    lam = np.empty(draws)
    pf = np.empty(draws)
    tf = np.empty(draws)
    g = np.empty(draws)
    v1 = np.empty(draws)
    v0 = np.empty(draws)
    fsum = np.zeros(table.n)
    tau = table.ate
    for b, s in enumerate(seeds):
        rng = as_generator(s)
        idx = rng.integers(0, table.n, n_train)
        t = draw_complete_randomization(n_train, n1_train, rng)
        sample = realize(table.take(idx), t)
        score = algo.train(sample.covariates, sample.treatment, sample.outcome, rng.integers(2**63))
        f = (np.asarray(score(table.covariates)) > 0).astype(float)
        fsum += f
        p = f.mean()
        pf[b] = p
        g[b] = np.mean(f * ite)
        lam[b] = np.mean(y0) + g[b]
        tf[b] = g[b] - p * tau
        v1[b] = np.var(f * y1)
        v0[b] = np.var((1 - f) * y0)
    fbar = fsum / draws
    cov_term = float(np.var(g, ddof=1))
    v_single = float(v1.mean() / m1 + v0.mean() / m0 + cov_term)
    root = math.sqrt(draws)
    return CrossFitTruth(
        lambda_F=float(lam.mean()),
        p_F=float(pf.mean()),
        tau_F=float(tf.mean()),
        tau_F_cov=float(np.mean(fbar * ite) - fbar.mean() * tau),
        fbar=fbar,
        training_cov_term=cov_term,
        single_fold_variance=v_single,
        draws=draws,
        lambda_F_mc_se=float(np.std(lam, ddof=1)) / root,
        tau_F_mc_se=float(np.std(tf, ddof=1)) / root,
        p_F_mc_se=float(np.std(pf, ddof=1)) / root,
    )
