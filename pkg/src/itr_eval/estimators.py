"""Difference-in-means estimators for a fixed treatment rule.

All estimators take an ex-post dataset from a completely randomised
experiment. Standard errors are plug-ins: each expected sample variance in
the exact variance expression is replaced by the within-arm sample variance
of the matching masked outcome, which is fully observed in that arm.
"""
from __future__ import annotations

import math
from typing import Optional, Union

import numpy as np

from .core import Estimand, Estimate, ExperimentDataset, TreatmentRule
from .errors import DomainError

RuleLike = Union[TreatmentRule, np.ndarray]

ARM_TOO_SMALL = "ARM_TOO_SMALL"
DEGENERATE_RULE = "DEGENERATE_RULE"
CLIPPED = "CLIPPED"
CONTRAST_SE = "CONTRAST_SE"
NO_STD_ERROR = "NO_STD_ERROR"


def decisions(rule: RuleLike, data: ExperimentDataset) -> np.ndarray:
    """Rule decisions for every unit; accepts a rule or a precomputed vector."""
    if isinstance(rule, TreatmentRule):
        return rule(data.covariates)
    f = np.asarray(rule).reshape(-1)
    if f.size != data.n:
        raise ValueError(f"decision vector has length {f.size}, dataset has {data.n} units")
    return f.astype(np.int8)


def _arm_var(values: np.ndarray, mask: np.ndarray) -> float:
    return float(np.var(values[mask], ddof=1))


def _finish(total: float, flags: list) -> Optional[float]:
    if not math.isfinite(total):
        return None
    if total < 0:
        flags.append(CLIPPED)
        total = 0.0
    return math.sqrt(total)


def estimate_ate(data: ExperimentDataset) -> Estimate:
    y, t = data.outcome, data.treatment == 1
    n1, n0 = data.n1, data.n0
    value = y[t].mean() - y[~t].mean()
    flags, comps, se = [], {}, None
    if n1 < 2 or n0 < 2:
        flags.append(ARM_TOO_SMALL)
    else:
        s1, s0 = _arm_var(y, t), _arm_var(y, ~t)
        comps = {"s1_sq": s1, "s0_sq": s0, "total": s1 / n1 + s0 / n0}
        se = math.sqrt(comps["total"])
    return Estimate(value, se, Estimand.ATE, data.n, n1, n0, None, comps, tuple(flags))


def estimate_pav(data: ExperimentDataset, rule: RuleLike) -> Estimate:
    """Population average value of ``rule``.

    Sums outcomes of treated units the rule would treat (scaled by 1/n1) and
    control units the rule would not treat (scaled by 1/n0).
    """
    f = decisions(rule, data)
    y, t = data.outcome, data.treatment == 1
    n1, n0 = data.n1, data.n0
    value = np.sum(y[t] * f[t]) / n1 + np.sum(y[~t] * (1 - f[~t])) / n0
    p_hat = float(f.mean())
    flags, comps, se = [], {}, None
    if n1 < 2 or n0 < 2:
        flags.append(ARM_TOO_SMALL)
    else:
        s1 = _arm_var(f * y, t)
        s0 = _arm_var((1 - f) * y, ~t)
        total = s1 / n1 + s0 / n0
        comps = {"s1_sq": s1, "s0_sq": s0, "total": total}
        se = _finish(total, flags)
    return Estimate(value, se, Estimand.PAV, data.n, n1, n0, p_hat, comps, tuple(flags))


def pape_bracket(n: int, p: float, tau_f: float, tau: float) -> float:
    """The finite-sample correlation term of the PAPE variance, already divided by n^2."""
    return (tau_f**2 - n * p * (1 - p) * tau**2 + 2 * (n - 1) * (2 * p - 1) * tau_f * tau) / n**2


def estimate_pape(data: ExperimentDataset, rule: RuleLike) -> Estimate:
    """Population average prescriptive effect of ``rule``.

    Compares the rule with random treatment of the same proportion of
    units. The n/(n-1) factor accounts for estimating that proportion.
    """
    f = decisions(rule, data)
    y, t = data.outcome, data.treatment == 1
    n, n1, n0 = data.n, data.n1, data.n0
    p_hat = float(f.mean())
    centred = (f - p_hat) * y
    value = n / (n - 1) * (centred[t].sum() / n1 - centred[~t].sum() / n0)
    flags, comps, se = [], {}, None
    if p_hat in (0.0, 1.0):
        flags.append(DEGENERATE_RULE)
        value = 0.0
    elif n1 < 2 or n0 < 2:
        flags.append(ARM_TOO_SMALL)
    else:
        s1 = _arm_var(centred, t)
        s0 = _arm_var(centred, ~t)
        tau = y[t].mean() - y[~t].mean()
        correction = float(pape_bracket(n, p_hat, float(value), float(tau)))
        total = float((n / (n - 1)) ** 2 * (s1 / n1 + s0 / n0 + correction))
        comps = {"s1_sq": s1, "s0_sq": s0, "correction": correction, "total": total}
        se = _finish(total, flags)
    return Estimate(value, se, Estimand.PAPE, n, n1, n0, p_hat, comps, tuple(flags))


def estimate_pav_difference(data: ExperimentDataset, rule_f: RuleLike, rule_g: RuleLike) -> Estimate:
    """PAV of ``rule_f`` minus PAV of ``rule_g`` on the same data.

    The standard error treats D_i = (1{f=T_i} - 1{g=T_i}) Y_i as the outcome
    of a single difference-in-means, so covariance between the two PAV
    estimates is accounted for.
    """
    f = decisions(rule_f, data)
    g = decisions(rule_g, data)
    y, t = data.outcome, data.treatment == 1
    n1, n0 = data.n1, data.n0
    tt = data.treatment.astype(np.int8)
    d = ((f == tt).astype(float) - (g == tt).astype(float)) * y
    value = d[t].sum() / n1 + d[~t].sum() / n0
    flags, comps, se = [CONTRAST_SE], {}, None
    if n1 < 2 or n0 < 2:
        flags.append(ARM_TOO_SMALL)
    else:
        s1, s0 = _arm_var(d, t), _arm_var(d, ~t)
        total = s1 / n1 + s0 / n0
        comps = {"s1_sq": s1, "s0_sq": s0, "total": total}
        se = _finish(total, flags)
    return Estimate(value, se, Estimand.PAV_DIFF, data.n, n1, n0, None, comps, tuple(flags))


def estimate_pape_difference(data: ExperimentDataset, rule_f: RuleLike, rule_g: RuleLike) -> Estimate:
    """Point estimate of PAPE(f) - PAPE(g); no standard error is offered.

    Comparing rules with different treated proportions through PAPE is
    hard to interpret; prefer :func:`estimate_pav_difference`.
    """
    a = estimate_pape(data, rule_f)
    b = estimate_pape(data, rule_g)
    return Estimate(
        a.value - b.value, None, Estimand.PAPE_DIFF, data.n, data.n1, data.n0, None, {}, (NO_STD_ERROR,)
    )


def pape_upper_bound(p_f: float, var_y1: float, var_y0: float) -> float:
    """Cauchy-Schwarz bound sqrt(2 p (1-p) (V(Y(1)) + V(Y(0)))) on the PAPE."""
    if var_y1 < 0 or var_y0 < 0:
        raise DomainError("variances must be non-negative")
    if not 0.0 <= p_f <= 1.0:
        raise DomainError("p_f must lie in [0, 1]")
    return math.sqrt(2.0 * p_f * (1.0 - p_f) * (var_y1 + var_y0))
