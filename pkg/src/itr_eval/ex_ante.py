"""Ex-ante evaluation: randomise units between the rule and a random rule.

Units with ``arm == 1`` follow the rule; the rest form the random arm and
are completely randomised to treatment, with ``n_r1`` treated. The rule's
treated proportion p_hat is computed over the full sample, which is
possible because covariates are known before randomisation.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from .core import (
    Estimand,
    Estimate,
    PlanKind,
    PotentialOutcomeTable,
    RandomizationPlan,
    SeedLike,
    TreatmentRule,
    _frozen,
    as_generator,
)
from .errors import BadCounts, EmptyCell, LengthMismatch, Unroundable, ValidationError, Violation
from .estimators import ARM_TOO_SMALL, CLIPPED, DEGENERATE_RULE, _finish, pape_bracket

ALIGNMENT = "ALIGNMENT"
ROUNDED = "ROUNDED"
INTERMEDIATE = "INTERMEDIATE"


class DesignWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ExAnteDataset:
    """Observed data from an ex-ante experiment.

    ``treatment`` is the treatment actually received: the rule's decision
    for units in the rule arm, the randomised treatment otherwise.
    ``decisions`` holds the rule's decision for every unit.
    """

    covariates: np.ndarray
    arm: np.ndarray
    treatment: np.ndarray
    outcome: np.ndarray
    decisions: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.outcome, dtype=float).reshape(-1)
        n = y.size
        cols = {"arm": self.arm, "treatment": self.treatment, "decisions": self.decisions}
        for name, v in cols.items():
            if np.size(v) != n:
                raise LengthMismatch(f"{name} has length {np.size(v)}, outcome has {n}")
        x = np.asarray(self.covariates, dtype=float)
        if x.ndim == 1:
            x = x.reshape(n, -1)
        violations = []
        for name, v in cols.items():
            v = np.asarray(v).reshape(-1)
            for i in np.flatnonzero((v != 0) & (v != 1)):
                violations.append(Violation("BAD_BINARY", f"{name} value {v[i]} is not 0/1", int(i)))
        for i in np.flatnonzero(~np.isfinite(y)):
            violations.append(Violation("NONFINITE_OUTCOME", f"outcome {y[i]}", int(i)))
        if not violations:
            a = np.asarray(self.arm).reshape(-1)
            t = np.asarray(self.treatment).reshape(-1)
            d = np.asarray(self.decisions).reshape(-1)
            for i in np.flatnonzero((a == 1) & (t != d)):
                violations.append(
                    Violation("RULE_ARM_MISMATCH", "treatment differs from the rule in the rule arm", int(i))
                )
        if violations:
            raise ValidationError(violations)
        object.__setattr__(self, "covariates", _frozen(x))
        object.__setattr__(self, "outcome", _frozen(y))
        for name in cols:
            object.__setattr__(self, name, _frozen(np.asarray(getattr(self, name)).reshape(-1), np.int8))

    @classmethod
    def from_table(cls, table: PotentialOutcomeTable, decisions, arm, treatment) -> "ExAnteDataset":
        """Realise outcomes: Y(f) in the rule arm, Y(T) in the random arm.

        ``treatment`` is read only for random-arm units.
        """
        f = np.asarray(decisions).reshape(-1).astype(np.int8)
        a = np.asarray(arm).reshape(-1).astype(np.int8)
        t = np.asarray(treatment).reshape(-1).astype(np.int8)
        if not (f.size == a.size == t.size == table.n):
            raise LengthMismatch("decisions, arm and treatment must match the table size")
        received = np.where(a == 1, f, t)
        y = np.where(received == 1, table.y1, table.y0)
        return cls(table.covariates, a, received, y, f)

    @property
    def n(self) -> int:
        return int(self.outcome.size)

    @property
    def n_f(self) -> int:
        return int(self.arm.sum())

    @property
    def n_r(self) -> int:
        return self.n - self.n_f

    @property
    def n_r1(self) -> int:
        return int(np.sum((self.arm == 0) & (self.treatment == 1)))

    @property
    def n_r0(self) -> int:
        return self.n_r - self.n_r1

    @property
    def p_hat(self) -> float:
        return float(self.decisions.mean())

    def aligned(self, tol: float = 1e-12) -> bool:
        """Whether p_hat equals the random arm's treated share n_r1 / n_r."""
        return self.n_r > 0 and abs(self.p_hat - self.n_r1 / self.n_r) <= tol


@dataclass(frozen=True)
class ExAnteAssignment:
    plan: RandomizationPlan
    arm: np.ndarray
    treatment: np.ndarray
    decisions: np.ndarray


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def design_ex_ante(
    covariates,
    rule: TreatmentRule,
    n_f: int,
    seed: SeedLike,
    n_r1: Optional[int] = None,
    strict: bool = False,
) -> ExAnteAssignment:
    """Draw an ex-ante assignment.

    Parameters
    ----------
    covariates : (n, p) matrix, or a PotentialOutcomeTable
    rule : the rule under evaluation; decided for every unit up front
    n_f : size of the rule arm
    seed : seed for both randomisation stages
    n_r1 : treated count in the random arm. Defaults to p_hat * n_r when
        that is an integer. Otherwise it is rounded to the nearest integer
        with a :class:`DesignWarning`, or :class:`Unroundable` is raised
        when ``strict``.

    Returns
    -------
    ExAnteAssignment with ``arm`` drawn uniformly over the C(n, n_f)
    subsets and the random-arm treatment drawn uniformly over the
    C(n_r, n_r1) subsets. ``treatment`` holds the rule decision in the
    rule arm.
    """
    x = covariates.covariates if isinstance(covariates, PotentialOutcomeTable) else np.asarray(covariates, dtype=float)
    f = rule(x)
    n = f.size
    if not 1 <= n_f < n:
        raise BadCounts(f"need 1 <= n_f < n, got n_f={n_f}, n={n}")
    n_r = n - n_f
    p_hat = float(f.mean())
    flags = []
    if n_r1 is None:
        target = p_hat * n_r
        n_r1 = _round_half_up(target)
        if abs(target - n_r1) > 1e-9:
            if strict:
                raise Unroundable(f"p_hat * n_r = {target:g} is not an integer")
            warnings.warn(
                f"p_hat * n_r = {target:g} rounded to n_r1 = {n_r1}", DesignWarning, stacklevel=2
            )
            flags.append(ROUNDED)
    if not 0 <= n_r1 <= n_r:
        raise BadCounts(f"need 0 <= n_r1 <= n_r, got n_r1={n_r1}, n_r={n_r}")
    if abs(p_hat - n_r1 / n_r) > 1e-12:
        flags.append(ALIGNMENT)
    rng = as_generator(seed)
    arm = np.zeros(n, dtype=np.int8)
    arm[rng.permutation(n)[:n_f]] = 1
    rest = np.flatnonzero(arm == 0)
    t = np.zeros(n, dtype=np.int8)
    t[rest[rng.permutation(n_r)[:n_r1]]] = 1
    treatment = np.where(arm == 1, f, t).astype(np.int8)
    counts = {"n": n, "n_f": n_f, "n_r": n_r, "n_r1": n_r1, "n_r0": n_r - n_r1}
    plan_seed = seed if isinstance(seed, (int, np.integer)) else None
    plan = RandomizationPlan(PlanKind.EX_ANTE, counts, plan_seed, tuple(flags))
    return ExAnteAssignment(plan, _frozen(arm), _frozen(treatment), _frozen(f))


def _group_terms(data: ExAnteDataset):
    y, a, t = data.outcome, data.arm == 1, data.treatment == 1
    r1 = ~a & t
    r0 = ~a & ~t
    return y, a, r1, r0


def _mean_or_none(v, mask):
    return float(v[mask].mean()) if mask.any() else None


def estimate_pape_ex_ante(data: ExAnteDataset, rule: Optional[TreatmentRule] = None) -> Estimate:
    """Ex-ante PAPE estimator with a plug-in standard error.

    The random arm's treated and control means are weighted by p_hat and
    1 - p_hat. A group whose weight is zero may be empty. The standard
    error needs at least two units in the rule arm and in both random-arm
    groups; otherwise it is absent and ARM_TOO_SMALL is flagged.
    """
    if rule is not None:
        f = rule(data.covariates)
        if np.any(f != data.decisions):
            raise ValueError("rule disagrees with the decisions recorded in the dataset")
    n = data.n
    p = data.p_hat
    y, a, r1, r0 = _group_terms(data)
    n_f, n_r1, n_r0 = int(a.sum()), int(r1.sum()), int(r0.sum())
    if n_f == 0:
        raise EmptyCell("the rule arm is empty")
    mf = float(y[a].mean())
    m1 = _mean_or_none(y, r1)
    m0 = _mean_or_none(y, r0)
    if (m1 is None and p > 0) or (m0 is None and p < 1):
        raise EmptyCell("a random-arm group with positive weight is empty")
    inner = mf - (p * m1 if p > 0 else 0.0) - ((1 - p) * m0 if p < 1 else 0.0)
    value = n / (n - 1.0) * inner
    flags = [] if data.aligned() else [ALIGNMENT]
    comps, se = {}, None
    if min(n_f, n_r1, n_r0) < 2:
        flags.append(ARM_TOO_SMALL)
    else:
        sf = float(np.var(y[a], ddof=1))
        s1 = float(np.var(y[r1], ddof=1))
        s0 = float(np.var(y[r0], ddof=1))
        correction = pape_bracket(n, p, value, m1 - m0)
        total = (n / (n - 1.0)) ** 2 * (sf / n_f + p**2 * s1 / n_r1 + (1 - p) ** 2 * s0 / n_r0 + correction)
        comps = {"s_f_sq": sf, "s1_sq": s1, "s0_sq": s0, "correction": correction, "total": total}
        se = _finish(total, flags)
    if p in (0.0, 1.0):
        flags.append(DEGENERATE_RULE)
    return Estimate(value, se, Estimand.PAPE_EX_ANTE, n, n_r1, n_r0, p, comps, tuple(flags))


def estimate_intermediate(data: ExAnteDataset) -> Estimate:
    """Unweighted contrast: rule-arm mean minus random-arm mean.

    Equals (n - 1) / n times the ex-ante PAPE estimate whenever the design
    is aligned (p_hat = n_r1 / n_r).
    """
    y, a = data.outcome, data.arm == 1
    if a.all() or not a.any():
        raise EmptyCell("both arms need units")
    value = float(y[a].mean() - y[~a].mean())
    flags = [INTERMEDIATE] + ([] if data.aligned() else [ALIGNMENT])
    return Estimate(value, None, Estimand.PAPE_EX_ANTE, data.n, data.n_r1, data.n_r0, data.p_hat, {}, tuple(flags))


# ---------------------------------------------------------------------------
# comparison with the ex-post design


def _balanced_check(n: int):
    if n % 4 or n < 4:
        raise BadCounts(f"the balanced comparison needs n divisible by 4, got n={n}")


def _moments(table: PotentialOutcomeTable, rule):
    from .oracle import conditional_moments, rule_decisions

    f = rule_decisions(rule, table).astype(float)
    m = conditional_moments(table, f)
    return f, float(f.mean()), m


def variance_difference_ex_ante_vs_ex_post(table: PotentialOutcomeTable, rule, n: int) -> float:
    """Closed-form V(ex-ante PAPE) - V(ex-post PAPE) in the balanced design.

    Balanced means n1 = n0 = n_f = n_r = n/2 and n_r1 = n_r0 = n/4. Every
    moment is a table average.
    """
    _balanced_check(n)
    f, p, m = _moments(table, rule)
    y1, y0 = table.y1, table.y0
    q = 1 - p
    inner = (
        p**2 * np.var(y1)
        + q**2 * np.var(y0)
        - 2 * p * q * m["M00"] * m["M11"]
        + 2 * p**2 * (m["E11_sq"] - y1.mean() * m["M11"])
        + 2 * q**2 * (m["E00_sq"] - y0.mean() * m["M00"])
    )
    return float(2 * n / (n - 1.0) ** 2 * inner)


def variance_difference_lower_form(table: PotentialOutcomeTable, rule, n: int) -> float:
    """The manifestly non-negative rewriting valid under the centring conditions.

    Agrees with :func:`variance_difference_ex_ante_vs_ex_post` when
    E(Y(1) + Y(0) | f = t) = 0 for t = 0, 1.
    """
    _balanced_check(n)
    f, p, m = _moments(table, rule)
    q = 1 - p
    v11 = m["E11_sq"] - m["M11"] ** 2
    v00 = m["E00_sq"] - m["M00"] ** 2
    inner = (
        p**2 * np.var(table.y1)
        + q**2 * np.var(table.y0)
        + 2 * p**2 * v11
        + 2 * q**2 * v00
        + 2 * p * q * (q * m["M00"] ** 2 + p * m["M11"] ** 2)
    )
    return float(2 * n / (n - 1.0) ** 2 * inner)


def shift_change_in_difference(table: PotentialOutcomeTable, rule, n: int, delta: float) -> float:
    """Change in the variance difference when all outcomes are shifted by ``delta``."""
    _balanced_check(n)
    f, p, m = _moments(table, rule)
    q = 1 - p
    lin = p * (m["M00"] + m["M10"]) + q * (m["M11"] + m["M01"])
    return float(2 * n / (n - 1.0) ** 2 * (-2 * p * q * delta**2 - 2 * p * q * delta * lin))


def centre_within_rule_groups(table: PotentialOutcomeTable, rule) -> PotentialOutcomeTable:
    """Subtract the within-group mean of (Y(1) + Y(0)) / 2 in each rule group.

    The result satisfies E(Y(1) + Y(0) | f = t) = 0 for t = 0, 1.
    """
    from .oracle import rule_decisions

    f = rule_decisions(rule, table) == 1
    half = (table.y1 + table.y0) / 2
    shift = np.where(f, half[f].mean() if f.any() else 0.0, half[~f].mean() if (~f).any() else 0.0)
    return PotentialOutcomeTable(table.covariates, table.y1 - shift, table.y0 - shift, table.covariate_names)


def correct_on_average(table: PotentialOutcomeTable, rule, tol: float = 0.0) -> bool:
    """E(Y(t) | f = t) >= E(Y(t) | f = 1 - t) for both t."""
    from .oracle import conditional_moments

    try:
        m = conditional_moments(table, rule)
    except EmptyCell:
        return False
    return m["M11"] >= m["M10"] - tol and m["M00"] >= m["M01"] - tol
