"""Shared data model: datasets, potential-outcome tables, rules, estimates.

Unit order is the identity of a unit throughout; nothing carries IDs.
Arrays stored on the frozen dataclasses are copied and marked read-only so
instances can be handed to concurrent workers without defensive copies.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import (
    BadCounts,
    LengthMismatch,
    RuleEvaluationError,
    ValidationError,
    Violation,
)

SeedLike = Union[int, np.integer, np.random.Generator, np.random.SeedSequence, None]


def _frozen(a, dtype=None) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def _as_matrix(x, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        raise ValueError("covariates must be at least one-dimensional")
    if x.ndim == 1:
        x = x.reshape(n, -1) if n and x.size == n else x.reshape(1, -1)
    return x


# ---------------------------------------------------------------------------
# randomness


def as_generator(seed: SeedLike) -> np.random.Generator:
    """Turn an int, SeedSequence or Generator into a Generator.

    Passing an existing Generator returns it unchanged, so callers can thread
    one stream through several draws.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    return np.random.default_rng(np.random.SeedSequence(seed))


def spawn_seeds(seed: Union[int, np.random.SeedSequence], k: int) -> list:
    """Derive ``k`` independent child seed sequences from one root seed.

    Child ``i`` depends only on (seed, i), so a replication computed on any
    worker in any order gets the same stream.
    """
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [
        np.random.SeedSequence(root.entropy, spawn_key=root.spawn_key + (i,))
        for i in range(k)
    ]


# ---------------------------------------------------------------------------
# data types


@dataclass(frozen=True)
class ExperimentDataset:
    """Observed (covariates, treatment, outcome) triples from one experiment."""

    covariates: np.ndarray
    treatment: np.ndarray
    outcome: np.ndarray
    covariate_names: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        y = np.asarray(self.outcome, dtype=float).reshape(-1)
        t = np.asarray(self.treatment).reshape(-1)
        x = _as_matrix(self.covariates, y.size)
        object.__setattr__(self, "outcome", _frozen(y))
        # non-binary values are kept as floats so validate_dataset can report them
        binary = bool(np.all((t == 0) | (t == 1)))
        object.__setattr__(self, "treatment", _frozen(t, dtype=np.int8 if binary else float))
        object.__setattr__(self, "covariates", _frozen(x))
        if self.covariate_names is not None:
            object.__setattr__(self, "covariate_names", tuple(self.covariate_names))

    @property
    def n(self) -> int:
        return int(self.outcome.size)

    @property
    def n1(self) -> int:
        return int(self.treatment.sum())

    @property
    def n0(self) -> int:
        return self.n - self.n1

    def with_outcome(self, outcome) -> "ExperimentDataset":
        return ExperimentDataset(self.covariates, self.treatment, outcome, self.covariate_names)

    def shifted(self, delta: float) -> "ExperimentDataset":
        return self.with_outcome(self.outcome + delta)

    def subset(self, index) -> "ExperimentDataset":
        index = np.asarray(index)
        return ExperimentDataset(
            self.covariates[index], self.treatment[index], self.outcome[index], self.covariate_names
        )


@dataclass(frozen=True)
class PotentialOutcomeTable:
    """Oracle-side table of both potential outcomes for every unit.

    Moments (``ate``, ``sigma1_sq``...) treat the table itself as the
    population, so variances use divisor N.
    """

    covariates: np.ndarray
    y1: np.ndarray
    y0: np.ndarray
    covariate_names: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        y1 = np.asarray(self.y1, dtype=float).reshape(-1)
        y0 = np.asarray(self.y0, dtype=float).reshape(-1)
        if y1.size != y0.size:
            raise LengthMismatch(f"y1 has {y1.size} rows but y0 has {y0.size}")
        x = _as_matrix(self.covariates, y1.size)
        if x.shape[0] != y1.size:
            raise LengthMismatch(f"covariates have {x.shape[0]} rows but outcomes have {y1.size}")
        object.__setattr__(self, "y1", _frozen(y1))
        object.__setattr__(self, "y0", _frozen(y0))
        object.__setattr__(self, "covariates", _frozen(x))
        if self.covariate_names is not None:
            object.__setattr__(self, "covariate_names", tuple(self.covariate_names))

    @property
    def n(self) -> int:
        return int(self.y1.size)

    @property
    def ite(self) -> np.ndarray:
        return self.y1 - self.y0

    @property
    def ate(self) -> float:
        return float(np.mean(self.ite))

    @property
    def sigma1_sq(self) -> float:
        return float(np.var(self.y1))

    @property
    def sigma0_sq(self) -> float:
        return float(np.var(self.y0))

    def take(self, index) -> "PotentialOutcomeTable":
        index = np.asarray(index)
        return PotentialOutcomeTable(
            self.covariates[index], self.y1[index], self.y0[index], self.covariate_names
        )

    def shifted(self, delta: float) -> "PotentialOutcomeTable":
        return PotentialOutcomeTable(
            self.covariates, self.y1 + delta, self.y0 + delta, self.covariate_names
        )


@dataclass(frozen=True)
class TreatmentRule:
    """Deterministic covariates -> {0, 1} map.

    ``assign`` is vectorised: it receives an ``(n, p)`` covariate matrix and
    returns ``n`` binary decisions.
    """

    assign: Callable[[np.ndarray], np.ndarray]
    label: str = ""

    def __call__(self, covariates) -> np.ndarray:
        x = np.asarray(covariates, dtype=float)
        if x.ndim == 1:
            x = x.reshape(1, -1)
        try:
            out = np.asarray(self.assign(x))
        except Exception as exc:
            raise RuleEvaluationError(
                f"rule {self.label or '<unnamed>'} failed: {exc}", index=_first_failing_row(self.assign, x)
            ) from exc
        out = out.reshape(-1)
        if out.size != x.shape[0]:
            raise RuleEvaluationError(
                f"rule returned {out.size} decisions for {x.shape[0]} units"
            )
        if out.dtype == bool:
            return out.astype(np.int8)
        bad = np.flatnonzero((out != 0) & (out != 1))
        if bad.size:
            raise RuleEvaluationError(
                f"rule returned non-binary value {out[bad[0]]!r}", index=int(bad[0])
            )
        return out.astype(np.int8)


def _first_failing_row(assign, x) -> Optional[int]:
    for i in range(x.shape[0]):
        try:
            assign(x[i : i + 1])
        except Exception:
            return i
    return None


def constant_rule(value: int) -> TreatmentRule:
    if value not in (0, 1):
        raise ValueError("constant rule value must be 0 or 1")
    return TreatmentRule(lambda x: np.full(x.shape[0], value, dtype=np.int8), f"constant-{value}")


def threshold_rule(column: int, threshold: float) -> TreatmentRule:
    """Treat when covariate ``column`` is strictly above ``threshold``."""
    return TreatmentRule(lambda x: x[:, column] > threshold, f"x[{column}]>{threshold:g}")


def linear_rule(coef: Sequence[float], intercept: float = 0.0, label: str = "") -> TreatmentRule:
    coef = np.asarray(coef, dtype=float)
    return TreatmentRule(lambda x: x @ coef + intercept > 0, label or "linear")


def score_rule(score: Callable[[np.ndarray], np.ndarray], label: str = "") -> TreatmentRule:
    """ITR induced by a scoring function: treat when score(x) > 0."""
    return TreatmentRule(lambda x: np.asarray(score(x)) > 0, label or "score")


def column_rule(column: int, label: str = "") -> TreatmentRule:
    """Read a precomputed 0/1 assignment from a covariate column."""
    return TreatmentRule(lambda x: x[:, column], label or f"column[{column}]")


class Estimand(str, enum.Enum):
    ATE = "ATE"
    PAV = "PAV"
    PAPE = "PAPE"
    PAV_DIFF = "PAV_DIFF"
    PAPE_DIFF = "PAPE_DIFF"
    PAPE_EX_ANTE = "PAPE_EX_ANTE"
    PAV_CROSSFIT = "PAV_CROSSFIT"
    PAPE_CROSSFIT = "PAPE_CROSSFIT"


@dataclass(frozen=True)
class Estimate:
    value: float
    std_error: Optional[float]
    estimand: Estimand
    n: int
    n1: int
    n0: int
    treated_proportion: Optional[float] = None
    variance_components: Mapping[str, float] = field(default_factory=dict)
    flags: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.std_error is not None:
            se = float(self.std_error)
            if not (math.isfinite(se) and se >= 0):
                raise ValueError(f"std_error must be finite and >= 0, got {se}")
            object.__setattr__(self, "std_error", se)
        if self.treated_proportion is not None and not 0.0 <= self.treated_proportion <= 1.0:
            raise ValueError("treated_proportion must lie in [0, 1]")
        object.__setattr__(self, "value", float(self.value))
        object.__setattr__(self, "estimand", Estimand(self.estimand))
        object.__setattr__(self, "flags", tuple(self.flags))

    def confidence_interval(self, level: float = 0.95) -> Optional[Tuple[float, float]]:
        """Normal-approximation interval, or None without a standard error."""
        if self.std_error is None:
            return None
        from scipy.stats import norm

        z = float(norm.ppf(0.5 + level / 2))
        return (self.value - z * self.std_error, self.value + z * self.std_error)

    def to_dict(self) -> dict:
        ci = self.confidence_interval()
        return {
            "estimand": self.estimand.value,
            "value": self.value,
            "std_error": self.std_error,
            "ci95": list(ci) if ci else None,
            "n": self.n,
            "n1": self.n1,
            "n0": self.n0,
            "treated_proportion": self.treated_proportion,
            "variance_components": {k: float(v) for k, v in self.variance_components.items()},
            "flags": list(self.flags),
        }


class PlanKind(str, enum.Enum):
    COMPLETE = "COMPLETE"
    EX_ANTE = "EX_ANTE"
    FOLDED = "FOLDED"


@dataclass(frozen=True)
class RandomizationPlan:
    kind: PlanKind
    counts: Mapping[str, int]
    seed: Optional[int] = None
    flags: Tuple[str, ...] = ()

    def __post_init__(self):
        c = dict(self.counts)
        kind = PlanKind(self.kind)
        if kind is PlanKind.COMPLETE:
            if c["n1"] + c["n0"] != c.get("n", c["n1"] + c["n0"]):
                raise BadCounts("n1 + n0 must equal n")
        elif kind is PlanKind.EX_ANTE:
            if c["n_r"] != c["n"] - c["n_f"] or c["n_r0"] != c["n_r"] - c["n_r1"]:
                raise BadCounts("ex-ante counts must satisfy n_r = n - n_f and n_r0 = n_r - n_r1")
        elif kind is PlanKind.FOLDED:
            if c["m"] * c["K"] != c["n"] or c["m0"] != c["m"] - c["m1"]:
                raise BadCounts("fold counts must satisfy m = n / K and m0 = m - m1")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "counts", c)


# ---------------------------------------------------------------------------
# operations


def make_dataset(covariates, treatment, outcome, covariate_names=None) -> ExperimentDataset:
    """Build a dataset from raw sequences, reporting every violation found."""
    violations = []
    outcome = list(outcome)
    treatment = list(treatment)
    rows = list(covariates)
    if len(treatment) != len(outcome) or len(rows) != len(outcome):
        raise LengthMismatch(
            f"{len(rows)} covariate rows, {len(treatment)} treatments, {len(outcome)} outcomes"
        )
    widths = [np.size(r) for r in rows]
    if widths:
        expected = max(set(widths), key=widths.count)
        for i, w in enumerate(widths):
            if w != expected:
                violations.append(
                    Violation("RAGGED_COVARIATES", f"{w} covariates, expected {expected}", i)
                )
    if violations:
        raise ValidationError(violations)
    x = np.asarray([np.ravel(r) for r in rows], dtype=float).reshape(len(rows), -1)
    data = ExperimentDataset(x, np.asarray(treatment, dtype=float), np.asarray(outcome, dtype=float), covariate_names)
    return validate_dataset(data)


def validate_dataset(data: ExperimentDataset) -> ExperimentDataset:
    """Return ``data`` unchanged if it satisfies the dataset invariants."""
    violations = []
    t = data.treatment
    for i in np.flatnonzero((t != 0) & (t != 1)):
        violations.append(Violation("BAD_TREATMENT", f"treatment {t[i]} is not 0/1", int(i)))
    if data.covariates.shape[0] != data.n or t.size != data.n:
        violations.append(Violation("LENGTH_MISMATCH", "columns have different lengths"))
    for i in np.flatnonzero(~np.isfinite(data.outcome)):
        violations.append(Violation("NONFINITE_OUTCOME", f"outcome {data.outcome[i]}", int(i)))
    n1 = int(np.sum(t == 1))
    n0 = int(np.sum(t == 0))
    if n1 == 0 or n0 == 0:
        violations.append(Violation("EMPTY_ARM", f"n1={n1}, n0={n0}; both arms need units"))
    if violations:
        raise ValidationError(violations)
    return data


def apply_rule(rule: TreatmentRule, data) -> Tuple[np.ndarray, float]:
    """Evaluate ``rule`` on every unit; returns (decisions, treated proportion)."""
    x = data.covariates if hasattr(data, "covariates") else np.asarray(data, dtype=float)
    f = rule(x)
    return f, float(f.mean()) if f.size else float("nan")


def realize(table: PotentialOutcomeTable, treatment) -> ExperimentDataset:
    t = np.asarray(treatment).reshape(-1)
    if t.size != table.n:
        raise LengthMismatch(f"treatment has length {t.size}, table has {table.n} rows")
    y = np.where(t == 1, table.y1, table.y0)
    return ExperimentDataset(table.covariates, t, y, table.covariate_names)


def draw_complete_randomization(n: int, n1: int, seed: SeedLike) -> np.ndarray:
    """Uniform draw over the C(n, n1) assignments with exactly n1 treated."""
    if not (1 <= n1 < n):
        raise BadCounts(f"need 1 <= n1 < n, got n={n}, n1={n1}")
    rng = as_generator(seed)
    t = np.zeros(n, dtype=np.int8)
    t[rng.permutation(n)[:n1]] = 1
    return t
