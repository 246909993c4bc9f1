"""Sensitivity of the PAV and PAPE estimators to a constant outcome shift.

Adding delta to every outcome moves the PAV estimate by delta * B, where
B is the PAV estimator applied to the constant outcome 1. B has mean 1 but
is random, so the shift changes the variance. The penalty is a parabola in
delta whose vertex is the variance-minimising shift.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import ExperimentDataset, TreatmentRule
from .errors import DomainError, EmptyCell
from .estimators import RuleLike, decisions

PAPE_ORDER_CAVEAT = "PAPE_SHIFT_APPROX"


def variance_penalty_pav(delta: float, kappa11: float, kappa00: float, p_f: float, n1: int, n0: int) -> float:
    """V(PAV estimate on Y + delta) - V(PAV estimate on Y).

    ``kappa11`` is E(Y(1) | f = 1) and ``kappa00`` is E(Y(0) | f = 0).
    Negative values mean the shift reduces variance.
    """
    if not 0.0 <= p_f <= 1.0:
        raise DomainError("p_f must lie in [0, 1]")
    if n1 < 1 or n0 < 1:
        raise DomainError("n1 and n0 must be positive")
    n = n1 + n0
    return delta * p_f * (1 - p_f) * (2 * kappa11 / n1 + 2 * kappa00 / n0 + delta * n / (n1 * n0))


def optimal_shift(kappa11: float, kappa00: float, n1: int, n0: int) -> float:
    """Vertex of the PAV penalty parabola: -(n0/n kappa11 + n1/n kappa00)."""
    n = n1 + n0
    if n < 2:
        raise DomainError("need n1 + n0 >= 2")
    return -(n0 / n * kappa11 + n1 / n * kappa00)


def shift_factor(data: ExperimentDataset, rule: RuleLike) -> float:
    """B = (1/n1) sum T f + (1/n0) sum (1 - T)(1 - f)."""
    f = decisions(rule, data)
    t = data.treatment == 1
    return float(f[t].sum() / data.n1 + (1 - f[~t]).sum() / data.n0)


def estimate_kappas(data: ExperimentDataset, rule: RuleLike) -> Tuple[float, float]:
    """Cell means of Y over {T=1, f=1} and {T=0, f=0}."""
    f = decisions(rule, data) == 1
    t = data.treatment == 1
    c11, c00 = t & f, ~t & ~f
    if not c11.any():
        raise EmptyCell("no treated unit has f = 1")
    if not c00.any():
        raise EmptyCell("no control unit has f = 0")
    y = data.outcome
    return float(y[c11].mean()), float(y[c00].mean())


def default_shift_grid(delta_star: float, points: int = 11, scale: Optional[float] = None) -> np.ndarray:
    """Symmetric grid of ``points`` shifts around zero.

    The half-width is 3 * |delta_star|, or 3 when delta_star is 0. Passing
    ``scale`` widens it to 3 * max(|delta_star|, scale), useful when the
    outcome scale makes shifts of a few units invisible next to Monte
    Carlo noise.
    """
    if points < 2:
        raise DomainError("need at least two grid points")
    width = abs(delta_star) if delta_star != 0 else 1.0
    if scale is not None:
        width = max(abs(delta_star), abs(scale))
    return np.linspace(-3.0 * width, 3.0 * width, points)


@dataclass(frozen=True)
class ShiftDiagnostics:
    """Shift sensitivity summary for one rule and design.

    ``delta_star_pape`` equals ``delta_star_pav``; the true PAPE optimum
    differs by O(1/n), flagged by ``PAPE_SHIFT_APPROX``.
    """

    kappa11: float
    kappa00: float
    p_f: float
    n1: int
    n0: int
    delta_star_pav: float
    delta_star_pape: float
    penalty_curve: List[Tuple[float, float]] = field(default_factory=list)
    flags: Tuple[str, ...] = (PAPE_ORDER_CAVEAT,)

    def to_dict(self) -> dict:
        return {
            "kappa11": self.kappa11,
            "kappa00": self.kappa00,
            "p_f": self.p_f,
            "n1": self.n1,
            "n0": self.n0,
            "delta_star_pav": self.delta_star_pav,
            "delta_star_pape": self.delta_star_pape,
            "penalty_curve": [list(p) for p in self.penalty_curve],
            "flags": list(self.flags),
        }


def shift_diagnostics(
    kappa11: float, kappa00: float, p_f: float, n1: int, n0: int, grid: Optional[Sequence[float]] = None
) -> ShiftDiagnostics:
    """Diagnostics from given kappas (oracle or plug-in)."""
    d = optimal_shift(kappa11, kappa00, n1, n0)
    grid = default_shift_grid(d) if grid is None else np.asarray(grid, dtype=float)
    curve = [(float(x), variance_penalty_pav(float(x), kappa11, kappa00, p_f, n1, n0)) for x in grid]
    return ShiftDiagnostics(kappa11, kappa00, p_f, n1, n0, d, d, curve)


def diagnose_dataset(data: ExperimentDataset, rule: RuleLike, grid: Optional[Sequence[float]] = None) -> ShiftDiagnostics:
    """Plug-in diagnostics: kappas and p_f estimated from the observed data."""
    k11, k00 = estimate_kappas(data, rule)
    p = float(decisions(rule, data).mean())
    return shift_diagnostics(k11, k00, p, data.n1, data.n0, grid)


def diagnose_table(table, rule: TreatmentRule, n1: int, n0: int, grid: Optional[Sequence[float]] = None) -> ShiftDiagnostics:
    """Oracle diagnostics: kappas and p_f taken from a potential-outcome table."""
    from .oracle import oracle_truth

    truth = oracle_truth(table, rule)
    if truth.kappa11 is None or truth.kappa00 is None:
        raise EmptyCell("the rule treats everyone or no one; a kappa is undefined")
    return shift_diagnostics(truth.kappa11, truth.kappa00, truth.p_f, n1, n0, grid)
