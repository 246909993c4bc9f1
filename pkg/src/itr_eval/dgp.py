"""ACIC 2016 DGP 28 outcome model and a synthetic covariate population.

Only eight covariates enter the outcome model. Population tables store just
those eight columns, named ``x4, x17, ...``, in the order of
``ACIC_COVARIATES``. The empirical ACIC covariate file is not bundled; the
generator draws x4 and x42 as +/-1 with equal probability and the six
continuous covariates as standard normal.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .core import PotentialOutcomeTable, SeedLike, TreatmentRule, as_generator
from .errors import DomainError, MissingCovariate

ACIC_COVARIATES = (4, 17, 27, 29, 30, 37, 42, 54)
COVARIATE_NAMES = tuple(f"x{j}" for j in ACIC_COVARIATES)
BINARY_COVARIATES = ("x4", "x42")


def _columns(x, names: Optional[Sequence[str]]) -> dict:
    """Map ``"x4" ... "x54"`` to arrays, accepting several input layouts.

    Accepted inputs: a mapping keyed by ``"x17"`` or ``17``; a matrix whose
    columns are labelled by ``names``; an unlabelled matrix with exactly
    eight columns (compact layout) or at least 54 columns (column j-1 holds
    x_j).
    """
    if isinstance(x, Mapping):
        out = {}
        for j, name in zip(ACIC_COVARIATES, COVARIATE_NAMES):
            if name in x:
                out[name] = np.asarray(x[name], dtype=float)
            elif j in x:
                out[name] = np.asarray(x[j], dtype=float)
            else:
                raise MissingCovariate(f"covariate {name} is required by the outcome model")
        return out
    a = np.asarray(x, dtype=float)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if names is not None:
        names = list(names)
        missing = [c for c in COVARIATE_NAMES if c not in names]
        if missing:
            raise MissingCovariate(f"covariates {', '.join(missing)} are required by the outcome model")
        return {c: a[:, names.index(c)] for c in COVARIATE_NAMES}
    p = a.shape[1]
    if p == len(ACIC_COVARIATES):
        return {c: a[:, k] for k, c in enumerate(COVARIATE_NAMES)}
    if p >= max(ACIC_COVARIATES):
        return {c: a[:, j - 1] for j, c in zip(ACIC_COVARIATES, COVARIATE_NAMES)}
    raise MissingCovariate(
        f"cannot locate x4..x54 in an unlabelled matrix with {p} columns; pass names"
    )


def acic28_mean_outcome(x, t, names: Optional[Sequence[str]] = None) -> Union[float, np.ndarray]:
    """E(Y(t) | X = x) under DGP 28.

    Parameters
    ----------
    x : mapping, vector or (n, p) matrix
        Covariates; see ``_columns`` for the accepted layouts.
    t : 0/1 scalar or array broadcastable to the number of rows
    names : optional column labels for an array ``x``

    Returns
    -------
    float for a single unit given as a mapping of scalars or a vector,
    otherwise an array with one entry per row.
    """
    scalar = isinstance(x, Mapping) and all(np.ndim(v) == 0 for v in x.values())
    scalar = scalar or (not isinstance(x, Mapping) and np.ndim(x) == 1)
    c = _columns(x, names)
    x4, x17, x27, x29 = c["x4"], c["x17"], c["x27"], c["x29"]
    x30, x37, x42, x54 = c["x30"], c["x37"], c["x42"], c["x54"]
    t = np.asarray(t, dtype=float)
    if np.any((t != 0) & (t != 1)):
        raise DomainError("treatment must be 0 or 1")
    t1, t0 = t, 1.0 - t
    mu = (
        1.60
        + 0.53 * x29
        - 3.80 * x29 * (x29 - 0.98) * (x29 + 0.86)
        - 0.32 * (x17 > 0)
        + 0.21 * (x42 > 0)
        - 0.63 * x27
        + 4.68 * (x27 < -0.61)
        - 0.39 * (x27 + 0.91) * (x27 < -0.91)
        + 0.75 * (x30 <= 0)
        - 1.22 * (x54 <= 0)
        + 0.11 * x37 * (x4 <= 0)
        - 0.71 * (x17 <= 0) * t0
        - 1.82 * (x42 <= 0) * t1
        + 0.28 * (x30 <= 0) * t0
        + (0.58 * x29 - 9.42 * x29 * (x29 - 0.67) * (x29 + 0.34)) * t1
        + (0.44 * x27 - 4.87 * (x27 < -0.80)) * t0
        - 2.54 * t0 * (x54 <= 0)
    )
    mu = np.asarray(mu, dtype=float)
    return float(mu.reshape(-1)[0]) if scalar else mu


def acic28_cate(x, names: Optional[Sequence[str]] = None) -> np.ndarray:
    return acic28_mean_outcome(x, 1, names) - acic28_mean_outcome(x, 0, names)


@dataclass(frozen=True)
class DgpSpec:
    """Population generator settings.

    Attributes
    ----------
    noise_sd : standard deviation of the additive Gaussian noise, drawn
        independently for each potential outcome.
    binary_covariates : covariates drawn as +/-1 with probability 1/2; the
        rest are standard normal.
    outcome_model : only ``"acic28"`` is implemented.
    seed : default seed when ``generate_population`` is called without one.
    """

    noise_sd: float = 1.0
    binary_covariates: Sequence[str] = BINARY_COVARIATES
    outcome_model: str = "acic28"
    seed: Optional[int] = None

    def __post_init__(self):
        if not (np.isfinite(self.noise_sd) and self.noise_sd >= 0):
            raise DomainError("noise_sd must be finite and non-negative")
        if self.outcome_model != "acic28":
            raise DomainError(f"unknown outcome model {self.outcome_model!r}")
        unknown = set(self.binary_covariates) - set(COVARIATE_NAMES)
        if unknown:
            raise DomainError(f"unknown covariates {sorted(unknown)}")
        object.__setattr__(self, "binary_covariates", tuple(self.binary_covariates))


def draw_covariates(spec: DgpSpec, n: int, seed: SeedLike = None) -> np.ndarray:
    rng = as_generator(spec.seed if seed is None else seed)
    x = rng.standard_normal((n, len(COVARIATE_NAMES)))
    for name in spec.binary_covariates:
        k = COVARIATE_NAMES.index(name)
        x[:, k] = rng.choice(np.array([-1.0, 1.0]), size=n)
    return x


def generate_population(spec: DgpSpec, n: int, seed: SeedLike = None) -> PotentialOutcomeTable:
    """Draw ``n`` i.i.d. units with both potential outcomes."""
    if n < 1:
        raise DomainError("population size must be positive")
    rng = as_generator(spec.seed if seed is None else seed)
    x = draw_covariates(spec, n, rng)
    y1 = acic28_mean_outcome(x, 1) + spec.noise_sd * rng.standard_normal(n)
    y0 = acic28_mean_outcome(x, 0) + spec.noise_sd * rng.standard_normal(n)
    return PotentialOutcomeTable(x, y1, y0, COVARIATE_NAMES)


def oracle_cate_rule() -> TreatmentRule:
    """Treat when the true conditional effect is positive (compact layout)."""
    return TreatmentRule(lambda x: acic28_cate(x) > 0, "oracle-cate")
