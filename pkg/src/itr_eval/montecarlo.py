"""Monte Carlo engine for the numerical study scenarios.

Every replication draws a fresh sample of n units i.i.d. from a fixed
population table and randomises it, so table moments are the exact
population moments behind every oracle value. Replications run in fixed
size chunks; chunk c uses a seed derived from (seed, c) only, so results
do not depend on scheduling or on the number of workers.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import kernels as K_
from ._accel import resolve_backend
from .core import PotentialOutcomeTable, TreatmentRule, spawn_seeds
from .crossfit import StratumCATELearner
from .dgp import DgpSpec, generate_population, oracle_cate_rule
from .errors import BadCounts, DomainError
from .ex_ante import variance_difference_ex_ante_vs_ex_post
from .oracle import crossfit_truth, oracle_truth, rule_decisions
from .shift import default_shift_grid, optimal_shift, variance_penalty_pav

SCENARIOS = ("shift_curve", "ex_ante_vs_ex_post", "variance_fidelity", "crossfit_validation")
DEFAULT_CHUNK = 5000


# ---------------------------------------------------------------------------
# Monte Carlo error of reported moments


def mean_with_se(x: np.ndarray) -> Tuple[float, float]:
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def var_with_se(x: np.ndarray) -> Tuple[float, float]:
    """Sample variance and its large-sample standard error sqrt((m4 - s^4) / R)."""
    x = np.asarray(x, dtype=float)
    d = x - x.mean()
    s2 = float(np.var(x, ddof=1))
    m4 = float(np.mean(d**4))
    return s2, math.sqrt(max(m4 - s2 * s2, 0.0) / x.size)


def sd_with_se(x: np.ndarray) -> Tuple[float, float]:
    s2, se = var_with_se(x)
    sd = math.sqrt(s2)
    return sd, (se / (2 * sd) if sd > 0 else 0.0)


def var_difference_with_se(a: np.ndarray, b: np.ndarray) -> Tuple[float, float]:
    """Var(a) - Var(b) for paired replications, with its standard error."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    R = a.size
    d = (a - a.mean()) ** 2 - (b - b.mean()) ** 2
    return float(d.sum() / (R - 1)), float(d.std(ddof=1) / math.sqrt(R))


def cov_with_se(a: np.ndarray, b: np.ndarray) -> Tuple[float, float]:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    R = a.size
    c = (a - a.mean()) * (b - b.mean())
    return float(c.sum() / (R - 1)), float(c.std(ddof=1) / math.sqrt(R))


# ---------------------------------------------------------------------------
# chunked sampling


def _chunk_sizes(R: int, chunk: int) -> List[int]:
    if R < 0:
        raise DomainError("replications must be non-negative")
    full, rest = divmod(R, chunk)
    return [chunk] * full + ([rest] if rest else [])


def run_chunks(fn: Callable, R: int, seed, chunk: int = DEFAULT_CHUNK, workers: int = 1, backend=None) -> list:
    """Call ``fn(rng, size)`` once per chunk and return results in chunk order.

    Threads are only used with the numpy backend; numba kernels already
    parallelise internally.
    """
    sizes = _chunk_sizes(R, chunk)
    seeds = spawn_seeds(seed, len(sizes))
    jobs = [(np.random.default_rng(s), m) for s, m in zip(seeds, sizes)]
    if workers > 1 and resolve_backend(backend) == "numpy" and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda j: fn(*j), jobs))
    return [fn(*j) for j in jobs]


def _stack(parts: list, key: str) -> np.ndarray:
    return np.concatenate([p[key] for p in parts]) if parts else np.empty(0)


def _draw_units(rng, population: PotentialOutcomeTable, fpop: np.ndarray, size: int, n: int):
    idx = rng.integers(0, population.n, size=(size, n))
    return idx, population.y1[idx], population.y0[idx], fpop[idx]


def sample_fixed_rule(
    population: PotentialOutcomeTable,
    rule,
    n: int,
    n1: int,
    replications: int,
    seed,
    shifts: Optional[Sequence[float]] = None,
    chunk: int = DEFAULT_CHUNK,
    workers: int = 1,
    backend=None,
) -> Dict[str, np.ndarray]:
    """Ex-post replications: one column per ``kernels.FIXED_COLUMNS`` entry.

    With ``shifts``, ``pav_shifted`` is an (R, G) matrix of PAV estimates
    recomputed on outcomes shifted by each delta, on the same samples and
    assignments.
    """
    if not 1 <= n1 < n:
        raise BadCounts(f"need 1 <= n1 < n, got n={n}, n1={n1}")
    fpop = rule_decisions(rule, population)
    shifts = None if shifts is None else np.asarray(shifts, dtype=float)

    def fn(rng, size):
        _, y1, y0, f = _draw_units(rng, population, fpop, size, n)
        t = K_.complete_assignment(rng.random((size, n)), n1, backend)
        res = K_.fixed_rule_batch(y1, y0, f, t, backend)
        out = {name: res[:, j] for j, name in enumerate(K_.FIXED_COLUMNS)}
        if shifts is not None:
            out["pav_shifted"] = np.column_stack(
                [K_.fixed_rule_batch(y1 + d, y0 + d, f, t, backend)[:, K_.PAV] for d in shifts]
            ) if shifts.size else np.empty((size, 0))
        return out

    parts = run_chunks(fn, replications, seed, chunk, workers, backend)
    keys = list(K_.FIXED_COLUMNS) + (["pav_shifted"] if shifts is not None else [])
    if not parts:
        empty = {k: np.empty(0) for k in K_.FIXED_COLUMNS}
        if shifts is not None:
            empty["pav_shifted"] = np.empty((0, shifts.size))
        return empty
    return {k: _stack(parts, k) for k in keys}


def sample_designs(
    population: PotentialOutcomeTable,
    rule,
    n: int,
    replications: int,
    seed,
    n_f: Optional[int] = None,
    n_r1: Optional[int] = None,
    n1: Optional[int] = None,
    chunk: int = DEFAULT_CHUNK,
    workers: int = 1,
    backend=None,
) -> Dict[str, np.ndarray]:
    """Paired replications of both designs on the same sample of units.

    Each sample is randomised independently under the ex-post design
    (``n1`` treated, default n/2) and under the ex-ante design (``n_f`` in
    the rule arm, default n/2; ``n_r1`` treated in the random arm, default
    n/4). Design counts are fixed across replications.
    """
    n1 = n // 2 if n1 is None else n1
    n_f = n // 2 if n_f is None else n_f
    n_r1 = n // 4 if n_r1 is None else n_r1
    n_r = n - n_f
    if not (1 <= n1 < n and 1 <= n_f < n and 1 <= n_r1 < n_r):
        raise BadCounts(f"invalid design counts n={n}, n1={n1}, n_f={n_f}, n_r1={n_r1}")
    fpop = rule_decisions(rule, population)

    def fn(rng, size):
        _, y1, y0, f = _draw_units(rng, population, fpop, size, n)
        t_post = K_.complete_assignment(rng.random((size, n)), n1, backend)
        arm = K_.complete_assignment(rng.random((size, n)), n_f, backend)
        t_pre = K_.masked_assignment(rng.random((size, n)), 1 - arm, n_r1, backend)
        post = K_.fixed_rule_batch(y1, y0, f, t_post, backend)
        ante = K_.ex_ante_batch(y1, y0, f, arm, t_pre, backend)
        return {
            "pape_ex_post": post[:, K_.PAPE],
            "pape_ex_post_var": post[:, K_.PAPE_VAR],
            "pape_ex_ante": ante[:, K_.EXA_VALUE],
            "pape_ex_ante_var": ante[:, K_.EXA_VAR],
            "intermediate": ante[:, K_.EXA_INTERMEDIATE],
            "p_hat": ante[:, K_.EXA_P_HAT],
        }

    parts = run_chunks(fn, replications, seed, chunk, workers, backend)
    keys = ("pape_ex_post", "pape_ex_post_var", "pape_ex_ante", "pape_ex_ante_var", "intermediate", "p_hat")
    return {k: _stack(parts, k) for k in keys}


def sample_crossfit(
    population: PotentialOutcomeTable,
    learner: StratumCATELearner,
    n: int,
    n1: int,
    K: int,
    replications: int,
    seed,
    chunk: int = DEFAULT_CHUNK,
    workers: int = 1,
    backend=None,
) -> Dict[str, np.ndarray]:
    """Cross-fitting replications for the stratum learner; (R, K) fold matrices."""
    if n % K or n1 % K:
        raise BadCounts("K must divide n and n1")
    strata_pop = learner.strata(population.covariates)
    ones = np.ones(population.n, dtype=np.int8)

    def fn(rng, size):
        idx, y1, y0, _ = _draw_units(rng, population, ones, size, n)
        t = K_.complete_assignment(rng.random((size, n)), n1, backend)
        fold = K_.stratified_folds(rng.random((size, n)), t, K)
        pav, pape, pav_var = K_.stratum_crossfit_batch(
            y1, y0, t, fold, strata_pop[idx], learner.n_strata, K, backend
        )
        return {"fold_pav": pav, "fold_pape": pape, "fold_pav_var": pav_var}

    parts = run_chunks(fn, replications, seed, chunk, workers, backend)
    if not parts:
        return {k: np.empty((0, K)) for k in ("fold_pav", "fold_pape", "fold_pav_var")}
    return {k: np.concatenate([p[k] for p in parts]) for k in ("fold_pav", "fold_pape", "fold_pav_var")}


# ---------------------------------------------------------------------------
# scenarios


@dataclass(frozen=True)
class MonteCarloResult:
    """Per-replication columns, one plotting row per grid point, and a summary.

    ``summary`` is None when no replications were run.
    """

    scenario: str
    replications: Dict[str, np.ndarray]
    grid: List[dict] = field(default_factory=list)
    summary: Optional[dict] = None
    columns: Tuple[str, ...] = ()


SHIFT_COLUMNS = (
    "delta", "se_pav", "mc_err", "var_penalty", "var_penalty_mc_err", "var_penalty_theory", "rel_err",
)
DESIGN_COLUMNS = (
    "n", "se_ex_ante", "se_ex_post", "mc_err_ex_ante", "mc_err_ex_post", "se_ratio",
    "var_diff", "var_diff_mc_err", "var_diff_closed_form", "var_ex_ante_theory", "var_ex_post_theory",
)
FIDELITY_COLUMNS = ("estimator", "n", "var_empirical", "mc_err", "var_theory", "rel_err", "mean", "mean_mc_err", "truth")
CROSSFIT_COLUMNS = (
    "n", "K", "mean_pooled_pav", "mc_err", "lambda_F", "lambda_F_mc_err", "z",
    "var_single_fold", "mean_s_f_sq", "cov_between_folds", "cov_mc_err", "identity_rel_err",
    "var_pooled", "single_fold_variance_theory", "mean_pooled_pape", "pape_mc_err", "tau_F", "tau_F_mc_err",
)


def shift_scale(population: PotentialOutcomeTable, rule, n1: int, n0: int) -> float:
    """sqrt(V(PAV estimate) / V(B)): the shift at which the penalty rivals the variance."""
    truth = oracle_truth(population, rule, n1, n0)
    v_b = truth.p_f * (1 - truth.p_f) * (n1 + n0) / (n1 * n0)
    return math.sqrt(truth.variances["pav"] / v_b) if v_b > 0 else 1.0


def run_shift_curve(
    population: PotentialOutcomeTable,
    rule,
    n: int = 100,
    replications: int = 10_000,
    seed=0,
    grid: Optional[Sequence[float]] = None,
    points: int = 11,
    center: bool = True,
    **kw,
) -> MonteCarloResult:
    """Empirical PAV standard error across outcome shifts.

    With ``center`` the population is first shifted by the optimal delta so
    that n0/n kappa11 + n1/n kappa00 = 0 and delta = 0 is the optimum. The
    default grid has ``points`` values spanning +/-3 max(|delta*|,
    ``shift_scale``).
    """
    n1 = n // 2
    n0 = n - n1
    raw = oracle_truth(population, rule)
    raw_star = optimal_shift(raw.kappa11, raw.kappa00, n1, n0)
    pop = population.shifted(raw_star) if center else population
    truth = oracle_truth(pop, rule, n1, n0)
    d_star = optimal_shift(truth.kappa11, truth.kappa00, n1, n0)
    if grid is None:
        grid = default_shift_grid(d_star, points, scale=shift_scale(pop, rule, n1, n0))
    grid = np.asarray(grid, dtype=float)
    reps = sample_fixed_rule(pop, rule, n, n1, replications, seed, shifts=grid, **kw)
    if replications == 0:
        return MonteCarloResult("shift_curve", reps, [], None, SHIFT_COLUMNS)
    base = reps["pav"]
    rows = []
    for j, d in enumerate(grid):
        pav_d = reps["pav_shifted"][:, j]
        se, se_err = sd_with_se(pav_d)
        pen, pen_err = var_difference_with_se(pav_d, base)
        theory = variance_penalty_pav(float(d), truth.kappa11, truth.kappa00, truth.p_f, n1, n0)
        rel = abs(pen - theory) / abs(theory) if theory != 0 else abs(pen - theory)
        rows.append(dict(zip(SHIFT_COLUMNS, (float(d), se, se_err, pen, pen_err, theory, rel))))
    best = int(np.argmin([r["se_pav"] for r in rows]))
    nearest = int(np.argmin(np.abs(grid - d_star)))
    summary = {
        "n": n,
        "n1": n1,
        "n0": n0,
        "replications": replications,
        "centering_shift": raw_star if center else 0.0,
        "delta_star_pav": d_star,
        "argmin_delta": float(grid[best]),
        "nearest_grid_to_delta_star": float(grid[nearest]),
        "minimum_at_delta_star": best == nearest,
        "oracle": truth.to_dict(),
    }
    return MonteCarloResult("shift_curve", reps, rows, summary, SHIFT_COLUMNS)


def run_ex_ante_vs_ex_post(
    population: PotentialOutcomeTable,
    rule,
    n_grid: Sequence[int] = (100, 200, 300, 400, 500),
    replications: int = 10_000,
    seed=0,
    **kw,
) -> MonteCarloResult:
    """Empirical SEs of both PAPE estimators for each n in the balanced design."""
    for n in n_grid:
        if n % 4:
            raise BadCounts(f"balanced design needs n divisible by 4, got {n}")
    seeds = spawn_seeds(seed, len(n_grid))
    reps_all: Dict[str, np.ndarray] = {}
    rows = []
    for n, s in zip(n_grid, seeds):
        reps = sample_designs(population, rule, n, replications, s, **kw)
        for k, v in reps.items():
            reps_all[f"{k}@{n}"] = v
        if replications == 0:
            continue
        truth = oracle_truth(population, rule, n // 2, n - n // 2, (n // 2, n // 4, n - n // 2 - n // 4))
        ante, ante_err = sd_with_se(reps["pape_ex_ante"])
        post, post_err = sd_with_se(reps["pape_ex_post"])
        diff, diff_err = var_difference_with_se(reps["pape_ex_ante"], reps["pape_ex_post"])
        closed = variance_difference_ex_ante_vs_ex_post(population, rule, n)
        rows.append(dict(zip(DESIGN_COLUMNS, (
            n, ante, post, ante_err, post_err, ante / post, diff, diff_err, closed,
            truth.variances["pape_ex_ante"], truth.variances["pape"],
        ))))
    if replications == 0:
        return MonteCarloResult("ex_ante_vs_ex_post", reps_all, [], None, DESIGN_COLUMNS)
    summary = {
        "n_grid": list(n_grid),
        "replications": replications,
        "ordering_holds": all(r["se_ex_ante"] > r["se_ex_post"] for r in rows),
        "se_ratio": {str(r["n"]): r["se_ratio"] for r in rows},
    }
    return MonteCarloResult("ex_ante_vs_ex_post", reps_all, rows, summary, DESIGN_COLUMNS)


def run_variance_fidelity(
    population: PotentialOutcomeTable, rule, n: int = 200, replications: int = 10_000, seed=0, **kw
) -> MonteCarloResult:
    """Empirical variances of the PAV, PAPE and ex-ante PAPE estimators against theory."""
    if n % 4:
        raise BadCounts(f"n must be divisible by 4, got {n}")
    n1 = n // 2
    s_post, s_ante = spawn_seeds(seed, 2)
    post = sample_fixed_rule(population, rule, n, n1, replications, s_post, **kw)
    ante = sample_designs(population, rule, n, replications, s_ante, **kw)
    reps = {**post, "pape_ex_ante": ante["pape_ex_ante"]}
    if replications == 0:
        return MonteCarloResult("variance_fidelity", reps, [], None, FIDELITY_COLUMNS)
    truth = oracle_truth(population, rule, n1, n - n1, (n // 2, n // 4, n - n // 2 - n // 4))
    targets = {
        "ate": (post["ate"], truth.variances["ate"], truth.tau),
        "pav": (post["pav"], truth.variances["pav"], truth.lambda_f),
        "pape": (post["pape"], truth.variances["pape"], truth.tau_f),
        "pape_ex_ante": (ante["pape_ex_ante"], truth.variances["pape_ex_ante"], truth.tau_f),
    }
    rows = []
    for name, (x, theory, target) in targets.items():
        v, v_err = var_with_se(x)
        m, m_err = mean_with_se(x)
        rows.append(dict(zip(FIDELITY_COLUMNS, (name, n, v, v_err, theory, abs(v - theory) / theory, m, m_err, target))))
    summary = {"n": n, "replications": replications, "oracle": truth.to_dict()}
    return MonteCarloResult("variance_fidelity", reps, rows, summary, FIDELITY_COLUMNS)


def default_learner() -> StratumCATELearner:
    """Stratum learner on x29 (column 3 of the compact layout)."""
    return StratumCATELearner(3, (-0.5, 0.0, 0.5))


def run_crossfit_validation(
    population: PotentialOutcomeTable,
    learner: Optional[StratumCATELearner] = None,
    n_grid: Sequence[int] = (40, 80),
    k_grid: Sequence[int] = (2, 4),
    replications: int = 10_000,
    seed=0,
    draws: int = 1000,
    **kw,
) -> MonteCarloResult:
    """Cross-fitting replications against training-draw oracles for each (n, K)."""
    learner = default_learner() if learner is None else learner
    configs = [(n, k) for n in n_grid for k in k_grid]
    seeds = spawn_seeds(seed, 2 * len(configs))
    reps_all: Dict[str, np.ndarray] = {}
    rows = []
    for j, (n, k) in enumerate(configs):
        n1 = n // 2
        reps = sample_crossfit(population, learner, n, n1, k, replications, seeds[2 * j], **kw)
        for name, v in reps.items():
            reps_all[f"{name}@n{n}K{k}"] = v
        if replications == 0:
            continue
        cf = crossfit_truth(population, learner, n, n1, k, draws, seeds[2 * j + 1])
        a = reps["fold_pav"]
        pooled = a.mean(axis=1)
        m, m_err = mean_with_se(pooled)
        z = (m - cf.lambda_F) / math.hypot(m_err, cf.lambda_F_mc_se)
        v_single, _ = var_with_se(a.ravel())
        s_f = a.var(axis=1, ddof=1)
        cov, cov_err = _mean_pairwise_cov(a)
        identity = v_single - s_f.mean()
        rel = float(abs(cov - identity) / abs(cov)) if cov != 0 else float("inf")
        pm, pm_err = mean_with_se(reps["fold_pape"].mean(axis=1))
        rows.append(dict(zip(CROSSFIT_COLUMNS, (
            n, k, m, m_err, cf.lambda_F, cf.lambda_F_mc_se, z, v_single, float(s_f.mean()), cov, cov_err, rel,
            float(pooled.var(ddof=1)), cf.single_fold_variance, pm, pm_err, cf.tau_F, cf.tau_F_mc_se,
        ))))
    summary = None if replications == 0 else {"replications": replications, "draws": draws, "learner": learner.name}
    return MonteCarloResult("crossfit_validation", reps_all, rows, summary, CROSSFIT_COLUMNS)


def _mean_pairwise_cov(a: np.ndarray) -> Tuple[float, float]:
    """Average over fold pairs of the empirical covariance, with a standard error.

    The error is that of the per-replication average of centred pairwise
    products, so it accounts for dependence between pairs.
    """
    R, K = a.shape
    c = a - a.mean(axis=0)
    pair = (c.sum(axis=1) ** 2 - (c**2).sum(axis=1)) / (K * (K - 1))
    return float(pair.sum() / (R - 1)), float(pair.std(ddof=1) / math.sqrt(R))


def monte_carlo(
    spec: DgpSpec,
    scenario: str,
    replications: int,
    seed: int,
    population_size: int = 10**6,
    population: Optional[PotentialOutcomeTable] = None,
    rule: Optional[TreatmentRule] = None,
    **options,
) -> MonteCarloResult:
    """Run a named scenario on a population drawn from ``spec``.

    The population uses the first seed derived from ``seed`` and the
    replications the second, so changing the replication count never
    changes the population.
    """
    if scenario not in SCENARIOS:
        raise DomainError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")
    pop_seed, rep_seed = spawn_seeds(seed, 2)
    if population is None:
        population = generate_population(spec, population_size, pop_seed)
    rule = oracle_cate_rule() if rule is None else rule
    if scenario == "shift_curve":
        return run_shift_curve(population, rule, replications=replications, seed=rep_seed, **options)
    if scenario == "ex_ante_vs_ex_post":
        return run_ex_ante_vs_ex_post(population, rule, replications=replications, seed=rep_seed, **options)
    if scenario == "variance_fidelity":
        return run_variance_fidelity(population, rule, replications=replications, seed=rep_seed, **options)
    return run_crossfit_validation(population, replications=replications, seed=rep_seed, **options)
