"""Experimental evaluation of individualized treatment rules.

Unbiased estimators and exact randomization variances for the population
average value (PAV) and prescriptive effect (PAPE) of a treatment rule,
under ex-post, ex-ante and cross-fitted designs, plus the oracles and
Monte Carlo harness used to check them.
"""
__version__ = "0.1.0"

from .core import (
    Estimand,
    Estimate,
    ExperimentDataset,
    PotentialOutcomeTable,
    RandomizationPlan,
    TreatmentRule,
    column_rule,
    constant_rule,
    draw_complete_randomization,
    linear_rule,
    make_dataset,
    realize,
    score_rule,
    threshold_rule,
    validate_dataset,
)
from .estimators import (
    estimate_ate,
    estimate_pape,
    estimate_pape_difference,
    estimate_pav,
    estimate_pav_difference,
    pape_upper_bound,
)
from .shift import optimal_shift, shift_diagnostics, variance_penalty_pav
from .ex_ante import design_ex_ante, estimate_intermediate, estimate_pape_ex_ante, ExAnteDataset
from .crossfit import cross_fit_pape, cross_fit_pav, make_folds, StratumCATELearner
from .dgp import DgpSpec, generate_population, oracle_cate_rule
from .oracle import enumerate_randomizations, oracle_truth
from .montecarlo import monte_carlo

__all__ = [name for name in dir() if not name.startswith("_")]
