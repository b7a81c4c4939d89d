"""Bayesian instrumental-variable analysis of N-of-1 crossover trials.

The package fits latent probit structural models with an AR(1) latent
confounder by data-augmentation Gibbs sampling, supports a one-day carryover
variant and hierarchical pooling across participants, and ships a simulation
harness with frequentist comparators and posterior predictive diagnostics.
"""

from .comparators import ComparatorEstimate, at_log_or, itt_log_or, pp_log_or
from .diagnostics import (
    PpcReport,
    bayesian_p,
    gelman_rubin,
    posterior_predictive_check,
    ppc_replicate,
    stat_deviance,
    stat_num_changes,
    stat_num_events,
)
from .gibbs import (
    CoefficientPrior,
    LatentState,
    McmcConfig,
    PosteriorDraws,
    PriorSpec,
    run_chain,
    run_chains,
)
from .meta import HyperPriors, MetaDraws, pooled_estimands, run_meta_chain
from .model import (
    CO,
    NCO,
    EstimandSummary,
    ModelSpec,
    MonteCarloConfig,
    Params,
    TrialLayout,
    TrialSeries,
    UnscaledParams,
    estimand_dd,
    estimand_itt,
    estimand_ud,
    event_rate_bar,
    log_or,
    rescale,
    summarize_estimand,
    unrescale,
)
from .simulate import (
    ScenarioSpec,
    gen_ar1_u,
    gen_randomization,
    gen_scenario_ab_pair,
    gen_trial,
    get_scenario,
    scenario_catalog,
    true_estimand_oracle,
)

__version__ = "0.1.0"
