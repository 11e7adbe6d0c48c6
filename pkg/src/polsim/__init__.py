"""Load balancing over parallel finite-buffer FIFO queues with delayed acknowledgements.

The package provides the generative queueing model, a particle-filter belief
over the latent queue states, a Monte Carlo tree-search planner driven by that
belief, the classic full- and limited-information routing baselines, an exact
event-driven environment with common-random-number streams, Bayesian arrival
inference from traces, and an experiment harness with a CLI (``polsim``).
"""

from .baselines import Strategy, decide_full_info, decide_limited_info
from .belief import (
    Belief,
    BeliefStats,
    belief_stats,
    init_belief,
    observation_likelihood,
    sir_update,
    systematic_resample,
)
from .environment import CrnStreams, EnvState, EnvStep, RunMetrics, finalize, make_env, step_env
from .harness import (
    ExperimentConfig,
    config_from_dict,
    load_config,
    run_experiment,
    summarize,
    sweep,
)
from .inference import (
    GammaPosterior,
    fit_exponential,
    load_trace,
    posterior_predictive_sample,
    posterior_predictive_samples,
)
from .model import (
    Action,
    AugmentedState,
    DistributionSpec,
    GenStep,
    ModelParams,
    Observation,
    QueueParams,
    job_count_pmf_mm,
    sample_ack_observation,
    sample_duration,
    sample_durations,
    sample_job_count,
    step_generative,
)
from .planner import (
    PlannerParams,
    SearchNode,
    SearchTree,
    advance_root,
    plan,
    rollout,
    uct_select,
)
from .rewards import RewardSpec, reward

__all__ = [
    "Action",
    "AugmentedState",
    "Belief",
    "BeliefStats",
    "CrnStreams",
    "DistributionSpec",
    "EnvState",
    "EnvStep",
    "ExperimentConfig",
    "GammaPosterior",
    "GenStep",
    "ModelParams",
    "Observation",
    "PlannerParams",
    "QueueParams",
    "RewardSpec",
    "RunMetrics",
    "SearchNode",
    "SearchTree",
    "Strategy",
    "advance_root",
    "belief_stats",
    "config_from_dict",
    "decide_full_info",
    "decide_limited_info",
    "finalize",
    "fit_exponential",
    "init_belief",
    "job_count_pmf_mm",
    "load_config",
    "load_trace",
    "make_env",
    "observation_likelihood",
    "plan",
    "posterior_predictive_sample",
    "posterior_predictive_samples",
    "reward",
    "rollout",
    "run_experiment",
    "sample_ack_observation",
    "sample_duration",
    "sample_durations",
    "sample_job_count",
    "sir_update",
    "step_env",
    "step_generative",
    "summarize",
    "sweep",
    "systematic_resample",
    "uct_select",
]
