"""Python bindings for the leverbid simulator, agents and experiment harness."""

from ._leverbid import (
    Checkpoint,
    ConfigError,
    DivergenceError,
    Environment,
    FittedExposure,
    compare,
    compute_reward,
    cv_bandwidth,
    fit_exposure,
    fixed_points,
    load_checkpoint,
    run_episode,
    run_experiment,
    simulate_chain,
)

__all__ = [
    "Checkpoint",
    "ConfigError",
    "DivergenceError",
    "Environment",
    "FittedExposure",
    "compare",
    "compute_reward",
    "cv_bandwidth",
    "fit_exposure",
    "fixed_points",
    "load_checkpoint",
    "run_episode",
    "run_experiment",
    "simulate_chain",
]
