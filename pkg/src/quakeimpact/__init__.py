"""Gridded multi-impact earthquake damage model with likelihood-free fitting.

The forward model maps (event bundle, parameters, randomness) to sampled
mortality, displacement, and building-damage counts on a spatial grid.
Fitting is likelihood-free: an energy-score loss on aggregated observations
drives either a threshold-adapted ABC-SMC sampler or a correlated
pseudo-marginal MCMC sampler.  See the README for the CLI pipeline.
"""

__version__ = "0.1.0"

from .params import ModelParams, PARAM_NAMES, param_names
from .bundle import EventBundle, load_bundle, load_dataset, save_bundle, save_dataset
from .model import (
    I0_DEFAULT,
    SimContext,
    aggregate_impacts,
    sample_event_impact,
    simulate_impact_batch,
)
from .scoring import LossConfig, dataset_loss, energy_score, event_loss
from .prior import PriorSpec, higher_level_check, log_prior_density, sample_prior
from .smc import ParticlePopulation, SmcConfig, run_smc
from .mcmc import McmcConfig, run_mcmc
from .synthetic import GenConfig, default_theta_true, generate_dataset, split_train_test
from .predict import coverage_report, posterior_predictive

__all__ = [
    "__version__",
    "ModelParams", "PARAM_NAMES", "param_names",
    "EventBundle", "load_bundle", "load_dataset", "save_bundle", "save_dataset",
    "I0_DEFAULT", "SimContext", "aggregate_impacts", "sample_event_impact", "simulate_impact_batch",
    "LossConfig", "dataset_loss", "energy_score", "event_loss",
    "PriorSpec", "higher_level_check", "log_prior_density", "sample_prior",
    "ParticlePopulation", "SmcConfig", "run_smc",
    "McmcConfig", "run_mcmc",
    "GenConfig", "default_theta_true", "generate_dataset", "split_train_test",
    "coverage_report", "posterior_predictive",
]
