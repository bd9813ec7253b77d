"""Run configuration: a flat JSON file validated against known keys.

Every engine default mirrors the reference values (1000 particles, resample
at ESS 500, M=100 replicates, omega=40, weights 7/1/0.6, log offset 10,
intensity threshold 4.3).  The config hash identifies a run setup for
checkpoint compatibility checks and the run summary.
"""

import hashlib
import json

import numpy as np

from .errors import ConfigError
from .mcmc import McmcConfig
from .params import ModelParams, param_names
from .prior import PriorSpec
from .scoring import LossConfig
from .smc import SmcConfig
from .synthetic import GenConfig

MODES = (
    "simulate-data",
    "fit-smc",
    "fit-mcmc",
    "predict",
    "evaluate",
    "crps-experiment",
    "export-figure-data",
)

DEFAULTS = {
    "mode": None,
    "seed": None,
    "threads": 1,
    "i0": 4.3,
    # loss
    "loss_kind": "energy",
    "m_replicates": 100,
    "euclid_repeats": 10,
    "weight_mort": 7.0,
    "weight_disp": 1.0,
    "weight_builddam": 0.6,
    "log_offset": 10.0,
    # prior
    "hl_mode": "real",
    "n_dummy": 0,
    "prior_bounds": None,
    "hl_bounds": None,
    "covariate_percentiles": None,
    # smc
    "smc_particles": 1000,
    "smc_resample_threshold": None,
    "smc_alpha0": 0.9,
    "smc_kernel_divisor": 5.0,
    "smc_stop_rel_delta": 0.001,
    "smc_max_steps": 300,
    "smc_allow_small_m": False,
    # mcmc
    "mcmc_iterations": 8000,
    "mcmc_warmup": 4000,
    "mcmc_omega": 40.0,
    "mcmc_rho_refresh": 0.9,
    "mcmc_thin": 4,
    "mcmc_chains": 2,
    # synthetic generation
    "gen_n_events": 30,
    "gen_grid_min": 8,
    "gen_grid_max": 20,
    "gen_hazard_probs": (0.6, 0.3, 0.1),
    "gen_block_size": 4,
    "gen_total_weight": 0.5,
    "gen_cluster_min": 2,
    "gen_cluster_max": 8,
    "gen_point_fraction": 0.3,
    "gen_build_prob": 0.8,
    "gen_theta_true": None,
    # split
    "split_ratio": 2.0 / 3.0,
    "split_mode": "stratified",
    # prediction / evaluation
    "predict_draws": 500,
    "predict_quantile_lo": 0.05,
    "predict_quantile_hi": 0.95,
    "predict_events": "test",
    "roc_draws": 50,
    "coverage_level": 0.9,
    # score-bias experiment
    "crps_m_values": (5, 100),
    "crps_sigma_min": 0.5,
    "crps_sigma_max": 1.3,
    "crps_sigma_step": 0.05,
    "crps_trials": 100_000,
}

_REQUIRED = ("mode", "seed")


class RunConfig:
    """Validated run configuration."""

    def __init__(self, values):
        unknown = sorted(set(values) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown configuration keys: {unknown}")
        merged = dict(DEFAULTS)
        merged.update(values)
        for key in _REQUIRED:
            if merged.get(key) is None:
                raise ConfigError(f"configuration key {key!r} is mandatory")
        if merged["mode"] not in MODES:
            raise ConfigError(f"mode {merged['mode']!r} unknown; expected one of {MODES}")
        if not isinstance(merged["seed"], int) or merged["seed"] < 0:
            raise ConfigError("seed must be a non-negative integer")
        if merged["mode"] == "simulate-data" and merged["gen_n_events"] is None:
            raise ConfigError("simulate-data requires gen_n_events")
        self.values = merged

    @classmethod
    def from_file(cls, path):
        try:
            with open(path) as fh:
                values = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(values, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        return cls(values)

    def __getitem__(self, key):
        return self.values[key]

    def override(self, **kwargs):
        """New config with non-None overrides applied (CLI flags)."""
        values = {k: v for k, v in self.values.items() if v != DEFAULTS.get(k) or k in _REQUIRED}
        for key, val in kwargs.items():
            if val is not None:
                values[key] = val
        return RunConfig(values)

    def config_hash(self):
        canon = json.dumps(self.values, sort_keys=True, separators=(",", ":"), default=list)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    # ----- typed sub-configurations -------------------------------------

    def loss_config(self):
        return LossConfig(
            weight_mort=float(self["weight_mort"]),
            weight_disp=float(self["weight_disp"]),
            weight_builddam=float(self["weight_builddam"]),
            offset=float(self["log_offset"]),
            m=int(self["m_replicates"]),
            euclid_repeats=int(self["euclid_repeats"]),
            kind=self["loss_kind"],
        )

    def smc_config(self):
        threshold = self["smc_resample_threshold"]
        return SmcConfig(
            particles=int(self["smc_particles"]),
            resample_threshold=None if threshold is None else int(threshold),
            alpha0=float(self["smc_alpha0"]),
            kernel_divisor=float(self["smc_kernel_divisor"]),
            stop_rel_delta=float(self["smc_stop_rel_delta"]),
            max_steps=int(self["smc_max_steps"]),
            allow_small_m=bool(self["smc_allow_small_m"]),
        )

    def mcmc_config(self):
        return McmcConfig(
            iterations=int(self["mcmc_iterations"]),
            warmup=int(self["mcmc_warmup"]),
            omega=float(self["mcmc_omega"]),
            rho_refresh=float(self["mcmc_rho_refresh"]),
            thin=int(self["mcmc_thin"]),
            chains=int(self["mcmc_chains"]),
        )

    def gen_config(self):
        theta = self["gen_theta_true"]
        kwargs = {}
        if theta is not None:
            kwargs["theta_true"] = ModelParams.from_dict(
                {k: float(v) for k, v in theta.items() if not k.startswith("dummy")}
            )
        return GenConfig(
            n_events=int(self["gen_n_events"]),
            grid_min=int(self["gen_grid_min"]),
            grid_max=int(self["gen_grid_max"]),
            hazard_probs=tuple(float(p) for p in self["gen_hazard_probs"]),
            block_size=int(self["gen_block_size"]),
            total_pattern_weight=float(self["gen_total_weight"]),
            cluster_range=(int(self["gen_cluster_min"]), int(self["gen_cluster_max"])),
            point_fraction=float(self["gen_point_fraction"]),
            build_prob=float(self["gen_build_prob"]),
            i0=float(self["i0"]),
            **kwargs,
        )

    def prior_spec(self, dataset_percentiles=None):
        bounds = None
        if self["prior_bounds"] is not None:
            from .prior import BOX_BOUNDS

            bounds = dict(BOX_BOUNDS)
            for name, pair in self["prior_bounds"].items():
                bounds[name] = (float(pair[0]), float(pair[1]))
        hl_bounds = None
        if self["hl_bounds"] is not None:
            hl_bounds = {}
            for intensity, row in self["hl_bounds"].items():
                parsed = {}
                for quantity, bound in row.items():
                    parsed[quantity] = True if bound is True else (float(bound[0]), float(bound[1]))
                hl_bounds[float(intensity)] = parsed
        percentiles = self["covariate_percentiles"]
        if percentiles is None:
            percentiles = dataset_percentiles
        if percentiles is not None:
            percentiles = {k: (float(v[0]), float(v[1])) for k, v in percentiles.items()}
        kwargs = {"hl_mode": self["hl_mode"], "hl_bounds": hl_bounds,
                  "covariate_percentiles": percentiles, "n_dummy": int(self["n_dummy"])}
        if bounds is not None:
            kwargs["bounds"] = bounds
        return PriorSpec(**kwargs)

    def crps_sigma_grid(self):
        lo, hi, step = self["crps_sigma_min"], self["crps_sigma_max"], self["crps_sigma_step"]
        grid = np.arange(lo, hi + step / 2, step)
        return [round(float(s), 10) for s in grid]

    def theta_names(self):
        return param_names(int(self["n_dummy"]))
