"""Threshold-adapted ABC-SMC sampler.

A population of particles starts as prior draws, each scored once with the
dataset loss.  Every step shrinks the tolerance so the surviving count drops
to roughly an alpha fraction of the current one, resamples uniformly among
survivors when the effective sample size falls below the configured
threshold, and perturbs every survivor with a Metropolis-Hastings move whose
acceptance requires both the prior ratio and a fresh loss at or below the
tolerance.  Alpha itself adapts to one minus the previous acceptance rate.
Weights are binary (alive/dead): each particle carries a single cached loss
that is refreshed only when a move is accepted.
"""

import json
import math
import time
import warnings
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import seeds
from .errors import CheckpointError, ConfigError, InvalidInputError
from .params import ModelParams, N_PARAMS
from .prior import log_prior_density, sample_prior
from .scoring import dataset_loss

CHECKPOINT_VERSION = 1
ALPHA_MIN, ALPHA_MAX = 0.05, 0.99
TRACE_COLUMNS = ("step", "delta", "ess", "acc_rate", "acc_rate_sim", "mean_loss")


@dataclass
class SmcConfig:
    """ABC-SMC hyperparameters."""

    particles: int = 1000
    resample_threshold: int | None = None   # defaults to particles // 2
    alpha0: float = 0.9
    kernel_divisor: float = 5.0
    stop_rel_delta: float = 0.001           # stop when delta shrinks by < 0.1%
    max_steps: int = 300
    allow_small_m: bool = False             # permit loss replicate counts < 60

    def __post_init__(self):
        if self.particles < 2:
            raise ConfigError("particle count must be >= 2")
        if not 0.0 < self.alpha0 < 1.0:
            raise ConfigError("alpha0 must lie in (0, 1)")
        if self.kernel_divisor <= 0:
            raise ConfigError("kernel_divisor must be > 0")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")
        if self.resample_threshold is None:
            self.resample_threshold = self.particles // 2
        if self.resample_threshold > self.particles // 2:
            warnings.warn(
                f"resample threshold {self.resample_threshold} exceeds half the "
                f"population ({self.particles}); resampling will be frequent"
            )

    def check_loss(self, loss_config):
        if loss_config.kind == "energy" and loss_config.m < 60 and not self.allow_small_m:
            raise ConfigError(
                f"energy-score replicate count {loss_config.m} < 60 biases the score "
                "toward under-dispersion; set allow_small_m to override"
            )


@dataclass
class ParticlePopulation:
    """SMC state: particle values, cached losses, binary weights, tolerance."""

    theta: np.ndarray             # (P, D)
    scores: np.ndarray            # (P,)
    alive: np.ndarray             # (P,) bool
    delta: float
    step: int
    n_dummy: int = 0
    alpha_history: list = field(default_factory=list)
    acc_history: list = field(default_factory=list)      # incl. prior rejections
    acc_sim_history: list = field(default_factory=list)  # among simulated proposals

    @property
    def n_particles(self):
        return self.theta.shape[0]

    @property
    def ess(self):
        return int(self.alive.sum())

    @property
    def mean_loss(self):
        return float(self.scores[self.alive].mean())

    @property
    def alive_theta(self):
        return self.theta[self.alive]

    def equals(self, other):
        return (
            np.array_equal(self.theta, other.theta)
            and np.array_equal(self.scores, other.scores)
            and np.array_equal(self.alive, other.alive)
            and self.delta == other.delta
            and self.step == other.step
            and self.n_dummy == other.n_dummy
            and self.alpha_history == other.alpha_history
            and self.acc_history == other.acc_history
            and self.acc_sim_history == other.acc_sim_history
        )


# ---------------------------------------------------------------------------
# worker tasks (module-level so they pickle by reference)

def _scorer(ctx):
    if ctx.scorer is not None:
        return ctx.scorer
    return lambda params, rng_factory: dataset_loss(ctx.events, params, ctx.loss_config, rng_factory)


def _score_task(ctx, payload):
    step, p_idx, theta_vec, n_dummy = payload
    params = ModelParams.from_vector(theta_vec, n_dummy=n_dummy)
    return _scorer(ctx)(params, lambda e: seeds.rng(ctx.seed, seeds.SIM, step, p_idx, e))


def _move_task(ctx, payload):
    step, p_idx, theta_vec, score, delta, chol = payload
    return mh_move(
        theta_vec, score, delta, chol, ctx.prior_spec, _scorer(ctx),
        seeds.rng(ctx.seed, seeds.MOVE, step, p_idx),
        lambda e: seeds.rng(ctx.seed, seeds.SIM, step, p_idx, e),
    )


def mh_move(particle, score, delta, kernel_chol, prior_spec, scorer,
            move_rng, sim_rng_factory):
    """One MH move against the indicator target at tolerance delta.

    Proposals failing the prior are rejected without simulation; otherwise a
    fresh loss is drawn via `scorer(params, rng_factory)` and the move is
    accepted when the loss is at or below delta and the symmetric-proposal
    prior ratio accepts.

    Returns (theta, score, accepted, simulated).
    """
    proposal = particle + kernel_chol @ move_rng.standard_normal(particle.size)
    log_u = math.log(move_rng.uniform())
    n_dummy = particle.size - N_PARAMS
    prop_params = ModelParams.from_vector(proposal, n_dummy=n_dummy)
    lp_new = log_prior_density(prop_params, prior_spec)
    if lp_new == -np.inf:
        return particle, score, False, False
    lp_old = log_prior_density(ModelParams.from_vector(particle, n_dummy=n_dummy), prior_spec)
    new_score = scorer(prop_params, sim_rng_factory)
    if new_score <= delta and log_u < lp_new - lp_old:
        return proposal, new_score, True, True
    return particle, score, False, True


def mh_move_payloads(population, delta, chol, step):
    alive_idx = np.flatnonzero(population.alive)
    return alive_idx, [
        (step, int(p), population.theta[p], float(population.scores[p]), delta, chol)
        for p in alive_idx
    ]


# ---------------------------------------------------------------------------
# operations

def initialize_population(config, prior_spec, loss_config, events, seed, pool):
    """Score prior draws once each; the initial tolerance is the worst score."""
    config.check_loss(loss_config)
    n_dummy = prior_spec.n_dummy
    dim = N_PARAMS + n_dummy
    theta = np.empty((config.particles, dim))
    for p in range(config.particles):
        theta[p] = sample_prior(seeds.rng(seed, seeds.PRIOR, 0, p), prior_spec).to_vector()
    payloads = [(0, p, theta[p], n_dummy) for p in range(config.particles)]
    scores = np.array(pool.map(_score_task, payloads))
    return ParticlePopulation(
        theta=theta,
        scores=scores,
        alive=np.ones(config.particles, dtype=bool),
        delta=float(scores.max()),
        step=0,
        n_dummy=n_dummy,
    )


def adapt_tolerance(population, alpha):
    """Largest cached score whose survivor count meets the alpha target.

    With binary weights ESS(delta) counts scores at or below delta.  The new
    tolerance is the largest alive score with ESS <= ceil(alpha * ESS_old),
    never above the current tolerance; when nothing qualifies the minimum
    score is used, so at least one particle always survives.
    """
    alive_scores = population.scores[population.alive]
    if alive_scores.size == 0:
        raise InvalidInputError("population has no alive particles")
    target = math.ceil(alpha * alive_scores.size)
    sorted_scores = np.sort(alive_scores)
    candidates = np.unique(sorted_scores)[::-1]  # descending
    for cand in candidates:
        ess = int(np.searchsorted(sorted_scores, cand, side="right"))
        if ess <= target:
            return float(min(cand, population.delta))
    return float(min(sorted_scores[0], population.delta))


def adapt_alpha(previous_acceptance_rate, lo=ALPHA_MIN, hi=ALPHA_MAX):
    """Target survivor fraction for the next step: 1 - acceptance rate, clamped."""
    return float(np.clip(1.0 - previous_acceptance_rate, lo, hi))


def perturbation_covariance(population, divisor=5.0, jitter=1e-8):
    """Move-kernel covariance: twice the alive-particle covariance, shrunk.

    The jitter enters before the divisor so scaling the divisor rescales the
    whole matrix exactly.
    """
    alive = population.alive_theta
    if alive.shape[0] < 2:
        raise InvalidInputError("perturbation covariance needs at least 2 alive particles")
    dev = alive - alive.mean(axis=0)
    cov = dev.T @ dev / alive.shape[0]
    return (2.0 * cov + jitter * np.eye(cov.shape[0])) / divisor


def resample(population, rng):
    """Multinomial resampling uniformly among alive particles, all revived."""
    alive_idx = np.flatnonzero(population.alive)
    if alive_idx.size == 0:
        raise InvalidInputError("cannot resample: no alive particles")
    picks = alive_idx[rng.integers(0, alive_idx.size, size=population.n_particles)]
    population.theta = population.theta[picks].copy()
    population.scores = population.scores[picks].copy()
    population.alive = np.ones(population.n_particles, dtype=bool)
    return population


def run_smc(config, prior_spec, loss_config, events, seed, pool,
            checkpoint_dir=None, config_hash="", resume_from=None, resume_override=False):
    """Run the sampler to its stopping rule.

    Returns (population, trace_rows, timings) where trace_rows are dicts in
    TRACE_COLUMNS order (one per completed step, including step 0 on a fresh
    run) and timings lists per-step wall seconds for the run summary.
    """
    config.check_loss(loss_config)
    if resume_from is not None:
        population = load_population(
            resume_from, expected_hash=config_hash or None, override=resume_override
        )
        trace = []
    else:
        population = initialize_population(config, prior_spec, loss_config, events, seed, pool)
        trace = [_trace_row(population, np.nan, np.nan)]
        if checkpoint_dir is not None:
            save_population(Path(checkpoint_dir) / "step_0000.npz", population, config_hash, seed)
    timings = []
    for step in range(population.step + 1, config.max_steps + 1):
        t_start = time.perf_counter()
        alpha = config.alpha0 if not population.acc_history else adapt_alpha(population.acc_history[-1])
        delta_prev = population.delta
        delta = adapt_tolerance(population, alpha)
        population.delta = delta
        population.alive &= population.scores <= delta
        population.alpha_history.append(alpha)

        if population.ess < max(config.resample_threshold, 2):
            resample(population, seeds.rng(seed, seeds.RESAMPLE, step))

        kernel_cov = perturbation_covariance(population, divisor=config.kernel_divisor)
        chol = np.linalg.cholesky(kernel_cov)
        alive_idx, payloads = mh_move_payloads(population, delta, chol, step)
        results = pool.map(_move_task, payloads)
        accepted = simulated = 0
        for p, (theta_new, score_new, acc, sim) in zip(alive_idx, results):
            population.theta[p] = theta_new
            population.scores[p] = score_new
            accepted += acc
            simulated += sim
        acc_rate = accepted / alive_idx.size
        acc_sim = accepted / simulated if simulated else 0.0
        population.acc_history.append(acc_rate)
        population.acc_sim_history.append(acc_sim)
        population.step = step

        trace.append(_trace_row(population, acc_rate, acc_sim))
        timings.append({"step": step, "seconds": time.perf_counter() - t_start})
        if checkpoint_dir is not None:
            save_population(Path(checkpoint_dir) / f"step_{step:04d}.npz", population, config_hash, seed)

        if delta_prev > 0 and (delta_prev - delta) / delta_prev < config.stop_rel_delta:
            break
    return population, trace, timings


def _trace_row(population, acc_rate, acc_sim):
    return {
        "step": population.step,
        "delta": population.delta,
        "ess": population.ess,
        "acc_rate": acc_rate,
        "acc_rate_sim": acc_sim,
        "mean_loss": population.mean_loss,
    }


# ---------------------------------------------------------------------------
# checkpoints

def save_population(path, population, config_hash, seed):
    """Bit-exact checkpoint: arrays plus a JSON metadata record.

    Streams are counter-based on (seed, step), so seed and step index fully
    determine the remaining randomness; no mutable generator state exists.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "version": CHECKPOINT_VERSION,
        "delta": population.delta,
        "step": population.step,
        "n_dummy": population.n_dummy,
        "alpha_history": population.alpha_history,
        "acc_history": population.acc_history,
        "acc_sim_history": population.acc_sim_history,
        "config_hash": config_hash,
        "seed": int(seed),
    }
    np.savez(
        path,
        theta=population.theta,
        scores=population.scores,
        alive=population.alive,
        meta=np.array(json.dumps(meta)),
    )
    return path


def load_population(path, expected_hash=None, override=False):
    """Load a checkpoint; refuses config-hash mismatches unless overridden."""
    try:
        with np.load(path, allow_pickle=False) as data:
            theta = data["theta"]
            scores = data["scores"]
            alive = data["alive"]
            meta = json.loads(str(data["meta"][()]))
    except (OSError, KeyError, ValueError, zipfile.BadZipFile) as exc:
        raise CheckpointError(f"checkpoint {path} is corrupt or incomplete: {exc}") from None
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"checkpoint {path} has unsupported version {meta.get('version')}")
    if expected_hash is not None and meta["config_hash"] != expected_hash and not override:
        raise CheckpointError(
            f"checkpoint {path} was written under config hash {meta['config_hash']!r}, "
            f"expected {expected_hash!r}; pass the override flag to load anyway"
        )
    return ParticlePopulation(
        theta=theta,
        scores=scores,
        alive=alive,
        delta=float(meta["delta"]),
        step=int(meta["step"]),
        n_dummy=int(meta["n_dummy"]),
        alpha_history=list(meta["alpha_history"]),
        acc_history=list(meta["acc_history"]),
        acc_sim_history=list(meta["acc_sim_history"]),
    )
