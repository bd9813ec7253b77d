"""Adaptive MCMC targeting the exponential scoring-rule posterior.

Unlike the SMC sampler's hard tolerance, the target here weights the prior
by ``exp(-omega * loss)``.  The loss is a noisy simulation-based estimate,
so the sampler is pseudo-marginal: the current state keeps the loss it was
accepted with, and the standard normals behind the event-wide error draws
are carried in the state and refreshed with correlation rho between the
current and proposed evaluation, which tames the noise in the acceptance
ratio.  Local errors and count draws stay fresh per evaluation.  Proposals
use a random-walk kernel whose covariance is shaped from the chain history
and whose scale is tuned toward a 0.234 acceptance rate during warmup (a
standard adaptive scheme standing in for the accelerated shaping-and-scaling
variant, which it matches in role).

Chains advance sequentially; the per-event losses inside one evaluation are
independent and are dispatched across the worker pool.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import seeds
from .errors import ConfigError
from .params import ModelParams, N_PARAMS, param_names
from .prior import BOX_NAMES, log_prior_density, sample_prior
from .scoring import euclidean_event_loss, event_loss

TARGET_ACCEPT = 0.234
_SHAPING_START = 100  # iterations of the initial diagonal kernel before shaping


@dataclass
class McmcConfig:
    """Sampler hyperparameters."""

    iterations: int = 8000
    warmup: int = 4000
    omega: float = 40.0
    rho_refresh: float = 0.9
    thin: int = 4
    chains: int = 2

    def __post_init__(self):
        if not 0 <= self.warmup < self.iterations:
            raise ConfigError("warmup must satisfy 0 <= warmup < iterations")
        if self.omega < 0:
            raise ConfigError("omega must be >= 0")
        if not 0.0 <= self.rho_refresh <= 1.0:
            raise ConfigError("rho_refresh must lie in [0, 1]")
        if self.thin < 1 or self.chains < 1:
            raise ConfigError("thin and chains must be >= 1")


@dataclass
class ChainState:
    """Mutable state of one chain."""

    theta: np.ndarray
    log_prior: float
    loss: float
    z: np.ndarray                 # (N_events, replicates, 3) stored xi normals
    log_scale: float
    mean: np.ndarray = None
    sum_sq: np.ndarray = None     # running scatter for covariance shaping
    count: int = 0


def log_target(loss_value, log_prior, omega):
    """-omega * loss + log prior; -inf wherever the prior is -inf."""
    if log_prior == -np.inf:
        return -np.inf
    return -omega * loss_value + log_prior


def correlated_refresh(stored_normals, rho, rng):
    """AR(1) refresh of the stored standard normals: rho*z + sqrt(1-rho^2)*nu."""
    fresh = rng.standard_normal(np.shape(stored_normals))
    return rho * np.asarray(stored_normals) + math.sqrt(1.0 - rho * rho) * fresh


def _event_loss_task(ctx, payload):
    theta_vec, e_idx, z_event, chain_id, iteration = payload
    params = ModelParams.from_vector(theta_vec, n_dummy=theta_vec.size - N_PARAMS)
    per_event = event_loss if ctx.loss_config.kind == "energy" else euclidean_event_loss
    rng = seeds.rng(ctx.seed, seeds.CHAIN_SIM, chain_id, iteration, e_idx)
    return per_event(ctx.events[e_idx], params, ctx.loss_config,
                     rng, xi_normals=z_event)


class _PooledLoss:
    """Dataset loss with per-event tasks mapped over the worker pool."""

    def __init__(self, ctx, pool, chain_id):
        self.ctx = ctx
        self.pool = pool
        self.chain_id = chain_id
        self.scored = [i for i, ev in enumerate(ctx.events) if ev.n_observations > 0]
        if len(self.scored) < len(ctx.events):
            warnings.warn(
                f"{len(ctx.events) - len(self.scored)} events without observations excluded"
            )
        if not self.scored:
            raise ConfigError("no events with observations to score")

    def __call__(self, params, z, chain_id, iteration):
        vec = params.to_vector()
        payloads = [(vec, e, z[e], self.chain_id, iteration) for e in self.scored]
        if self.pool is None:
            values = [_event_loss_task(self.ctx, p) for p in payloads]
        else:
            values = self.pool.map(_event_loss_task, payloads)
        return float(np.mean(values))


def _initial_cov(prior_spec, dim):
    sd = np.full(dim, prior_spec.laplace_scale)
    for k, name in enumerate(BOX_NAMES):
        lo, hi = prior_spec.bounds[name]
        sd[8 + k] = (hi - lo) / 10.0
    return np.diag(sd**2)


def run_chain(ctx, chain_id, config, loss_eval=None, pool=None):
    """Run one adaptive chain; returns its full iteration record.

    `ctx` is a parallel.WorkerContext.  `loss_eval(params, z, chain_id,
    iteration)` may replace the simulation-based loss (used by diagnostics
    tests); by default the per-event losses are dispatched over `pool`.
    """
    prior_spec = ctx.prior_spec
    if loss_eval is None:
        loss_eval = _PooledLoss(ctx, pool, chain_id)
    rng = seeds.rng(ctx.seed, seeds.CHAIN, chain_id)
    dim = N_PARAMS + prior_spec.n_dummy
    replicates = ctx.loss_config.replicates
    n_events = len(ctx.events)

    params = sample_prior(rng, prior_spec)
    state = ChainState(
        theta=params.to_vector(),
        log_prior=log_prior_density(params, prior_spec),
        loss=0.0,
        z=rng.standard_normal((n_events, replicates, 3)),
        log_scale=math.log(2.38 / math.sqrt(dim)),
        mean=np.zeros(dim),
        sum_sq=np.zeros((dim, dim)),
    )
    state.loss = loss_eval(params, state.z, chain_id, 0)

    cov0 = _initial_cov(prior_spec, dim)
    chol = np.linalg.cholesky(cov0)
    thetas = np.empty((config.iterations, dim))
    losses = np.empty(config.iterations)
    accepts = np.zeros(config.iterations, dtype=bool)

    for it in range(1, config.iterations + 1):
        step = math.exp(state.log_scale)
        proposal = state.theta + step * (chol @ rng.standard_normal(dim))
        log_u = math.log(rng.uniform())
        prop_params = ModelParams.from_vector(proposal, n_dummy=prior_spec.n_dummy)
        lp_prop = log_prior_density(prop_params, prior_spec)
        if lp_prop == -np.inf:
            acc_prob = 0.0
        else:
            z_prop = correlated_refresh(state.z, config.rho_refresh, rng)
            loss_prop = loss_eval(prop_params, z_prop, chain_id, it)
            log_ratio = log_target(loss_prop, lp_prop, config.omega) - log_target(
                state.loss, state.log_prior, config.omega
            )
            acc_prob = math.exp(min(log_ratio, 0.0))
            if log_u < log_ratio:
                state.theta = proposal
                state.log_prior = lp_prop
                state.loss = loss_prop
                state.z = z_prop
                accepts[it - 1] = True

        if it <= config.warmup:
            # scale tuning toward the target acceptance, diminishing gain
            state.log_scale += it**-0.6 * (acc_prob - TARGET_ACCEPT)
            # covariance shaping from the chain history
            state.count += 1
            delta_old = state.theta - state.mean
            state.mean = state.mean + delta_old / state.count
            state.sum_sq = state.sum_sq + np.outer(delta_old, state.theta - state.mean)
            if state.count > _SHAPING_START:
                # a floor of the initial kernel keeps directions that have not
                # moved yet from collapsing out of the proposal
                shaped = state.sum_sq / state.count + 0.05 * cov0
                chol = np.linalg.cholesky(shaped)

        thetas[it - 1] = state.theta
        losses[it - 1] = state.loss

    return {
        "chain": chain_id,
        "theta": thetas,
        "loss": losses,
        "accepted": accepts,
        "acceptance": float(accepts.mean()),
        "acceptance_postwarmup": float(accepts[config.warmup:].mean()),
    }


@dataclass
class McmcResult:
    """Chains plus pooled thinned draws and convergence diagnostics."""

    chains: list
    samples: np.ndarray           # pooled post-warmup thinned draws (K, D)
    per_chain_samples: list       # list of (k_c, D) arrays
    diagnostics: dict
    names: tuple = field(default_factory=tuple)


def run_mcmc(config, prior_spec, loss_config, events, seed, pool, loss_eval=None):
    """Run all chains sequentially (events parallel within each evaluation)."""
    chains = []
    for chain_id in range(config.chains):
        chains.append(run_chain(pool.context, chain_id, config, loss_eval=loss_eval,
                                pool=pool if pool.threads > 1 else None))
    keep = np.arange(config.warmup, config.iterations, config.thin)
    per_chain = [chain["theta"][keep] for chain in chains]
    samples = np.concatenate(per_chain, axis=0)
    names = param_names(prior_spec.n_dummy)

    rhat = split_rhat(per_chain)
    ess = np.array([effective_sample_size([s[:, d] for s in per_chain])
                    for d in range(samples.shape[1])])
    warnings_list = []
    for chain in chains:
        flags = chain["accepted"][config.warmup:]
        for start in range(0, max(len(flags) - 999, 1), 1000):
            window = flags[start:start + 1000]
            if window.size >= 1000 and window.mean() < 0.01:
                warnings_list.append(
                    f"chain {chain['chain']}: acceptance below 1% over iterations "
                    f"{config.warmup + start + 1}..{config.warmup + start + window.size} post-warmup"
                )
                break
    diagnostics = {
        "acceptance": [chain["acceptance"] for chain in chains],
        "acceptance_postwarmup": [chain["acceptance_postwarmup"] for chain in chains],
        "rhat": {name: float(rhat[d]) for d, name in enumerate(names)},
        "ess": {name: float(ess[d]) for d, name in enumerate(names)},
        "warnings": warnings_list,
    }
    return McmcResult(
        chains=chains,
        samples=samples,
        per_chain_samples=per_chain,
        diagnostics=diagnostics,
        names=names,
    )


def split_rhat(per_chain_samples):
    """Split-chain potential scale reduction per parameter."""
    halves = []
    for draws in per_chain_samples:
        n = draws.shape[0] // 2
        if n < 2:
            raise ConfigError("too few post-warmup draws for split R-hat")
        halves.extend([draws[:n], draws[n:2 * n]])
    stacked = np.stack(halves)               # (m, n, D)
    m, n, _ = stacked.shape
    chain_means = stacked.mean(axis=1)
    chain_vars = stacked.var(axis=1, ddof=1)
    w = chain_vars.mean(axis=0)
    b = n * chain_means.var(axis=0, ddof=1)
    var_plus = (n - 1) / n * w + b / n
    with np.errstate(divide="ignore", invalid="ignore"):
        rhat = np.sqrt(var_plus / w)
    return np.where(w > 0, rhat, 1.0)


def effective_sample_size(chain_series):
    """Effective sample size over one parameter's per-chain series.

    Uses the average per-chain autocorrelation with Geyer initial-positive
    truncation.
    """
    total = sum(len(s) for s in chain_series)
    acors = []
    for series in chain_series:
        x = np.asarray(series, dtype=float)
        x = x - x.mean()
        n = x.size
        if n < 4 or np.allclose(x, 0):
            continue
        full = np.correlate(x, x, mode="full")[n - 1:]
        acors.append(full / full[0])
    if not acors:
        return float(total)
    length = min(len(a) for a in acors)
    rho = np.mean([a[:length] for a in acors], axis=0)
    tau = 1.0
    for t in range(1, length - 1, 2):
        pair = rho[t] + rho[t + 1]
        if pair < 0:
            break
        tau += 2.0 * pair
    return float(total / tau)
