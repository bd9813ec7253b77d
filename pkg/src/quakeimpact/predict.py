"""Posterior-predictive sampling and calibration reporting.

Each predictive draw picks one parameter vector from the fitted source
(alive SMC particles, thinned MCMC draws, or a single fixed vector), pushes
it through the forward model with fresh randomness, and aggregates to every
(region, impact) coordinate the event defines.  Summaries carry the full
sample arrays so downstream metrics (interval coverage, alert classes,
fatality-bin probabilities) need no re-simulation.
"""

from dataclasses import dataclass

import numpy as np

from . import seeds
from .errors import InvalidInputError
from .model import I0_DEFAULT, SimContext, realized_builddam_probability, simulate_impact_batch
from .params import ModelParams, N_PARAMS


def _theta_matrix(theta_source):
    """Normalize a population / chain / single vector into an (n, D) matrix."""
    from .smc import ParticlePopulation

    if isinstance(theta_source, ParticlePopulation):
        return theta_source.alive_theta
    if isinstance(theta_source, ModelParams):
        return theta_source.to_vector()[None, :]
    mat = np.asarray(theta_source, dtype=float)
    if mat.ndim == 1:
        mat = mat[None, :]
    if mat.ndim != 2 or mat.shape[0] == 0:
        raise InvalidInputError("theta source must be a non-empty matrix of parameter vectors")
    return mat


@dataclass
class PredictiveRecord:
    """Samples and summaries for one (event, region, impact) coordinate."""

    event_id: str
    region: str
    impact: str
    samples: np.ndarray
    observed: int | None = None

    @property
    def median(self):
        return float(np.median(self.samples))

    @property
    def mean(self):
        return float(np.mean(self.samples))

    def quantile(self, q):
        return float(np.quantile(self.samples, q))


@dataclass
class PredictiveSummary:
    """All predictive records plus per-cell mean maps."""

    records: list
    cell_means: dict              # event_id -> {impact: (J,) mean array}
    n_draws: int
    quantile_levels: tuple = (0.05, 0.95)

    def find(self, event_id, region, impact):
        for rec in self.records:
            if (rec.event_id, rec.region, rec.impact) == (event_id, region, impact):
                return rec
        raise KeyError((event_id, region, impact))

    def observed_records(self):
        return [r for r in self.records if r.observed is not None]


def posterior_predictive(events, theta_source, draws, seed, i0=I0_DEFAULT,
                         quantile_levels=(0.05, 0.95)):
    """Predictive samples for every region/impact coordinate of the events.

    Parameters
    ----------
    events : list of EventBundle
    theta_source : ParticlePopulation, (n, D) array, or ModelParams
        Sampled uniformly per draw.
    draws : int
        Predictive sample size per coordinate.
    """
    thetas = _theta_matrix(theta_source)
    n_dummy = thetas.shape[1] - N_PARAMS
    pick_rng = seeds.rng(seed, seeds.PREDICT, 0)
    picks = pick_rng.integers(0, thetas.shape[0], size=draws)

    records = []
    cell_means = {}
    for e_idx, event in enumerate(events):
        ctx = SimContext(event, i0=i0)
        impacts = ["mort", "disp"] + (["builddam"] if event.exposure.build is not None else [])
        region_ids = list(event.regions.regions)
        samples = {
            (rid, impact): np.empty(draws) for rid in region_ids for impact in impacts
        }
        sums = {impact: np.zeros(event.n_cells) for impact in impacts}
        for d in range(draws):
            params = ModelParams.from_vector(thetas[picks[d]], n_dummy=n_dummy)
            batch = simulate_impact_batch(
                ctx, params, seeds.rng(seed, seeds.PREDICT, 1, e_idx, d), m=1
            )
            grids = {"mort": batch.mort_cells[0], "disp": batch.disp_cells[0],
                     "builddam": batch.bdam_cells[0]}
            for impact in impacts:
                sums[impact] += grids[impact]
                for rid in region_ids:
                    cells = event.regions.cells(rid)
                    samples[(rid, impact)][d] = grids[impact][cells].sum()
        observed = {(o.region, o.impact): o.value for o in event.observations}
        for rid in region_ids:
            for impact in impacts:
                records.append(
                    PredictiveRecord(
                        event_id=event.event_id,
                        region=rid,
                        impact=impact,
                        samples=samples[(rid, impact)],
                        observed=observed.get((rid, impact)),
                    )
                )
        cell_means[event.event_id] = {k: v / draws for k, v in sums.items()}
    return PredictiveSummary(records=records, cell_means=cell_means, n_draws=draws,
                             quantile_levels=tuple(quantile_levels))


def coverage_report(summary, level=0.9, positive_only=False):
    """Fraction of observed coordinates inside central predictive intervals.

    Intervals are the empirical [(1-level)/2, 1-(1-level)/2] quantiles,
    endpoints inclusive.  With `positive_only`, coordinates whose observed
    value is zero are excluded (they are dominated by exact-zero point
    masses and say little about interval calibration).
    """
    records = summary.observed_records()
    if positive_only:
        records = [r for r in records if r.observed > 0]
    if not records:
        raise InvalidInputError("no observed coordinates to compute coverage on")
    lo_q, hi_q = (1.0 - level) / 2.0, 1.0 - (1.0 - level) / 2.0
    per_impact = {}
    covered_all = 0
    for rec in records:
        lo, hi = rec.quantile(lo_q), rec.quantile(hi_q)
        covered = lo <= rec.observed <= hi
        covered_all += covered
        hit, tot = per_impact.get(rec.impact, (0, 0))
        per_impact[rec.impact] = (hit + covered, tot + 1)
    report = {
        "level": level,
        "n_coordinates": len(records),
        "overall": covered_all / len(records),
    }
    for impact, (hit, tot) in sorted(per_impact.items()):
        report[impact] = hit / tot
    return report


def cell_damage_probability(event, theta_source, draws=50, seed=0, i0=I0_DEFAULT, stream=0):
    """Per-cell median building-damage probability over posterior draws.

    Each draw realizes the event-wide and local errors under one sampled
    parameter vector; the per-cell median over draws is returned.  Cells
    below the intensity threshold for every hazard have probability zero.
    `stream` separates the randomness of different events under one seed.
    """
    if event.exposure.build is None:
        raise InvalidInputError(f"{event.event_id}: no building layer")
    thetas = _theta_matrix(theta_source)
    n_dummy = thetas.shape[1] - N_PARAMS
    ctx = SimContext(event, i0=i0)
    pick_rng = seeds.rng(seed, seeds.PREDICT, 2, stream)
    picks = pick_rng.integers(0, thetas.shape[0], size=draws)
    probs = np.empty((draws, event.n_cells))
    for d in range(draws):
        params = ModelParams.from_vector(thetas[picks[d]], n_dummy=n_dummy)
        probs[d] = realized_builddam_probability(
            ctx, params, seeds.rng(seed, seeds.PREDICT, 3, stream, d), m=1
        )[0]
    return np.median(probs, axis=0)
