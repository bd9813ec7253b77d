"""Synthetic event generator for validating the inference machinery.

Events mimic the qualitative shape of real data: radially decaying
intensity fields with smooth noise, log-normal population thinned into
eight income quantiles, covariates held constant over blocks of
neighbouring cells (as subnational data would be), and impact observations
produced by a single forward draw under a known parameter vector,
aggregated either into one whole-event total or into a handful of
contiguous clusters.  Standardization constants are computed once over the
generated corpus and stored in every bundle manifest so all events share
identical scaling.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from . import seeds
from .bundle import (
    CovariateGrid,
    EventBundle,
    ExposureGrid,
    HazardInstance,
    Observation,
    PointData,
    RegionMap,
    COVARIATE_TRANSFORMS,
    N_QUANTILES,
)
from .errors import ConfigError, InvalidInputError
from .model import I0_DEFAULT, SimContext, realized_builddam_probability, simulate_impact_batch, split_gnic
from .params import ModelParams
from .prior import EXTREMES_SCREEN, PriorSpec, higher_level_check

NOISE_CAP = 1.0     # intensity noise is clipped to +-NOISE_CAP MMI
MAX_GRID = 50
PEAK_RANGE = (5.5, 9.5)


def default_theta_true():
    """Generator default: passes the extremes feasibility screen."""
    return ModelParams(
        beta=np.array([0.1, -0.05, -0.1, -0.05, -0.1, 0.05, 0.1, -0.05]),
        mu_mort=9.8,
        kappa_mort=1.2,
        mu_disp=8.0,
        kappa_disp=1.4,
        mu_builddam=7.6,
        kappa_builddam=1.3,
        sigma_mort=1.0,
        sigma_disp=0.8,
        sigma_builddam=1.2,
        sigma_local_mort=1.4,
        rho=0.5,
    )


@dataclass
class GenConfig:
    """Synthetic dataset shape."""

    n_events: int = 30
    grid_min: int = 8
    grid_max: int = 20
    hazard_probs: tuple = (0.6, 0.3, 0.1)   # P(1, 2, 3 shocks)
    block_size: int = 4
    total_pattern_weight: float = 0.5       # vs contiguous clusters
    cluster_range: tuple = (2, 8)
    point_fraction: float = 0.3             # events that get point building data
    build_prob: float = 0.8                 # events that get a building layer
    night_prob: float = 1.0 / 3.0
    theta_true: ModelParams = field(default_factory=default_theta_true)
    i0: float = I0_DEFAULT

    def __post_init__(self):
        if not 1 <= self.grid_min <= self.grid_max <= MAX_GRID:
            raise ConfigError(f"grid bounds must satisfy 1 <= min <= max <= {MAX_GRID}")
        if self.n_events < 1:
            raise ConfigError("n_events must be >= 1")
        if abs(sum(self.hazard_probs) - 1.0) > 1e-9:
            raise ConfigError("hazard_probs must sum to 1")
        if not 0.0 <= self.total_pattern_weight <= 1.0:
            raise ConfigError("total_pattern_weight must lie in [0, 1]")
        lo, hi = self.cluster_range
        if not 1 <= lo <= hi:
            raise ConfigError("cluster_range must satisfy 1 <= lo <= hi")


def _raw_event(config, rng, event_id):
    """Raw layers of one event, before corpus-level standardization."""
    rows = int(rng.integers(config.grid_min, config.grid_max + 1))
    cols = int(rng.integers(config.grid_min, config.grid_max + 1))
    n = rows * cols
    rr, cc = np.indices((rows, cols))

    n_haz = int(rng.choice((1, 2, 3), p=config.hazard_probs))
    peak0 = rng.uniform(*PEAK_RANGE)
    epi = np.array([rng.uniform(0, rows - 1), rng.uniform(0, cols - 1)])
    hazards = []
    for k in range(n_haz):
        peak = peak0 if k == 0 else peak0 - rng.uniform(0.5, 1.5)
        centre = epi + rng.uniform(-2.0, 2.0, size=2) * (k > 0)
        decay = rng.uniform(0.25, 0.55)
        dist = np.sqrt((rr - centre[0]) ** 2 + (cc - centre[1]) ** 2)
        noise = gaussian_filter(rng.standard_normal((rows, cols)), sigma=2.0)
        scale = noise.std()
        if scale > 0:
            noise = noise / scale * rng.uniform(0.15, 0.4)
        intensity = np.clip(peak - decay * dist + np.clip(noise, -NOISE_CAP, NOISE_CAP), 0.0, None)
        hazards.append(
            {"intensity": intensity.ravel(), "first_haz": 1 if k == 0 else 0,
             "night": int(rng.uniform() < config.night_prob), "ordering_index": k}
        )

    log_mean = rng.uniform(2.5, 4.5)
    pop_total = np.floor(np.exp(rng.normal(log_mean, 1.2, size=n))).astype(np.int64)
    pop_total = np.clip(pop_total, 0, None)
    base, rem = np.divmod(pop_total, N_QUANTILES)
    pop = base[:, None] + (np.arange(N_QUANTILES)[None, :] < rem[:, None])

    build = None
    if rng.uniform() < config.build_prob:
        ratio = rng.uniform(0.25, 0.4)
        build = np.clip(np.rint(pop_total * ratio + rng.normal(0.0, 2.0, size=n)), 0, None).astype(np.int64)

    # block-constant covariates mimic subnational aggregation
    bs = config.block_size
    block_id = (rr // bs) * (cols // bs + 1) + (cc // bs)
    n_blocks = int(block_id.max()) + 1
    shdi = rng.uniform(0.35, 0.95, size=n_blocks)[block_id].ravel()
    gnic = np.exp(rng.normal(9.0, 0.5, size=n_blocks))[block_id].ravel()
    eqfreq = np.exp(rng.normal(-2.5, 0.8, size=n_blocks))[block_id].ravel()
    vs30 = np.exp(rng.normal(6.0, 0.35, size=n))
    popdens = pop_total.astype(float)

    share_weights = np.sort(rng.uniform(0.4, 1.6, size=10))
    income_shares = (share_weights / share_weights.sum())[1:9]

    georef = {
        "origin_lon": round(float(rng.uniform(-180.0, 180.0)), 2),
        "origin_lat": round(float(rng.uniform(-60.0, 60.0)), 2),
        "cell_arcmin": 2.5,
    }
    return {
        "event_id": event_id,
        "shape": (rows, cols),
        "georef": georef,
        "hazards": hazards,
        "pop": pop,
        "build": build,
        "raw": {"vs30": vs30, "popdens": popdens, "shdi": shdi, "gnic": gnic, "eqfreq": eqfreq},
        "income_shares": income_shares,
    }


def _pooled_transformed(raws, name):
    pooled = []
    for raw in raws:
        values = raw["raw"][name]
        if name == "gnic":
            per_q = np.stack(
                [split_gnic(values, raw["income_shares"], q) for q in range(N_QUANTILES)], axis=1
            )
            pooled.append(per_q.ravel())
        else:
            pooled.append(COVARIATE_TRANSFORMS[name](np.asarray(values, dtype=float)))
    return np.concatenate(pooled)


def standardization_constants(raws):
    """Corpus-level (mean, sd) per covariate after the model transforms."""
    constants = {}
    for name in ("vs30", "popdens", "shdi", "gnic", "eqfreq"):
        pooled = _pooled_transformed(raws, name)
        sd = float(pooled.std())
        if sd <= 0:
            sd = 1.0
        constants[name] = (float(pooled.mean()), sd)
    return constants


def covariate_percentiles(raws, constants, lo=0.01, hi=0.99):
    """Empirical 1st/99th percentiles of each standardized covariate."""
    out = {}
    for name in ("vs30", "popdens", "shdi", "gnic", "eqfreq"):
        pooled = _pooled_transformed(raws, name)
        mean, sd = constants[name]
        std = (pooled - mean) / sd
        out[name] = (float(np.quantile(std, lo)), float(np.quantile(std, hi)))
    return out


def _assemble(raw, constants):
    hazards = [HazardInstance(**h) for h in raw["hazards"]]
    bundle = EventBundle(
        event_id=raw["event_id"],
        shape=raw["shape"],
        georef=raw["georef"],
        hazards=hazards,
        exposure=ExposureGrid(pop=raw["pop"], build=raw["build"]),
        covariates=CovariateGrid(raw=raw["raw"], income_shares=raw["income_shares"], constants=constants),
        regions=RegionMap(regions={}),
        observations=[],
        provenance="synthetic",
    )
    return bundle


def generate_event(config, rng, event_id="event_000", constants=None):
    """One synthetic event bundle (no observations attached yet).

    When `constants` is None the event is standardized against its own
    cells; generate_dataset instead shares corpus-level constants.
    """
    raw = _raw_event(config, rng, event_id)
    if constants is None:
        constants = standardization_constants([raw])
    return _assemble(raw, constants).validate()


def _voronoi_partition(shape, n_clusters, rng):
    rows, cols = shape
    n = rows * cols
    seeds_flat = rng.choice(n, size=n_clusters, replace=False)
    rr, cc = np.divmod(np.arange(n), cols)
    sr, sc = np.divmod(seeds_flat, cols)
    dist = (rr[:, None] - sr[None, :]) ** 2 + (cc[:, None] - sc[None, :]) ** 2
    return np.argmin(dist, axis=1)


def generate_observations(event, theta_true, pattern, rng, i0=I0_DEFAULT, cluster_range=(2, 8)):
    """One forward draw under theta_true, aggregated per the pattern.

    Returns (regions, observations, truth_record); the caller attaches the
    first two to the bundle.
    """
    ctx = SimContext(event, i0=i0)
    batch = simulate_impact_batch(ctx, theta_true, rng, m=1)
    grids = {
        "mort": batch.mort_cells[0],
        "disp": batch.disp_cells[0],
        "builddam": batch.bdam_cells[0],
    }
    impacts = ["mort", "disp"] + (["builddam"] if event.exposure.build is not None else [])
    n = event.n_cells

    regions = {}
    observations = []
    if pattern == "total":
        regions["all"] = np.arange(n, dtype=np.int64)
        for impact in impacts:
            observations.append(Observation("all", impact, int(grids[impact].sum())))
        region_map = RegionMap(regions=regions, is_partition=True)
    elif pattern == "clusters":
        lo, hi = cluster_range
        for impact in impacts:
            k = int(rng.integers(lo, hi + 1))
            if k > n:
                warnings.warn(f"{event.event_id}: {k} clusters requested on {n} cells; reduced")
                k = n
            assign = _voronoi_partition(event.shape, k, rng)
            for c in range(k):
                rid = f"{impact}_c{c}"
                cells = np.flatnonzero(assign == c)
                regions[rid] = cells
                observations.append(Observation(rid, impact, int(grids[impact][cells].sum())))
        region_map = RegionMap(regions=regions, is_partition=False)
    else:
        raise InvalidInputError(f"aggregation pattern {pattern!r} unknown")

    truth_record = {
        "pattern": pattern,
        "xi": [float(v) for v in batch.xi[0]],
        "totals": {impact: int(grids[impact].sum()) for impact in impacts},
    }
    return region_map, observations, truth_record


def generate_point_building_data(event, theta_true, rng, i0=I0_DEFAULT):
    """Per-building damage labels under one realized error draw.

    Buildings sit in cells in proportion to the building counts; each is
    labeled damaged with its cell's realized damage probability, combining
    hazards, so the error draws are the only source of misidentification.
    """
    if event.exposure.build is None:
        raise InvalidInputError(f"{event.event_id}: no building layer for point data")
    ctx = SimContext(event, i0=i0)
    p_cell = realized_builddam_probability(ctx, theta_true, rng, m=1)[0]
    build = event.exposure.build
    occupied = np.flatnonzero(build > 0)
    damaged = rng.binomial(build[occupied], p_cell[occupied])
    max_intensity = np.max([h.intensity for h in event.hazards], axis=0)
    return PointData(
        cell=occupied,
        n_buildings=build[occupied],
        n_damaged=damaged,
        n_possible=np.zeros(occupied.size, dtype=np.int64),
        max_intensity=max_intensity[occupied],
    )


def split_train_test(events, ratio, mode, seed=0):
    """Train/test split of a bundle list.

    random mode shuffles with the seed and holds out a (1 - ratio) share;
    stratified mode sorts by total observed mortality and sends every third
    event (sorted positions 3, 6, 9, ...) to the test set.
    """
    n = len(events)
    if mode == "random":
        n_test = int(round((1.0 - ratio) * n))
        if n_test < 1 or n_test >= n:
            raise InvalidInputError(f"split ratio {ratio} leaves an empty train or test set")
        perm = np.random.default_rng(seed).permutation(n)
        test_idx = set(int(i) for i in perm[:n_test])
    elif mode == "stratified":
        if n < 3:
            raise InvalidInputError("stratified split needs at least 3 events")
        totals = np.array(
            [sum(o.value for o in b.observations if o.impact == "mort") for b in events]
        )
        order = np.argsort(totals, kind="stable")
        test_idx = {int(order[i]) for i in range(n) if (i + 1) % 3 == 0}
    else:
        raise InvalidInputError(f"split mode {mode!r} unknown")
    train = [b for i, b in enumerate(events) if i not in test_idx]
    test = [b for i, b in enumerate(events) if i in test_idx]
    return train, test


def generate_dataset(config, seed):
    """Generate a full dataset: bundles, oracle truth record, and extras.

    Returns (events, truth, extra) where truth holds theta_true and the
    per-event latent draws, and extra carries dataset-level metadata
    (covariate percentiles) that fits on this dataset may use.
    """
    raws = [
        _raw_event(config, seeds.rng(seed, seeds.GENERATE, 0, i), f"event_{i:03d}")
        for i in range(config.n_events)
    ]
    constants = standardization_constants(raws)
    percentiles = covariate_percentiles(raws, constants)

    spec = PriorSpec(hl_mode="extremes", covariate_percentiles=percentiles,
                     hl_bounds=EXTREMES_SCREEN)
    violation = higher_level_check(config.theta_true, spec)
    if violation is not None:
        raise ConfigError(f"theta_true fails the feasibility screen: {violation}")

    events = []
    truth_events = {}
    for i, raw in enumerate(raws):
        bundle = _assemble(raw, constants)
        pattern_rng = seeds.rng(seed, seeds.GENERATE, 1, i)
        pattern = "total" if pattern_rng.uniform() < config.total_pattern_weight else "clusters"
        regions, observations, record = generate_observations(
            bundle, config.theta_true, pattern, seeds.rng(seed, seeds.GENERATE, 2, i),
            i0=config.i0, cluster_range=config.cluster_range,
        )
        bundle.regions = regions
        bundle.observations = observations
        truth_events[bundle.event_id] = record
        events.append(bundle.validate())

    with_build = [i for i, b in enumerate(events) if b.exposure.build is not None]
    n_point = int(round(config.point_fraction * config.n_events))
    point_rng = seeds.rng(seed, seeds.GENERATE, 3)
    chosen = point_rng.choice(with_build, size=min(n_point, len(with_build)), replace=False)
    for i in sorted(int(c) for c in chosen):
        events[i].point_data = generate_point_building_data(
            events[i], config.theta_true, seeds.rng(seed, seeds.GENERATE, 4, i), i0=config.i0
        )
        truth_events[events[i].event_id]["has_point_data"] = True

    truth = {
        "theta_true": {k: float(v) for k, v in config.theta_true.to_dict().items()},
        "per_event": truth_events,
    }
    extra = {"covariate_percentiles": {k: list(v) for k, v in percentiles.items()}}
    return events, truth, extra
