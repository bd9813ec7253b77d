"""Shared fixtures: hand-built bundles with exactly controlled covariates."""

import numpy as np
import pytest

from quakeimpact.bundle import (
    CovariateGrid,
    EventBundle,
    ExposureGrid,
    HazardInstance,
    Observation,
    RegionMap,
)
from quakeimpact.params import ModelParams


def make_params(**overrides):
    """A valid parameter vector with mid-box values, overridable per field."""
    values = dict(
        beta=np.zeros(8),
        mu_mort=10.0,
        kappa_mort=1.0,
        mu_disp=8.0,
        kappa_disp=1.0,
        mu_builddam=7.5,
        kappa_builddam=1.0,
        sigma_mort=0.5,
        sigma_disp=0.5,
        sigma_builddam=0.5,
        sigma_local_mort=0.5,
        rho=0.3,
    )
    values.update(overrides)
    return ModelParams(**values)


def make_bundle(intensities, pop=100, build=50, std_cov=None, regions=None,
                observations=None, flags=None, shape=None, event_id="test_event",
                income_shares=None):
    """Build a bundle whose standardized covariates take exact target values.

    `intensities` is a list of 2-D grids (one per hazard).  `std_cov` maps
    covariate names to the standardized values the model should see; raw
    layers are constructed by inverting the load-time transforms against
    identity constants (mean 0, sd 1).
    """
    grids = [np.asarray(g, dtype=float) for g in intensities]
    shape = shape or grids[0].shape
    n = shape[0] * shape[1]
    std_cov = dict(std_cov or {})
    target = {name: np.broadcast_to(np.asarray(std_cov.get(name, 0.0), dtype=float), (n,))
              for name in ("vs30", "popdens", "shdi", "gnic", "eqfreq")}
    raw = {
        "vs30": np.exp(target["vs30"]),
        "popdens": np.exp(target["popdens"]) - 0.1,
        "shdi": target["shdi"].copy(),
        "gnic": target["gnic"].copy(),
        "eqfreq": np.exp(target["eqfreq"]) - 0.001,
    }
    constants = {name: (0.0, 1.0) for name in raw}
    shares = np.full(8, 0.1) if income_shares is None else np.asarray(income_shares)

    flags = flags or [(1, 0)] + [(0, 0)] * (len(grids) - 1)
    hazards = [
        HazardInstance(intensity=g.ravel(), first_haz=f[0], night=f[1], ordering_index=k)
        for k, (g, f) in enumerate(zip(grids, flags))
    ]
    pop_arr = np.broadcast_to(np.asarray(pop, dtype=np.int64), (n, 8)).copy()
    build_arr = None if build is None else np.broadcast_to(np.asarray(build, dtype=np.int64), (n,)).copy()
    region_map = RegionMap(regions=regions if regions is not None else {"all": np.arange(n)},
                           is_partition=regions is None)
    obs = observations if observations is not None else [Observation("all", "mort", 0)]
    bundle = EventBundle(
        event_id=event_id,
        shape=shape,
        georef={"origin_lon": 10.0, "origin_lat": 20.0, "cell_arcmin": 2.5},
        hazards=hazards,
        exposure=ExposureGrid(pop=pop_arr, build=build_arr),
        covariates=CovariateGrid(raw=raw, income_shares=shares, constants=constants),
        regions=region_map,
        observations=obs,
        provenance="unit test",
    )
    return bundle.validate()


@pytest.fixture
def flat_bundle():
    """3x3 grid, one hazard at intensity 7 everywhere, zero covariates."""
    return make_bundle([np.full((3, 3), 7.0)])


@pytest.fixture(scope="session")
def tiny_dataset():
    """A small generated dataset shared by integration-style tests."""
    from quakeimpact.synthetic import GenConfig, generate_dataset

    config = GenConfig(n_events=6, grid_min=6, grid_max=10, point_fraction=0.5)
    events, truth, extra = generate_dataset(config, seed=2024)
    return events, truth, extra
