"""Synthetic generator tests: construction bounds, block structure,
determinism, observation aggregation, point data, and splits."""

import numpy as np
import pytest

from quakeimpact import seeds
from quakeimpact.bundle import load_dataset, save_dataset
from quakeimpact.errors import ConfigError, InvalidInputError
from quakeimpact.model import SimContext, simulate_impact_batch
from quakeimpact.synthetic import (
    GenConfig,
    NOISE_CAP,
    PEAK_RANGE,
    default_theta_true,
    generate_dataset,
    generate_event,
    generate_observations,
    generate_point_building_data,
    split_train_test,
)


class TestGenerateEvent:
    def test_intensity_bounded(self):
        config = GenConfig(n_events=1, grid_min=10, grid_max=20)
        for seed in range(10):
            event = generate_event(config, seeds.rng(seed, 0), f"e{seed}")
            for h in event.hazards:
                assert h.intensity.max() <= PEAK_RANGE[1] + NOISE_CAP
                assert h.intensity.min() >= 0.0

    def test_block_constant_covariates(self):
        config = GenConfig(n_events=1, grid_min=12, grid_max=12, block_size=4)
        event = generate_event(config, seeds.rng(3, 0), "e")
        rows, cols = event.shape
        rr, cc = np.indices((rows, cols))
        block_id = ((rr // 4) * (cols // 4 + 1) + cc // 4).ravel()
        for name in ("shdi", "gnic", "eqfreq"):
            layer = event.covariates.raw[name]
            for b in np.unique(block_id):
                assert np.unique(layer[block_id == b]).size == 1, name

    def test_seed_reproducibility_byte_identical(self, tmp_path):
        config = GenConfig(n_events=2, grid_min=6, grid_max=9)
        for rep, out in ((0, "a"), (1, "b")):
            events, truth, extra = generate_dataset(config, seed=505)
            save_dataset(events, tmp_path / out, truth=truth, extra=extra)
        files_a = sorted((tmp_path / "a").rglob("*"))
        files_b = sorted((tmp_path / "b").rglob("*"))
        assert [f.name for f in files_a] == [f.name for f in files_b]
        for fa, fb in zip(files_a, files_b):
            if fa.is_file():
                assert fa.read_bytes() == fb.read_bytes(), fa.name

    def test_grid_bounds_enforced(self):
        with pytest.raises(ConfigError):
            GenConfig(grid_min=4, grid_max=60)

    def test_population_quantiles_sum(self):
        config = GenConfig(n_events=1, grid_min=8, grid_max=8)
        event = generate_event(config, seeds.rng(9, 0), "e")
        totals = event.exposure.pop.sum(axis=1)
        assert np.all(event.exposure.pop >= 0)
        assert np.all(np.abs(event.exposure.pop.max(axis=1) - event.exposure.pop.min(axis=1)) <= 1)
        assert totals.sum() > 0


class TestGenerateObservations:
    def test_total_pattern_one_observation_per_impact(self):
        config = GenConfig(n_events=1, grid_min=8, grid_max=10, build_prob=1.0)
        event = generate_event(config, seeds.rng(1, 0), "e")
        regions, obs, record = generate_observations(
            event, default_theta_true(), "total", seeds.rng(1, 1)
        )
        assert sorted(o.impact for o in obs) == ["builddam", "disp", "mort"]
        assert all(o.region == "all" for o in obs)
        assert regions.is_partition

    def test_cluster_sums_match_grid_total(self):
        config = GenConfig(n_events=1, grid_min=10, grid_max=12, build_prob=1.0)
        event = generate_event(config, seeds.rng(2, 0), "e")
        regions, obs, record = generate_observations(
            event, default_theta_true(), "clusters", seeds.rng(2, 1)
        )
        event.regions = regions
        event.observations = obs
        for impact in ("mort", "disp", "builddam"):
            total = sum(o.value for o in obs if o.impact == impact)
            assert total == record["totals"][impact]
            cells = np.concatenate(
                [regions.cells(o.region) for o in obs if o.impact == impact]
            )
            assert sorted(cells.tolist()) == list(range(event.n_cells))

    def test_zero_probability_truth_gives_zero_observations(self):
        config = GenConfig(n_events=1, grid_min=6, grid_max=8)
        event = generate_event(config, seeds.rng(4, 0), "e")
        theta = default_theta_true()
        theta.mu_mort, theta.mu_disp, theta.mu_builddam = 13.5, 10.5, 10.0
        theta.kappa_mort = theta.kappa_disp = theta.kappa_builddam = 0.25
        theta.sigma_mort = theta.sigma_disp = theta.sigma_builddam = 0.0
        theta.sigma_local_mort = 0.0
        regions, obs, _ = generate_observations(event, theta, "total", seeds.rng(4, 1))
        assert all(o.value == 0 for o in obs)

    def test_cluster_reduction_warns(self):
        config = GenConfig(n_events=1, grid_min=2, grid_max=2)
        event = generate_event(config, seeds.rng(5, 0), "e")
        with pytest.warns(UserWarning, match="reduced"):
            generate_observations(event, default_theta_true(), "clusters",
                                  seeds.rng(5, 1), cluster_range=(8, 8))


class TestPointBuildingData:
    def test_extreme_probabilities(self):
        config = GenConfig(n_events=1, grid_min=6, grid_max=8, build_prob=1.0)
        event = generate_event(config, seeds.rng(6, 0), "e")
        theta = default_theta_true()
        # force p = 1 in exposed cells
        theta.mu_builddam, theta.kappa_builddam = 6.5, 0.25
        theta.sigma_mort = theta.sigma_disp = theta.sigma_builddam = 0.0
        theta.sigma_local_mort = 0.0
        pd = generate_point_building_data(event, theta, seeds.rng(6, 1))
        exposed = np.max([h.intensity for h in event.hazards], axis=0) >= 4.3
        exposed_rows = exposed[pd.cell] & (pd.max_intensity >= 6.5 - 1.0)
        strong = pd.max_intensity >= 8.0
        assert np.all(pd.n_damaged[strong] == pd.n_buildings[strong])
        # cells below threshold keep probability zero
        below = pd.max_intensity < 4.3
        assert np.all(pd.n_damaged[below] == 0)

    def test_binomial_oracle_on_large_cell(self):
        from quakeimpact.bundle import Observation
        from conftest import make_bundle

        bundle = make_bundle([np.full((1, 1), 8.0)], pop=10, build=10_000,
                             observations=[Observation("all", "mort", 0)])
        theta = default_theta_true()
        theta.sigma_mort = theta.sigma_disp = theta.sigma_builddam = 0.0
        theta.sigma_local_mort = 0.0
        pd = generate_point_building_data(bundle, theta, seeds.rng(7, 1))
        from scipy.stats import norm

        ctx = SimContext(bundle)
        vuln = (theta.beta[[0, 1, 2, 4]] * 0).sum() + theta.beta[5]  # first_haz flag
        gnic = theta.beta[3] * ctx.hazards[0].gnic_bdam[0]
        p = norm.cdf(8.0 + vuln + gnic, loc=theta.mu_builddam, scale=theta.kappa_builddam)
        three_sigma = 3 * np.sqrt(p * (1 - p) * 10_000)
        assert abs(pd.n_damaged[0] - p * 10_000) < three_sigma

    def test_missing_building_layer(self):
        config = GenConfig(n_events=1, grid_min=6, grid_max=6, build_prob=0.0)
        event = generate_event(config, seeds.rng(8, 0), "e")
        with pytest.raises(InvalidInputError):
            generate_point_building_data(event, default_theta_true(), seeds.rng(8, 1))


class TestSplits:
    def _events_with_mortality(self, totals):
        from quakeimpact.bundle import Observation
        from conftest import make_bundle

        events = []
        for k, t in enumerate(totals):
            events.append(
                make_bundle([np.full((2, 2), 7.0)], event_id=f"ev{k}",
                            observations=[Observation("all", "mort", t)])
            )
        return events

    def test_stratified_every_third_sorted_position(self):
        totals = [50, 10, 90, 30, 70, 20, 80, 40, 60]
        events = self._events_with_mortality(totals)
        train, test = split_train_test(events, 2 / 3, "stratified")
        # sorted ascending: positions 3, 6, 9 hold mortalities 30, 60, 90
        test_totals = sorted(o.value for b in test for o in b.observations)
        assert test_totals == [30, 60, 90]
        assert len(train) == 6

    def test_random_ratio_one_rejected(self):
        events = self._events_with_mortality([1, 2, 3])
        with pytest.raises(InvalidInputError):
            split_train_test(events, 1.0, "random")

    def test_random_split_deterministic(self):
        events = self._events_with_mortality(list(range(10)))
        a_train, a_test = split_train_test(events, 0.7, "random", seed=3)
        b_train, b_test = split_train_test(events, 0.7, "random", seed=3)
        assert [b.event_id for b in a_test] == [b.event_id for b in b_test]
        assert len(a_test) == 3

    def test_stratified_needs_three(self):
        events = self._events_with_mortality([1, 2])
        with pytest.raises(InvalidInputError):
            split_train_test(events, 0.5, "stratified")


class TestGenerateDataset:
    def test_round_trip_revalidates(self, tmp_path, tiny_dataset):
        events, truth, extra = tiny_dataset
        save_dataset(events, tmp_path / "ds", truth=truth, extra=extra)
        loaded = load_dataset(tmp_path / "ds")
        assert [b.event_id for b in loaded] == [b.event_id for b in events]
        for a, b in zip(events, loaded):
            assert np.array_equal(a.exposure.pop, b.exposure.pop)
            assert np.allclose(a.covariates.gnic_q_std, b.covariates.gnic_q_std)
            for ha, hb in zip(a.hazards, b.hazards):
                assert np.array_equal(ha.intensity, hb.intensity)

    def test_truth_records_totals(self, tiny_dataset):
        events, truth, extra = tiny_dataset
        for b in events:
            rec = truth["per_event"][b.event_id]
            mort_total = sum(o.value for o in b.observations if o.impact == "mort")
            assert rec["totals"]["mort"] == mort_total

    def test_theta_true_screen_enforced(self):
        theta = default_theta_true()
        theta.mu_mort = 9.0
        theta.kappa_mort = 3.0  # p_mort at 4.6 far above the relaxed 0.03 bound
        config = GenConfig(n_events=2, grid_min=6, grid_max=8, theta_true=theta)
        with pytest.raises(ConfigError, match="screen"):
            generate_dataset(config, seed=1)

    def test_shared_standardization_constants(self, tiny_dataset):
        events, _, _ = tiny_dataset
        consts = [b.covariates.constants for b in events]
        assert all(c == consts[0] for c in consts)
