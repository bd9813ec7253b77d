"""Posterior-predictive tests: sampling, intervals, coverage, cell maps."""

import numpy as np
import pytest

from quakeimpact.bundle import Observation, RegionMap
from quakeimpact.errors import InvalidInputError
from quakeimpact.predict import (
    cell_damage_probability,
    coverage_report,
    posterior_predictive,
)

from conftest import make_bundle, make_params


def _zero_impact_params():
    return make_params(mu_mort=13.5, mu_disp=10.5, mu_builddam=10.0,
                       kappa_mort=0.25, kappa_disp=0.25, kappa_builddam=0.25,
                       sigma_mort=0.0, sigma_disp=0.0, sigma_builddam=0.0,
                       sigma_local_mort=0.0)


class TestPosteriorPredictive:
    def test_degenerate_zero_population(self):
        bundle = make_bundle([np.full((2, 2), 7.0)],
                             observations=[Observation("all", "mort", 0)])
        summary = posterior_predictive([bundle], _zero_impact_params(), draws=20, seed=1)
        rec = summary.find("test_event", "all", "mort")
        assert rec.median == 0.0
        assert rec.quantile(0.05) == rec.quantile(0.95) == 0.0
        assert np.all(summary.cell_means["test_event"]["mort"] == 0.0)

    def test_mixture_widens_intervals(self):
        bundle = make_bundle([np.full((3, 3), 8.5)], pop=1000,
                             observations=[Observation("all", "mort", 10)])
        low = make_params(mu_mort=12.0, sigma_mort=0.0, sigma_disp=0.0,
                          sigma_builddam=0.0, sigma_local_mort=0.0)
        high = make_params(mu_mort=9.0, sigma_mort=0.0, sigma_disp=0.0,
                           sigma_builddam=0.0, sigma_local_mort=0.0)
        mix = np.stack([low.to_vector(), high.to_vector()])
        s_low = posterior_predictive([bundle], low, draws=60, seed=2)
        s_mix = posterior_predictive([bundle], mix, draws=60, seed=2)
        width = lambda s: (s.find("test_event", "all", "mort").quantile(0.95)
                           - s.find("test_event", "all", "mort").quantile(0.05))
        assert width(s_mix) >= width(s_low)

    def test_fixed_seed_reproducible(self):
        bundle = make_bundle([np.full((2, 2), 7.5)],
                             observations=[Observation("all", "disp", 5)])
        a = posterior_predictive([bundle], make_params(), draws=15, seed=9)
        b = posterior_predictive([bundle], make_params(), draws=15, seed=9)
        for ra, rb in zip(a.records, b.records):
            assert np.array_equal(ra.samples, rb.samples)

    def test_cell_means_average_draws(self):
        bundle = make_bundle([np.full((2, 2), 8.0)],
                             observations=[Observation("all", "mort", 0)])
        summary = posterior_predictive([bundle], make_params(), draws=30, seed=3)
        total_from_cells = summary.cell_means["test_event"]["mort"].sum()
        rec = summary.find("test_event", "all", "mort")
        assert total_from_cells == pytest.approx(rec.mean, rel=1e-9)

    def test_empty_source_rejected(self):
        bundle = make_bundle([np.full((2, 2), 7.0)])
        with pytest.raises(InvalidInputError):
            posterior_predictive([bundle], np.empty((0, 19)), draws=5, seed=0)


class TestCoverageReport:
    def _summary_with(self, observed, samples):
        from quakeimpact.predict import PredictiveRecord, PredictiveSummary

        records = [
            PredictiveRecord(event_id="e", region=f"r{k}", impact="mort",
                             samples=np.asarray(s, dtype=float), observed=o)
            for k, (o, s) in enumerate(zip(observed, samples))
        ]
        return PredictiveSummary(records=records, cell_means={}, n_draws=len(samples[0]))

    def test_observation_at_median_covered(self):
        samples = np.arange(101.0)
        summary = self._summary_with([50], [samples])
        assert coverage_report(summary, level=0.9)["overall"] == 1.0

    def test_far_outside_not_covered(self):
        summary = self._summary_with([1000], [np.arange(101.0)])
        assert coverage_report(summary, level=0.9)["overall"] == 0.0

    def test_monotone_in_level(self):
        rng = np.random.default_rng(5)
        observed = rng.integers(0, 50, size=40).tolist()
        samples = [rng.poisson(20, size=200) for _ in range(40)]
        summary = self._summary_with(observed, samples)
        c80 = coverage_report(summary, level=0.8)["overall"]
        c95 = coverage_report(summary, level=0.95)["overall"]
        assert c95 >= c80

    def test_positive_only_filter(self):
        summary = self._summary_with([0, 5], [np.zeros(50), np.full(50, 5.0)])
        full = coverage_report(summary, level=0.9)
        pos = coverage_report(summary, level=0.9, positive_only=True)
        assert full["n_coordinates"] == 2
        assert pos["n_coordinates"] == 1

    def test_no_observations_error(self):
        from quakeimpact.predict import PredictiveRecord, PredictiveSummary

        summary = PredictiveSummary(
            records=[PredictiveRecord("e", "r", "mort", np.zeros(5), observed=None)],
            cell_means={}, n_draws=5,
        )
        with pytest.raises(InvalidInputError):
            coverage_report(summary)


class TestCellDamageProbability:
    def test_below_threshold_zero(self):
        grid = np.full((3, 3), 8.0)
        grid[0, 0] = 3.0
        bundle = make_bundle([grid], observations=[Observation("all", "mort", 0)])
        med = cell_damage_probability(bundle, make_params(), draws=7, seed=4)
        assert med[0] == 0.0
        assert med[4] > 0.0

    def test_single_draw_median_is_realization(self):
        bundle = make_bundle([np.full((2, 2), 8.0)],
                             observations=[Observation("all", "mort", 0)])
        a = cell_damage_probability(bundle, make_params(), draws=1, seed=6)
        b = cell_damage_probability(bundle, make_params(), draws=1, seed=6)
        assert np.array_equal(a, b)
        assert np.all((a > 0) & (a < 1))

    def test_median_invariant_to_draw_order(self):
        bundle = make_bundle([np.full((2, 2), 8.0)],
                             observations=[Observation("all", "mort", 0)])
        probs = cell_damage_probability(bundle, make_params(), draws=9, seed=7)
        assert probs.shape == (4,)

    def test_missing_building_layer(self):
        bundle = make_bundle([np.full((2, 2), 8.0)], build=None,
                             observations=[Observation("all", "mort", 0)])
        with pytest.raises(InvalidInputError):
            cell_damage_probability(bundle, make_params(), draws=3, seed=0)

    def test_multi_hazard_combination_monotone(self):
        grid = np.full((2, 2), 7.5)
        one = make_bundle([grid], observations=[Observation("all", "mort", 0)])
        two = make_bundle([grid, grid], observations=[Observation("all", "mort", 0)])
        params = make_params(sigma_mort=0.0, sigma_disp=0.0, sigma_builddam=0.0,
                             sigma_local_mort=0.0)
        p_one = cell_damage_probability(one, params, draws=1, seed=8)
        p_two = cell_damage_probability(two, params, draws=1, seed=8)
        assert np.all(p_two >= p_one - 1e-12)
