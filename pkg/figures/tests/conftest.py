"""Tiny fixture CSVs shared by the rendering tests."""

import csv

import pytest

FIXTURES = {
    "tolerance-trace": (
        ["step", "delta", "ess", "acc_rate", "acc_rate_sim", "mean_loss"],
        [
            [0, 12.0, 40, "nan", "nan", 8.0],
            [1, 9.5, 32, 0.2, 0.3, 7.1],
            [2, 8.75, 30, 0.15, 0.25, 6.9],
        ],
    ),
    "prior-posterior": (
        ["source", "parameter", "value"],
        [["prior", "mu_mort", v] for v in (9.5, 10.0, 11.0, 12.0, 13.0)]
        + [["posterior", "mu_mort", v] for v in (9.8, 9.9, 10.0, 10.1, 10.4)]
        + [["truth", "mu_mort", 9.9]]
        + [["prior", "rho", v] for v in (0.1, 0.4, 0.5, 0.8, 0.9)]
        + [["posterior", "rho", v] for v in (0.3, 0.45, 0.5, 0.55, 0.6)],
    ),
    "predictive-intervals": (
        ["event", "region", "impact", "observed", "mean", "median", "q_lo", "q_hi", "n_draws"],
        [
            ["e0", "all", "mort", 12, 10.2, 9.0, 2.0, 30.0, 50],
            ["e1", "all", "mort", 0, 1.2, 1.0, 0.0, 5.0, 50],
            ["e1", "all", "disp", 140, 150.0, 120.0, 40.0, 400.0, 50],
            ["e2", "all", "disp", 15, 22.0, 18.0, 3.0, 90.0, 50],
        ],
    ),
    "roc": (
        ["fpr", "tpr"],
        [[0.0, 0.0], [0.5, 1.0], [1.0, 1.0]],
    ),
    "crps-bias": (
        ["M", "sigma", "mean_score", "trials"],
        [[5, s, v, 1000] for s, v in ((0.6, 0.54), (0.8, 0.52), (1.0, 0.55), (1.2, 0.60))]
        + [[100, s, v, 1000] for s, v in ((0.6, 0.60), (0.8, 0.57), (1.0, 0.56), (1.2, 0.58))],
    ),
    "binned-damage": (
        ["event", "intensity_bin", "n_buildings", "observed_fraction", "mean_model_p"],
        [
            ["e0", 5.0, 40, 0.05, 0.08],
            ["e0", 6.0, 35, 0.2, 0.25],
            ["e0", 7.0, 25, 0.55, 0.5],
            ["e1", 6.5, 60, 0.3, 0.35],
            ["e1", 7.5, 45, 0.7, 0.65],
        ],
    ),
}


def write_fixture(path, kind):
    header, rows = FIXTURES[kind]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


@pytest.fixture
def fixture_csv(tmp_path):
    def factory(kind):
        return write_fixture(tmp_path / f"{kind}.csv", kind)

    return factory
