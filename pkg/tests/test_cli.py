"""End-to-end CLI tests at tiny scale: pipeline, determinism, exit codes."""

import json

import numpy as np
import pytest

from quakeimpact.cli import main

BASE_CONFIG = {
    "seed": 314,
    "threads": 1,
    "m_replicates": 4,
    "hl_mode": "extremes",
    "gen_n_events": 6,
    "gen_grid_min": 6,
    "gen_grid_max": 9,
    "gen_build_prob": 1.0,
    "gen_point_fraction": 0.5,
    "smc_particles": 24,
    "smc_max_steps": 4,
    "smc_allow_small_m": True,
    "mcmc_iterations": 40,
    "mcmc_warmup": 20,
    "mcmc_chains": 1,
    "predict_draws": 30,
    "roc_draws": 5,
    "crps_m_values": [2],
    "crps_sigma_min": 0.8,
    "crps_sigma_max": 1.0,
    "crps_sigma_step": 0.1,
    "crps_trials": 500,
}


def write_config(path, mode, **overrides):
    payload = dict(BASE_CONFIG)
    payload["mode"] = mode
    payload.update(overrides)
    path.write_text(json.dumps(payload))
    return str(path)


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """simulate -> fit smc -> predict -> evaluate, shared by the tests."""
    root = tmp_path_factory.mktemp("pipeline")
    cfg_sim = write_config(root / "sim.json", "simulate-data")
    cfg_fit = write_config(root / "fit.json", "fit-smc")
    cfg_pred = write_config(root / "pred.json", "predict")
    cfg_eval = write_config(root / "eval.json", "evaluate")
    data, fit, pred, eva = (str(root / n) for n in ("data", "fit", "pred", "eval"))
    assert main(["simulate-data", "--config", cfg_sim, "--out", data]) == 0
    assert main(["fit", "smc", "--config", cfg_fit, "--out", fit, "--data", data]) == 0
    assert main(["predict", "--config", cfg_pred, "--out", pred,
                 "--data", data, "--fit", fit]) == 0
    assert main(["evaluate", "--config", cfg_eval, "--out", eva,
                 "--data", data, "--pred", pred, "--fit", fit]) == 0
    return root


class TestPipeline:
    def test_artifacts_exist(self, pipeline):
        assert (pipeline / "data" / "dataset.json").exists()
        assert (pipeline / "data" / "truth.json").exists()
        assert (pipeline / "fit" / "trace.csv").exists()
        assert (pipeline / "fit" / "population.npz").exists()
        assert (pipeline / "pred" / "predictive_summary.csv").exists()
        assert (pipeline / "eval" / "coverage.csv").exists()
        assert (pipeline / "eval" / "roc_points.csv").exists()
        for stage in ("data", "fit", "pred", "eval"):
            summary = json.loads((pipeline / stage / "run_summary.json").read_text())
            assert summary["status"] == "ok"
            assert summary["seed"] == 314
            assert "config_hash" in summary and "wall_seconds" in summary

    def test_trace_delta_monotone(self, pipeline):
        import csv

        with open(pipeline / "fit" / "trace.csv") as fh:
            rows = list(csv.DictReader(fh))
        deltas = [float(r["delta"]) for r in rows]
        assert all(a >= b for a, b in zip(deltas, deltas[1:]))

    def test_artifacts_reloadable(self, pipeline):
        from quakeimpact.bundle import load_dataset, read_map_csv
        from quakeimpact.cli import load_theta_source, read_csv

        events = load_dataset(pipeline / "data")
        assert len(events) == 6
        thetas = load_theta_source(pipeline / "fit")
        assert thetas.shape[1] == 19
        rows = read_csv(pipeline / "pred" / "predictive_summary.csv")
        assert {"event", "region", "impact", "median"} <= set(rows[0])
        maps = sorted((pipeline / "pred" / "maps").glob("*.csv"))
        grid, georef = read_map_csv(maps[0])
        assert grid.ndim == 2 and "cell_arcmin" in georef

    def test_export_figure_data(self, pipeline):
        root = pipeline
        cfg_crps = write_config(root / "crps.json", "crps-experiment")
        crps_out = str(root / "crps")
        assert main(["crps-experiment", "--config", cfg_crps, "--out", crps_out]) == 0
        cfg_exp = write_config(root / "exp.json", "export-figure-data")
        out = str(root / "figdata")
        code = main([
            "export-figure-data", "--config", cfg_exp, "--out", out,
            "--data", str(root / "data"), "--fit", str(root / "fit"),
            "--pred", str(root / "pred"), "--eval", str(root / "eval"),
            "--crps", crps_out,
        ])
        assert code == 0
        for name in ("tolerance_trace", "prior_posterior", "predictive_intervals",
                     "roc_points", "crps_bias", "binned_damage"):
            assert (root / "figdata" / f"{name}.csv").exists(), name


class TestDeterminism:
    def test_repeat_run_byte_identical(self, pipeline, tmp_path):
        cfg_fit = write_config(tmp_path / "fit.json", "fit-smc")
        fit2 = tmp_path / "fit2"
        assert main(["fit", "smc", "--config", cfg_fit, "--out", str(fit2),
                     "--data", str(pipeline / "data")]) == 0
        original = (pipeline / "fit" / "trace.csv").read_bytes()
        assert (fit2 / "trace.csv").read_bytes() == original

    def test_predict_byte_identical(self, pipeline, tmp_path):
        cfg = write_config(tmp_path / "pred.json", "predict")
        pred2 = tmp_path / "pred2"
        assert main(["predict", "--config", cfg, "--out", str(pred2),
                     "--data", str(pipeline / "data"), "--fit", str(pipeline / "fit")]) == 0
        assert (pred2 / "predictive_summary.csv").read_bytes() == (
            pipeline / "pred" / "predictive_summary.csv"
        ).read_bytes()

    def test_resume_reproduces_trace_tail(self, pipeline, tmp_path):
        import csv

        cfg = write_config(tmp_path / "fit.json", "fit-smc")
        resumed = tmp_path / "resumed"
        checkpoint = pipeline / "fit" / "checkpoints" / "step_0002.npz"
        assert main(["fit", "smc", "--config", cfg, "--out", str(resumed),
                     "--data", str(pipeline / "data"), "--resume", str(checkpoint)]) == 0
        with open(pipeline / "fit" / "trace.csv") as fh:
            full = [r for r in csv.DictReader(fh) if int(r["step"]) > 2]
        with open(resumed / "trace.csv") as fh:
            tail = list(csv.DictReader(fh))
        assert tail == full


class TestMcmcCommand:
    def test_fit_mcmc_runs(self, pipeline, tmp_path):
        cfg = write_config(tmp_path / "mcmc.json", "fit-mcmc")
        out = tmp_path / "mcmc"
        assert main(["fit", "mcmc", "--config", cfg, "--out", str(out),
                     "--data", str(pipeline / "data")]) == 0
        assert (out / "samples.npz").exists()
        assert (out / "chain_00.csv").exists()
        diag = json.loads((out / "diagnostics.json").read_text())
        assert "rhat" in diag and "acceptance" in diag


class TestExitCodes:
    def test_unknown_flag_usage_error(self):
        assert main(["simulate-data", "--config", "x.json", "--out", "y", "--nope"]) == 2

    def test_missing_config_file(self, tmp_path):
        assert main(["simulate-data", "--config", str(tmp_path / "none.json"),
                     "--out", str(tmp_path / "o")]) == 2

    def test_mode_mismatch(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", "predict")
        assert main(["simulate-data", "--config", cfg, "--out", str(tmp_path / "o")]) == 2

    def test_predict_without_fit_artifacts(self, pipeline, tmp_path):
        cfg = write_config(tmp_path / "p.json", "predict")
        empty_fit = tmp_path / "nothing"
        empty_fit.mkdir()
        code = main(["predict", "--config", cfg, "--out", str(tmp_path / "o"),
                     "--data", str(pipeline / "data"), "--fit", str(empty_fit)])
        assert code == 2
        summary = json.loads((tmp_path / "o" / "run_summary.json").read_text())
        assert summary["status"] == "failed"
        assert "population" in summary["error"] or "samples" in summary["error"]

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"mode": "simulate-data", "seed": 1, "bogus_key": 2}))
        assert main(["simulate-data", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2

    def test_checkpoint_hash_mismatch(self, pipeline, tmp_path):
        # changing engine settings changes the config hash; resume must refuse
        cfg = write_config(tmp_path / "fit.json", "fit-smc", smc_alpha0=0.8)
        checkpoint = pipeline / "fit" / "checkpoints" / "step_0001.npz"
        code = main(["fit", "smc", "--config", cfg, "--out", str(tmp_path / "o"),
                     "--data", str(pipeline / "data"), "--resume", str(checkpoint)])
        assert code == 2
        code = main(["fit", "smc", "--config", cfg, "--out", str(tmp_path / "o2"),
                     "--data", str(pipeline / "data"), "--resume", str(checkpoint),
                     "--allow-config-mismatch"])
        assert code == 0
