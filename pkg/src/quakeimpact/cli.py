"""Command-line surface tying the pipeline together.

Subcommands: simulate-data, fit smc, fit mcmc, predict, evaluate,
crps-experiment, export-figure-data.  Every run writes a machine-readable
run_summary.json recording the config hash, seed, version, wall time, and
artifact paths.  All CSV artifacts are deterministic for a fixed
(seed, config, threads); wall-clock timings live only in the run summary.
Exit codes: 0 success, 1 runtime failure, 2 usage or validation failure.
"""

import argparse
import csv
import json
import shutil
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, seeds
from .bundle import load_dataset, load_dataset_meta, load_truth, save_dataset, write_map_csv
from .config import RunConfig
from .errors import BundleError, CheckpointError, ConfigError, InvalidInputError, QuakeImpactError
from .mcmc import run_mcmc
from .metrics import gdacs_alert, intensity_binned_damage, outcome_bin, pager_bins, roc_auc, rps
from .model import SimContext
from .parallel import EvalPool, WorkerContext
from .params import N_PARAMS, param_names
from .predict import PredictiveRecord, PredictiveSummary, cell_damage_probability, coverage_report, posterior_predictive
from .prior import sample_prior
from .scoring import crps_bias_experiment
from .smc import TRACE_COLUMNS, load_population, run_smc, save_population
from .synthetic import generate_dataset, split_train_test

_USAGE_ERRORS = (ConfigError, BundleError, InvalidInputError, CheckpointError)


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, fieldnames, rows):
    """Deterministic CSV writer (floats via repr, None as empty)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fieldnames)
        for row in rows:
            writer.writerow([_fmt(row[name]) for name in fieldnames])
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _select_events(bundles, meta, which):
    split = meta.get("split")
    if which == "all" or split is None:
        return bundles
    if which not in ("train", "test"):
        raise ConfigError(f"event selection {which!r} unknown (train/test/all)")
    ids = set(split[which])
    return [b for b in bundles if b.event_id in ids]


def load_theta_source(fit_dir):
    """Fitted parameter matrix from an SMC or MCMC output directory."""
    fit_dir = Path(fit_dir)
    pop_path = fit_dir / "population.npz"
    if pop_path.exists():
        return load_population(pop_path).alive_theta
    samples_path = fit_dir / "samples.npz"
    if samples_path.exists():
        with np.load(samples_path, allow_pickle=False) as data:
            return data["samples"]
    raise ConfigError(f"no fitted population.npz or samples.npz found in {fit_dir}")


# ---------------------------------------------------------------------------
# subcommands

def cmd_simulate(cfg, args, out):
    gen = cfg.gen_config()
    seed = cfg["seed"]
    events, truth, extra = generate_dataset(gen, seed)
    train, test = split_train_test(events, cfg["split_ratio"], cfg["split_mode"], seed=seed)
    extra["split"] = {
        "mode": cfg["split_mode"],
        "ratio": cfg["split_ratio"],
        "train": [b.event_id for b in train],
        "test": [b.event_id for b in test],
    }
    save_dataset(events, out, truth=truth, extra=extra)
    return {"dataset": str(out / "dataset.json"), "n_events": len(events)}


def _prepared_training(cfg, data_dir):
    bundles = load_dataset(data_dir)
    meta = load_dataset_meta(data_dir)
    train = _select_events(bundles, meta, "train")
    contexts = [SimContext(b, i0=cfg["i0"]) for b in train]
    prior_spec = cfg.prior_spec(meta.get("covariate_percentiles"))
    return contexts, prior_spec


def cmd_fit_smc(cfg, args, out):
    if args.data is None:
        raise ConfigError("fit smc requires --data")
    contexts, prior_spec = _prepared_training(cfg, args.data)
    loss = cfg.loss_config()
    smc_cfg = cfg.smc_config()
    seed = cfg["seed"]
    chash = cfg.config_hash()
    ckpt_dir = Path(args.checkpoint_dir) if args.checkpoint_dir else out / "checkpoints"
    with EvalPool(cfg["threads"], WorkerContext(contexts, loss, prior_spec, seed)) as pool:
        population, trace, timings = run_smc(
            smc_cfg, prior_spec, loss, contexts, seed, pool,
            checkpoint_dir=ckpt_dir, config_hash=chash,
            resume_from=args.resume, resume_override=getattr(args, "allow_config_mismatch", False),
        )
    save_population(out / "population.npz", population, chash, seed)
    write_csv(out / "trace.csv", TRACE_COLUMNS, trace)
    return {
        "population": str(out / "population.npz"),
        "trace": str(out / "trace.csv"),
        "checkpoints": str(ckpt_dir),
        "steps": population.step,
        "final_delta": population.delta,
        "step_timings": timings,
    }


def cmd_fit_mcmc(cfg, args, out):
    if args.data is None:
        raise ConfigError("fit mcmc requires --data")
    contexts, prior_spec = _prepared_training(cfg, args.data)
    loss = cfg.loss_config()
    mcmc_cfg = cfg.mcmc_config()
    seed = cfg["seed"]
    with EvalPool(cfg["threads"], WorkerContext(contexts, loss, prior_spec, seed)) as pool:
        result = run_mcmc(mcmc_cfg, prior_spec, loss, contexts, seed, pool)
    names = list(result.names)
    for chain in result.chains:
        rows = [
            {"iteration": i + 1, **dict(zip(names, chain["theta"][i])),
             "loss": chain["loss"][i], "accepted": bool(chain["accepted"][i])}
            for i in range(chain["theta"].shape[0])
        ]
        write_csv(out / f"chain_{chain['chain']:02d}.csv", ["iteration", *names, "loss", "accepted"], rows)
    np.savez(out / "samples.npz", samples=result.samples, names=np.array(names))
    with open(out / "diagnostics.json", "w") as fh:
        json.dump(result.diagnostics, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return {
        "samples": str(out / "samples.npz"),
        "diagnostics": str(out / "diagnostics.json"),
        "chains": [str(out / f"chain_{c['chain']:02d}.csv") for c in result.chains],
    }


def cmd_predict(cfg, args, out):
    if args.data is None or args.fit is None:
        raise ConfigError("predict requires --data and --fit")
    bundles = load_dataset(args.data)
    meta = load_dataset_meta(args.data)
    events = _select_events(bundles, meta, cfg["predict_events"])
    if not events:
        raise ConfigError("no events selected for prediction")
    thetas = load_theta_source(args.fit)
    levels = (cfg["predict_quantile_lo"], cfg["predict_quantile_hi"])
    summary = posterior_predictive(
        events, thetas, draws=int(cfg["predict_draws"]), seed=cfg["seed"],
        i0=cfg["i0"], quantile_levels=levels,
    )
    lo, hi = summary.quantile_levels
    rows = [
        {"event": r.event_id, "region": r.region, "impact": r.impact,
         "observed": r.observed, "mean": r.mean, "median": r.median,
         "q_lo": r.quantile(lo), "q_hi": r.quantile(hi), "n_draws": summary.n_draws}
        for r in summary.records
    ]
    write_csv(out / "predictive_summary.csv",
              ["event", "region", "impact", "observed", "mean", "median", "q_lo", "q_hi", "n_draws"],
              rows)
    np.savez(
        out / "samples.npz",
        event=np.array([r.event_id for r in summary.records]),
        region=np.array([r.region for r in summary.records]),
        impact=np.array([r.impact for r in summary.records]),
        samples=np.stack([r.samples for r in summary.records]),
        observed=np.array([np.nan if r.observed is None else float(r.observed) for r in summary.records]),
        quantile_levels=np.array(levels),
    )
    maps_dir = out / "maps"
    maps_dir.mkdir(parents=True, exist_ok=True)
    by_id = {b.event_id: b for b in events}
    for event_id, grids in summary.cell_means.items():
        b = by_id[event_id]
        for impact, grid in grids.items():
            write_map_csv(maps_dir / f"{event_id}_{impact}.csv", grid.reshape(b.shape), b.georef)
    return {
        "predictive_summary": str(out / "predictive_summary.csv"),
        "samples": str(out / "samples.npz"),
        "maps": str(maps_dir),
    }


def _records_from_npz(path):
    with np.load(path, allow_pickle=False) as data:
        records = [
            PredictiveRecord(
                event_id=str(data["event"][i]), region=str(data["region"][i]),
                impact=str(data["impact"][i]), samples=data["samples"][i],
                observed=None if np.isnan(data["observed"][i]) else int(data["observed"][i]),
            )
            for i in range(data["samples"].shape[0])
        ]
        levels = tuple(data["quantile_levels"])
    return PredictiveSummary(records=records, cell_means={}, n_draws=records[0].samples.size,
                             quantile_levels=levels)


def cmd_evaluate(cfg, args, out):
    if args.data is None or args.pred is None:
        raise ConfigError("evaluate requires --data and --pred")
    summary = _records_from_npz(Path(args.pred) / "samples.npz")
    level = float(cfg["coverage_level"])
    coverage_rows = []
    for positive_only in (False, True):
        try:
            report = coverage_report(summary, level=level, positive_only=positive_only)
        except InvalidInputError:
            continue
        for scope in ("overall", "mort", "disp", "builddam"):
            if scope in report:
                coverage_rows.append(
                    {"scope": scope, "level": level, "positive_only": positive_only,
                     "n_coordinates": report["n_coordinates"], "coverage": report[scope]}
                )
    write_csv(out / "coverage.csv",
              ["scope", "level", "positive_only", "n_coordinates", "coverage"], coverage_rows)

    # per-event total mortality: sum regional samples (each family partitions)
    events_seen = {}
    for rec in summary.records:
        if rec.impact != "mort":
            continue
        slot = events_seen.setdefault(rec.event_id, {"samples": 0.0, "observed": 0.0, "complete": True})
        slot["samples"] = slot["samples"] + rec.samples
        if rec.observed is None:
            slot["complete"] = False
        else:
            slot["observed"] += rec.observed
    alert_rows, rps_rows = [], []
    matches = []
    for event_id in sorted(events_seen):
        slot = events_seen[event_id]
        if not slot["complete"]:
            continue
        totals = slot["samples"]
        observed = slot["observed"]
        predicted_median = float(np.median(totals))
        pred_alert = gdacs_alert(predicted_median)
        obs_alert = gdacs_alert(observed)
        matches.append(pred_alert == obs_alert)
        alert_rows.append(
            {"event": event_id, "observed_total": int(observed),
             "observed_alert": obs_alert, "predicted_median": predicted_median,
             "predicted_alert": pred_alert, "match": pred_alert == obs_alert}
        )
        probs = pager_bins(totals)
        obin = outcome_bin(observed)
        rps_rows.append(
            {"event": event_id, "outcome_bin": obin, "rps": rps(probs, obin),
             **{f"p_bin{k}": probs[k] for k in range(probs.size)}}
        )
    write_csv(out / "alerts.csv",
              ["event", "observed_total", "observed_alert", "predicted_median",
               "predicted_alert", "match"], alert_rows)
    write_csv(out / "rps.csv",
              ["event", "outcome_bin", "rps", *[f"p_bin{k}" for k in range(7)]], rps_rows)

    results = {
        "gdacs_accuracy": float(np.mean(matches)) if matches else None,
        "mean_rps": float(np.mean([r["rps"] for r in rps_rows])) if rps_rows else None,
        "n_events": len(alert_rows),
        "coverage": {row["scope"] + ("_positive" if row["positive_only"] else ""): row["coverage"]
                     for row in coverage_rows},
    }

    # point-building evaluation needs the fitted parameters
    if args.fit is not None and args.data is not None:
        bundles = load_dataset(args.data)
        point_events = [b for b in bundles if b.point_data is not None]
        if point_events:
            thetas = load_theta_source(args.fit)
            probs_all, labels_all = [], []
            binned_inputs = {"max_intensity": [], "n_buildings": [], "n_damaged": [],
                             "n_possible": [], "model_p": [], "event_ids": []}
            for e_idx, b in enumerate(point_events):
                p_cell = cell_damage_probability(
                    b, thetas, draws=int(cfg["roc_draws"]), seed=cfg["seed"], i0=cfg["i0"],
                    stream=e_idx,
                )
                pd = b.point_data
                counted = pd.n_buildings - pd.n_possible
                for k in range(pd.cell.size):
                    n, d = int(counted[k]), int(pd.n_damaged[k])
                    if n == 0:
                        continue
                    probs_all.append(np.full(n, p_cell[pd.cell[k]]))
                    labels_all.append(np.r_[np.ones(d, dtype=int), np.zeros(n - d, dtype=int)])
                binned_inputs["max_intensity"].append(pd.max_intensity)
                binned_inputs["n_buildings"].append(pd.n_buildings)
                binned_inputs["n_damaged"].append(pd.n_damaged)
                binned_inputs["n_possible"].append(pd.n_possible)
                binned_inputs["model_p"].append(p_cell[pd.cell])
                binned_inputs["event_ids"].append(np.array([b.event_id] * pd.cell.size))
            roc = roc_auc(np.concatenate(probs_all), np.concatenate(labels_all))
            write_csv(out / "roc_points.csv", ["fpr", "tpr", "threshold"],
                      [{"fpr": p[0], "tpr": p[1], "threshold": t}
                       for p, t in zip(roc.points, roc.thresholds)])
            binned = intensity_binned_damage(
                np.concatenate(binned_inputs["max_intensity"]),
                np.concatenate(binned_inputs["n_buildings"]),
                np.concatenate(binned_inputs["n_damaged"]),
                np.concatenate(binned_inputs["model_p"]),
                n_possible=np.concatenate(binned_inputs["n_possible"]),
                event_ids=np.concatenate(binned_inputs["event_ids"]),
            )
            write_csv(out / "binned_damage.csv",
                      ["event", "intensity_bin", "n_buildings", "observed_fraction", "mean_model_p"],
                      binned)
            results["auc"] = roc.auc
            results["n_point_events"] = len(point_events)

    with open(out / "evaluation.json", "w") as fh:
        json.dump(results, fh, indent=2, sort_keys=True)
        fh.write("\n")
    artifacts = {name: str(out / f"{name}.csv")
                 for name in ("coverage", "alerts", "rps") }
    artifacts["evaluation"] = str(out / "evaluation.json")
    if "auc" in results:
        artifacts["roc_points"] = str(out / "roc_points.csv")
        artifacts["binned_damage"] = str(out / "binned_damage.csv")
    return artifacts


def cmd_crps(cfg, args, out):
    rows = crps_bias_experiment(
        cfg["crps_m_values"], cfg.crps_sigma_grid(), int(cfg["crps_trials"]), cfg["seed"]
    )
    write_csv(out / "crps_bias.csv", ["M", "sigma", "mean_score", "trials"], rows)
    return {"crps_bias": str(out / "crps_bias.csv")}


def cmd_export(cfg, args, out):
    """Assemble the figure-input CSVs from earlier stage outputs."""
    artifacts = {}
    out.mkdir(parents=True, exist_ok=True)

    if args.fit is not None:
        trace = Path(args.fit) / "trace.csv"
        if trace.exists():
            shutil.copyfile(trace, out / "tolerance_trace.csv")
            artifacts["tolerance_trace"] = str(out / "tolerance_trace.csv")

        thetas = load_theta_source(args.fit)
        names = param_names(thetas.shape[1] - N_PARAMS)
        meta = load_dataset_meta(args.data) if args.data else {}
        prior_spec = cfg.prior_spec(meta.get("covariate_percentiles"))
        rows = []
        n_prior = min(2000, max(500, thetas.shape[0]))
        for i in range(n_prior):
            draw = sample_prior(seeds.rng(cfg["seed"], seeds.PRIOR, 1, i), prior_spec).to_vector()
            rows.extend(
                {"source": "prior", "parameter": name, "value": draw[d]}
                for d, name in enumerate(names)
            )
        for vec in thetas:
            rows.extend(
                {"source": "posterior", "parameter": name, "value": vec[d]}
                for d, name in enumerate(names)
            )
        if args.data:
            truth = load_truth(args.data)
            if truth is not None:
                for name in names:
                    if name in truth["theta_true"]:
                        rows.append({"source": "truth", "parameter": name,
                                     "value": truth["theta_true"][name]})
        write_csv(out / "prior_posterior.csv", ["source", "parameter", "value"], rows)
        artifacts["prior_posterior"] = str(out / "prior_posterior.csv")

    copies = [
        (args.pred, "predictive_summary.csv", "predictive_intervals.csv"),
        (args.eval_dir, "roc_points.csv", "roc_points.csv"),
        (args.eval_dir, "binned_damage.csv", "binned_damage.csv"),
        (args.crps, "crps_bias.csv", "crps_bias.csv"),
    ]
    for src_dir, src_name, dst_name in copies:
        if src_dir is None:
            continue
        src = Path(src_dir) / src_name
        if src.exists():
            shutil.copyfile(src, out / dst_name)
            artifacts[dst_name.removesuffix(".csv")] = str(out / dst_name)
    return artifacts


# ---------------------------------------------------------------------------
# dispatch

_COMMANDS = {
    "simulate-data": ("simulate-data", cmd_simulate),
    "fit:smc": ("fit-smc", cmd_fit_smc),
    "fit:mcmc": ("fit-mcmc", cmd_fit_mcmc),
    "predict": ("predict", cmd_predict),
    "evaluate": ("evaluate", cmd_evaluate),
    "crps-experiment": ("crps-experiment", cmd_crps),
    "export-figure-data": ("export-figure-data", cmd_export),
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="run configuration JSON")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--threads", type=int, default=None, help="worker pool size")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--checkpoint-dir", default=None, help="checkpoint directory")

    parser = argparse.ArgumentParser(prog="quakeimpact", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("simulate-data", parents=[common])

    fit = sub.add_parser("fit")
    fit_sub = fit.add_subparsers(dest="engine", required=True)
    for engine in ("smc", "mcmc"):
        p = fit_sub.add_parser(engine, parents=[common])
        p.add_argument("--data", required=True, help="dataset directory")
        p.add_argument("--resume", default=None, help="checkpoint to resume from (smc)")
        p.add_argument("--allow-config-mismatch", action="store_true",
                       help="load a checkpoint written under a different config hash")

    p = sub.add_parser("predict", parents=[common])
    p.add_argument("--data", required=True)
    p.add_argument("--fit", required=True, help="fit output directory")

    p = sub.add_parser("evaluate", parents=[common])
    p.add_argument("--data", required=True)
    p.add_argument("--pred", required=True, help="predict output directory")
    p.add_argument("--fit", default=None, help="fit output directory (for point-data metrics)")

    sub.add_parser("crps-experiment", parents=[common])

    p = sub.add_parser("export-figure-data", parents=[common])
    p.add_argument("--data", default=None)
    p.add_argument("--fit", default=None)
    p.add_argument("--pred", default=None)
    p.add_argument("--eval", dest="eval_dir", default=None)
    p.add_argument("--crps", default=None)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 2

    key = args.command if args.command != "fit" else f"fit:{args.engine}"
    expected_mode, command = _COMMANDS[key]

    started = time.time()
    out = Path(args.out)
    summary = {"command": key.replace(":", " "), "version": __version__, "status": "failed"}
    try:
        cfg = RunConfig.from_file(args.config).override(seed=args.seed, threads=args.threads)
        if cfg["mode"] != expected_mode:
            raise ConfigError(
                f"config mode {cfg['mode']!r} does not match the {expected_mode!r} command"
            )
        out.mkdir(parents=True, exist_ok=True)
        summary.update({"config_hash": cfg.config_hash(), "seed": cfg["seed"],
                        "threads": cfg["threads"]})
        artifacts = command(cfg, args, out)
        summary.update({"status": "ok", "artifacts": artifacts})
        return 0
    except _USAGE_ERRORS as exc:
        summary["error"] = str(exc)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except QuakeImpactError as exc:
        summary["error"] = str(exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    finally:
        summary["wall_seconds"] = time.time() - started
        if out.is_dir():
            with open(out / "run_summary.json", "w") as fh:
                json.dump(summary, fh, indent=2, sort_keys=True, default=str)
                fh.write("\n")


if __name__ == "__main__":
    sys.exit(main())
