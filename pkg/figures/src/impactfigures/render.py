"""Figure renderers for the exported diagnostics CSVs.

One renderer per figure kind: the SMC tolerance trace, prior/posterior
marginal comparisons, predictive-interval plots, ROC curves, the
small-sample score-bias table, and intensity-binned damage rates.  Output
is deterministic for fixed inputs (fixed figure geometry, Agg backend, no
timestamps), which the golden-file tests rely on.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


class FigureError(ValueError):
    """Input CSV missing, empty, or lacking required columns."""


@dataclass
class FigureJob:
    """One rendering task."""

    kind: str
    inputs: list
    out: str
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise FigureError(f"figure kind {self.kind!r} unknown; have {sorted(FIGURE_KINDS)}")
        if not self.inputs:
            raise FigureError("no input CSV given")


def _read_rows(path, required):
    path = Path(path)
    if not path.exists():
        raise FigureError(f"input CSV {path} does not exist")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [col for col in required if col not in header]
        if missing:
            raise FigureError(f"{path} is missing columns {missing}")
        rows = list(reader)
    if not rows:
        raise FigureError(f"{path} holds no data rows")
    return rows


def _column(rows, name, kind=float):
    return np.array([kind(r[name]) for r in rows])


def _new_axes(options, width=6.4, height=4.2):
    fig, ax = plt.subplots(figsize=(width, height), dpi=100)
    return fig, ax


def _pseudo_log(ax, axis="y"):
    # zero-inclusive magnitude axes: symlog with base 10, linear below 1
    if axis in ("x", "both"):
        ax.set_xscale("symlog", base=10, linthresh=1.0)
    if axis in ("y", "both"):
        ax.set_yscale("symlog", base=10, linthresh=1.0)


def render_tolerance_trace(job):
    rows = _read_rows(job.inputs[0], ["step", "delta", "mean_loss"])
    step = _column(rows, "step", int)
    delta = _column(rows, "delta")
    mean_loss = _column(rows, "mean_loss")
    fig, ax = _new_axes(job.options)
    ax.plot(step, mean_loss, color="0.4", lw=1.2, label="mean particle loss")
    ax.plot(step, delta, "o-", color="crimson", ms=3.5, lw=1.0, label="tolerance")
    ax.set_xlabel("step")
    ax.set_ylabel("energy-score loss")
    ax.legend(frameon=False)
    if job.options.get("log_y"):
        ax.set_yscale("log")
    return fig


def render_prior_posterior(job):
    rows = _read_rows(job.inputs[0], ["source", "parameter", "value"])
    params = sorted({r["parameter"] for r in rows})
    n = len(params)
    n_cols = min(4, n)
    n_rows = (n + n_cols - 1) // n_cols
    fig, axes = plt.subplots(n_rows, n_cols, figsize=(3.0 * n_cols, 2.4 * n_rows),
                             dpi=100, squeeze=False)
    for k, name in enumerate(params):
        ax = axes[k // n_cols][k % n_cols]
        for source, color, fill in (("posterior", "0.2", True), ("prior", "steelblue", False)):
            values = np.array([float(r["value"]) for r in rows
                               if r["parameter"] == name and r["source"] == source])
            if values.size:
                ax.hist(values, bins=30, density=True, histtype="stepfilled" if fill else "step",
                        color=color, alpha=0.6 if fill else 1.0, label=source)
        truth = [float(r["value"]) for r in rows
                 if r["parameter"] == name and r["source"] == "truth"]
        if truth:
            ax.axvline(truth[0], color="crimson", ls="--", lw=1.2, label="truth")
        ax.set_title(name, fontsize=8)
        ax.tick_params(labelsize=6)
        ax.set_yticks([])
    for k in range(n, n_rows * n_cols):
        axes[k // n_cols][k % n_cols].axis("off")
    handles, labels = axes[0][0].get_legend_handles_labels()
    if handles:
        fig.legend(handles, labels, loc="lower right", frameon=False, fontsize=8)
    fig.tight_layout()
    return fig


def render_predictive_intervals(job):
    rows = _read_rows(job.inputs[0], ["event", "impact", "observed", "median", "q_lo", "q_hi"])
    rows = [r for r in rows if r["observed"] not in ("", None)]
    if not rows:
        raise FigureError("no observed coordinates in the predictive summary")
    impacts = sorted({r["impact"] for r in rows})
    fig, axes = plt.subplots(1, len(impacts), figsize=(4.0 * len(impacts), 4.0),
                             dpi=100, squeeze=False)
    level = job.options.get("interval_label", "90%")
    for k, impact in enumerate(impacts):
        ax = axes[0][k]
        sub = [r for r in rows if r["impact"] == impact]
        observed = _column(sub, "observed")
        median = _column(sub, "median")
        lo = _column(sub, "q_lo")
        hi = _column(sub, "q_hi")
        order = np.argsort(observed, kind="stable")
        x = np.arange(order.size)
        ax.errorbar(x, median[order], yerr=[median[order] - lo[order], hi[order] - median[order]],
                    fmt="o", ms=3, lw=1, color="0.2", ecolor="0.55",
                    label=f"median and {level} interval")
        ax.plot(x, observed[order], "o", ms=3, color="crimson", label="observed")
        _pseudo_log(ax, "y")
        ax.set_title(impact, fontsize=9)
        ax.set_xlabel("coordinate (sorted by observed value)", fontsize=8)
        if k == 0:
            ax.set_ylabel("count")
            ax.legend(frameon=False, fontsize=7)
    fig.tight_layout()
    return fig


def render_roc(job):
    rows = _read_rows(job.inputs[0], ["fpr", "tpr"])
    fpr = _column(rows, "fpr")
    tpr = _column(rows, "tpr")
    order = np.argsort(fpr, kind="stable")
    fpr, tpr = fpr[order], tpr[order]
    auc = float(np.trapezoid(tpr, fpr))
    fig, ax = _new_axes(job.options, width=4.6, height=4.6)
    ax.plot([0, 1], [0, 1], color="0.6", lw=1)
    ax.plot(fpr, tpr, color="0.1", lw=1.5)
    ax.annotate(f"AUC = {auc:.2f}", xy=(0.6, 0.1), fontsize=10)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    return fig


def render_crps_bias(job):
    rows = _read_rows(job.inputs[0], ["M", "sigma", "mean_score"])
    ms = sorted({int(float(r["M"])) for r in rows})
    fig, ax = _new_axes(job.options)
    for m in ms:
        sub = [r for r in rows if int(float(r["M"])) == m]
        sigma = _column(sub, "sigma")
        score = _column(sub, "mean_score")
        order = np.argsort(sigma)
        ax.plot(sigma[order], score[order], "o-", ms=3, lw=1.1, label=f"M = {m}")
    ax.axvline(1.0, color="0.7", lw=0.8, ls=":")
    ax.set_xlabel("sample standard deviation")
    ax.set_ylabel("mean score")
    ax.legend(frameon=False)
    return fig


def render_binned_damage(job):
    rows = _read_rows(job.inputs[0],
                      ["event", "intensity_bin", "observed_fraction", "mean_model_p"])
    events = sorted({r["event"] for r in rows})
    fig, ax = _new_axes(job.options)
    cmap = plt.get_cmap("tab10")
    for k, event in enumerate(events):
        sub = [r for r in rows if r["event"] == event]
        bins = _column(sub, "intensity_bin")
        observed = _column(sub, "observed_fraction")
        model = _column(sub, "mean_model_p")
        order = np.argsort(bins)
        color = cmap(k % 10)
        ax.plot(bins[order], observed[order], "-", color=color, lw=1.3, label=event)
        ax.plot(bins[order], model[order], "--", color=color, lw=1.1)
    ax.set_xlabel("maximum exposed intensity (binned)")
    ax.set_ylabel("fraction of buildings damaged")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(frameon=False, fontsize=7, title="observed (solid) / model (dashed)",
              title_fontsize=7)
    return fig


FIGURE_KINDS = {
    "tolerance-trace": render_tolerance_trace,
    "prior-posterior": render_prior_posterior,
    "predictive-intervals": render_predictive_intervals,
    "roc": render_roc,
    "crps-bias": render_crps_bias,
    "binned-damage": render_binned_damage,
}


def render(job):
    """Render one job to its output image; returns the output path.

    Nothing is written when the inputs fail validation.
    """
    fig = FIGURE_KINDS[job.kind](job)
    out = Path(job.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    try:
        fig.savefig(out, format=out.suffix.lstrip(".") or "png")
    finally:
        plt.close(fig)
    return out
