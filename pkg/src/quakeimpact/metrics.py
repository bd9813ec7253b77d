"""Headline evaluation metrics: alert classes, fatality bins, RPS, ROC.

These mirror how operational alerting systems summarize a mortality
forecast (traffic-light classes, order-of-magnitude fatality bins scored by
the ranked probability score) and how point building data grades a damage
classifier (ROC/AUC, intensity-binned damage rates).
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

# fatality bins: [0,1), [1,10), [10,1e2), [1e2,1e3), [1e3,1e4), [1e4,1e5), [1e5,1e7)
PAGER_BIN_EDGES = np.array([0.0, 1.0, 10.0, 1e2, 1e3, 1e4, 1e5, 1e7])
N_BINS = len(PAGER_BIN_EDGES) - 1

GDACS_GREEN_MAX = 10.0
GDACS_ORANGE_MAX = 100.0


def gdacs_alert(median_mortality):
    """Traffic-light class: green [0,10), orange [10,100), red >= 100."""
    if median_mortality < 0:
        raise InvalidInputError("median mortality must be non-negative")
    if median_mortality < GDACS_GREEN_MAX:
        return "green"
    if median_mortality < GDACS_ORANGE_MAX:
        return "orange"
    return "red"


def pager_bins(mortality_samples):
    """Empirical probabilities over the seven ordered fatality bins."""
    samples = np.asarray(mortality_samples, dtype=float)
    if samples.size == 0:
        raise InvalidInputError("no mortality samples")
    if np.any(samples < 0):
        raise InvalidInputError("mortality samples must be non-negative")
    top = PAGER_BIN_EDGES[-1]
    if np.any(samples >= top):
        warnings.warn(f"{int((samples >= top).sum())} samples at or above {top:g} clipped to the top bin")
        samples = np.minimum(samples, top - 1.0)
    idx = np.searchsorted(PAGER_BIN_EDGES, samples, side="right") - 1
    counts = np.bincount(idx, minlength=N_BINS).astype(float)
    return counts / samples.size


def outcome_bin(mortality):
    """Bin index of an observed fatality count."""
    if mortality < 0:
        raise InvalidInputError("mortality must be non-negative")
    value = min(float(mortality), PAGER_BIN_EDGES[-1] - 1.0)
    return int(np.searchsorted(PAGER_BIN_EDGES, value, side="right") - 1)


def rps(forecast_probs, outcome_bin_idx):
    """Ranked probability score over the ordered bins, normalized by K-1."""
    probs = np.asarray(forecast_probs, dtype=float)
    k = probs.size
    if abs(probs.sum() - 1.0) > 1e-9:
        raise InvalidInputError(f"forecast probabilities sum to {probs.sum()}, expected 1")
    if not 0 <= outcome_bin_idx < k:
        raise InvalidInputError(f"outcome bin {outcome_bin_idx} outside 0..{k - 1}")
    forecast_cum = np.cumsum(probs)
    outcome_cum = (np.arange(k) >= outcome_bin_idx).astype(float)
    return float(((forecast_cum - outcome_cum) ** 2).sum() / (k - 1))


@dataclass
class RocResult:
    points: np.ndarray            # (n, 2) columns (fpr, tpr), sorted by fpr
    auc: float
    thresholds: np.ndarray


def roc_auc(probabilities, labels):
    """ROC curve and AUC from per-item probabilities and binary labels.

    Sweeps thresholds over the unique probabilities; ties are grouped, which
    makes the trapezoid AUC equal rank-averaged pair concordance.
    """
    probs = np.asarray(probabilities, dtype=float)
    labels = np.asarray(labels)
    if probs.shape != labels.shape:
        raise InvalidInputError("probabilities and labels must have equal length")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise InvalidInputError("ROC needs both damaged and undamaged items")

    order = np.argsort(-probs, kind="stable")
    sorted_probs = probs[order]
    sorted_labels = labels[order]
    tp = np.cumsum(sorted_labels == 1)
    fp = np.cumsum(sorted_labels == 0)
    # keep only the last index of each tie group
    distinct = np.r_[sorted_probs[1:] != sorted_probs[:-1], True]
    tpr = np.r_[0.0, tp[distinct] / n_pos]
    fpr = np.r_[0.0, fp[distinct] / n_neg]
    thresholds = np.r_[np.inf, sorted_probs[distinct]]
    auc = float(np.trapezoid(tpr, fpr))
    return RocResult(points=np.column_stack([fpr, tpr]), auc=auc, thresholds=thresholds)


def intensity_binned_damage(max_intensity, n_buildings, n_damaged, model_p,
                            n_possible=None, event_ids=None, bin_width=0.5):
    """Observed damage rate vs mean modelled probability per intensity bin.

    Buildings are grouped per event by their maximum exposed intensity
    rounded to the nearest `bin_width`; 'possibly damaged' buildings are
    excluded from both numerator and denominator.

    Returns a list of row dicts (event, intensity_bin, n_buildings,
    observed_fraction, mean_model_p).
    """
    max_intensity = np.asarray(max_intensity, dtype=float)
    n_buildings = np.asarray(n_buildings, dtype=np.int64)
    n_damaged = np.asarray(n_damaged, dtype=np.int64)
    model_p = np.asarray(model_p, dtype=float)
    n_possible = (np.zeros_like(n_buildings) if n_possible is None
                  else np.asarray(n_possible, dtype=np.int64))
    if event_ids is None:
        event_ids = np.array(["all"] * max_intensity.size)
    else:
        event_ids = np.asarray(event_ids)

    counted = n_buildings - n_possible
    bins = np.round(max_intensity / bin_width) * bin_width
    rows = []
    for event in sorted(set(event_ids.tolist())):
        in_event = event_ids == event
        for b in sorted(set(bins[in_event].tolist())):
            sel = in_event & (bins == b)
            total = int(counted[sel].sum())
            if total == 0:
                continue
            damaged = int(n_damaged[sel].sum())
            mean_p = float((model_p[sel] * counted[sel]).sum() / total)
            rows.append(
                {"event": event, "intensity_bin": float(b), "n_buildings": total,
                 "observed_fraction": damaged / total, "mean_model_p": mean_p}
            )
    return rows
