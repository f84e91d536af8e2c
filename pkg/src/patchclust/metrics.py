"""Kill-race AUC and tie counting for two-output kill regressors.

The kill-race target: label = Radiant scored more kills than Dire, score =
predicted Radiant minus predicted Dire kills. Matches whose actual kills are
level have no label and are left out (and counted).
"""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from .errors import DegenerateLabels, DimensionMismatch


def _pairs(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DimensionMismatch(f"{name} must be an (n, 2) array of (radiant, dire) kills")
    return arr


def kill_race_labels(actuals) -> tuple[np.ndarray, np.ndarray]:
    """Boolean labels for non-tied matches, plus the mask selecting them."""
    act = _pairs(actuals, "actuals")
    keep = act[:, 0] != act[:, 1]
    return act[keep, 0] > act[keep, 1], keep


def rank_auc(labels, scores) -> float:
    """Mann-Whitney AUC with tied scores counted as half."""
    labels = np.asarray(labels, dtype=bool)
    scores = np.asarray(scores, dtype=float)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels(f"need both classes, got {n_pos} positive and {n_neg} negative")
    ranks = rankdata(scores, method="average")
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auc_kill_race(predictions, actuals) -> float:
    pred = _pairs(predictions, "predictions")
    act = _pairs(actuals, "actuals")
    if len(pred) != len(act):
        raise DimensionMismatch(f"{len(pred)} predictions for {len(act)} matches")
    if len(pred) == 0:
        raise DegenerateLabels("no matches to score")
    labels, keep = kill_race_labels(act)
    scores = pred[keep, 0] - pred[keep, 1]
    return rank_auc(labels, scores)


def round_half_up(x):
    return np.floor(np.asarray(x, dtype=float) + 0.5)


def tie_rate(predictions) -> tuple[int, float]:
    pred = _pairs(predictions, "predictions")
    if len(pred) == 0:
        raise DegenerateLabels("no predictions")
    rounded = round_half_up(pred)
    count = int(np.sum(rounded[:, 0] == rounded[:, 1]))
    return count, count / len(pred)
