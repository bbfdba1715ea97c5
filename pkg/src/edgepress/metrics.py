"""Ranking metrics."""

import numpy as np
from scipy.stats import rankdata

from .exceptions import MetricError


def auc_roc(scores, labels):
    """Area under the ROC curve via the Mann-Whitney rank statistic.

    Equals ``P(score_pos > score_neg) + 0.5 * P(tie)`` over all
    positive/negative pairs.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise MetricError(f"{scores.size} scores but {labels.size} labels")
    if not np.all(np.isfinite(scores)):
        raise MetricError("scores must be finite")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = int((labels == 0).sum())
    if n_pos + n_neg != labels.size:
        raise MetricError("labels must be 0 or 1")
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC needs both classes present")
    ranks = rankdata(scores, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))
