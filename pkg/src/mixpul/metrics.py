"""Ranking and classification metrics, and the PU-AUC / PN-AUC identity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata


def auc(scores, labels) -> float:
    """Mann-Whitney AUC with ties counted as one half (midrank formulation)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have the same shape")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative label")
    ranks = rankdata(scores, method="average")
    # rank sums of midranks are multiples of 1/2, so this stays exact in float64
    u_stat = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u_stat / (n_pos * n_neg))


def error_rate(scores, labels, threshold: float = 0.5) -> float:
    """Fraction misclassified; a score equal to the threshold counts as positive."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.size == 0:
        raise ValueError("error rate of an empty batch is undefined")
    pred = (scores >= threshold).astype(labels.dtype)
    return float(np.mean(pred != labels))


def zero_one_pairwise(scores_a, scores_b) -> float:
    """Mean over all (a, b) pairs of l01(f(a) - f(b)): 1 if negative, 1/2 if zero."""
    a = np.sort(np.asarray(scores_a, dtype=np.float64))
    b = np.asarray(scores_b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("pairwise risk needs two nonempty score sets")
    below = np.searchsorted(a, b, side="left")  # number of a strictly below each b
    equal = np.searchsorted(a, b, side="right") - below
    return float((below.sum() + 0.5 * equal.sum()) / (a.size * b.size))


@dataclass(frozen=True)
class IdentityCheck:
    r_pu: float
    r_pn: float
    prior: float
    residual: float


def pu_auc_identity_check(scores, s, y) -> IdentityCheck:
    """Compare the PU-AUC risk with its PN-AUC counterpart.

    ``s`` marks labeled positives, ``y`` gives the true class of every row.
    The prior is the true-positive fraction of the unlabeled rows and the
    residual is ``R_PU - ((1 - prior) * R_PN + prior / 2)``. With no true
    negatives in U the PN risk is undefined (nan) and the residual reduces to
    ``R_PU - 1/2``.
    """
    scores = np.asarray(scores, dtype=np.float64)
    s = np.asarray(s)
    y = np.asarray(y)
    p = s == 1
    u = s == 0
    if not p.any() or not u.any():
        raise ValueError("identity check needs labeled positives and unlabeled rows")
    prior = float(np.mean(y[u] == 1))
    r_pu = zero_one_pairwise(scores[p], scores[u])
    neg = u & (y == 0)
    if neg.any():
        r_pn = zero_one_pairwise(scores[p], scores[neg])
        residual = r_pu - ((1.0 - prior) * r_pn + prior / 2.0)
    else:
        r_pn = float("nan")
        residual = r_pu - 0.5
    return IdentityCheck(r_pu, r_pn, prior, residual)
