"""Shared test oracles: finite differences, brute-force metrics, beta series."""

from __future__ import annotations

import itertools
import math

import numpy as np


def central_difference(f, x: np.ndarray, step: float = 1e-3) -> np.ndarray:
    """Gradient of scalar f at x by central differences, coordinate by coordinate."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = f(x)
        flat[i] = orig - step
        down = f(x)
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * step)
    return grad


def relative_error(a: float, b: float, floor: float = 1e-6) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def brute_force_auprc(scores, labels) -> float:
    """Average precision by explicit precision/recall enumeration at every
    distinct-score threshold, summing precision times recall increments."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n_pos = int(labels.sum())
    thresholds = sorted(set(scores.tolist()), reverse=True)
    ap = 0.0
    prev_recall = 0.0
    for t in thresholds:
        predicted = scores >= t
        tp = int((predicted & (labels == 1)).sum())
        fp = int((predicted & (labels == 0)).sum())
        precision = tp / (tp + fp)
        recall = tp / n_pos
        ap += precision * (recall - prev_recall)
        prev_recall = recall
    return ap


def brute_force_auroc(scores, labels) -> float:
    """AUROC by exhaustive pair counting with half credit for ties."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def trapezoid_auroc(scores, labels) -> float:
    """AUROC via trapezoidal integration of the empirical ROC curve."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    thresholds = sorted(set(scores.tolist()), reverse=True)
    tpr = [0.0]
    fpr = [0.0]
    for t in thresholds:
        predicted = scores >= t
        tpr.append(int((predicted & (labels == 1)).sum()) / n_pos)
        fpr.append(int((predicted & (labels == 0)).sum()) / n_neg)
    area = 0.0
    for k in range(1, len(tpr)):
        area += 0.5 * (tpr[k] + tpr[k - 1]) * (fpr[k] - fpr[k - 1])
    return area


def all_binary_labelings(n: int):
    """Yield every {0,1}^n labeling containing both classes."""
    for bits in itertools.product((0, 1), repeat=n):
        if 0 < sum(bits) < n:
            yield np.array(bits, dtype=np.int64)


def incomplete_beta_series(x: float, a: float, b: float, terms: int = 500) -> float:
    """Regularized incomplete beta via its power series around x = 0.

    I_x(a, b) = x^a (1-x)^b / (a B(a, b)) * sum_{n>=0} c_n x^n with
    c_0 = 1 and c_{n+1} = c_n (n + a + b) (n + a) ... rearranged below.
    Used purely as an independent cross-check of the continued fraction.
    """
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    if x > (a + 1.0) / (a + b + 2.0):
        return 1.0 - incomplete_beta_series(1.0 - x, b, a, terms)
    log_prefix = (
        a * math.log(x)
        + b * math.log1p(-x)
        - math.log(a)
        - (math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b))
    )
    total = 1.0
    term = 1.0
    for n in range(1, terms):
        term *= (a + b + n - 1.0) * x / (a + n)
        total += term
        if abs(term) < 1e-17 * abs(total):
            break
    return math.exp(log_prefix) * total
