"""Ranking metrics for imbalanced binary classification.

auprc uses the average-precision formulation with equal scores grouped into a
single threshold step; auroc uses the Mann-Whitney rank statistic with half
credit for ties. Both are exact, not interpolated.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import UndefinedMetricError

__all__ = [
    "auprc",
    "auroc",
    "pr_curve",
    "roc_curve",
    "EvalReport",
]


def _validate(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if s.shape != y.shape:
        raise UndefinedMetricError("scores and labels must have equal length")
    if y.sum() == 0 or y.sum() == len(y):
        raise UndefinedMetricError("both classes must be present")
    return s, y


def _grouped_counts(s: np.ndarray, y: np.ndarray):
    """Cumulative true/false positives at each distinct score, descending."""
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    # last index of each tie group
    boundaries = np.nonzero(np.diff(s_sorted))[0]
    idx = np.r_[boundaries, len(s_sorted) - 1]
    tps = np.cumsum(y_sorted)[idx]
    fps = np.cumsum(1 - y_sorted)[idx]
    return tps, fps, s_sorted[idx]


def auprc(scores, labels) -> float:
    """Area under the precision-recall curve (average precision)."""
    s, y = _validate(scores, labels)
    tps, fps, _ = _grouped_counts(s, y)
    n_pos = tps[-1]
    precision = tps / (tps + fps)
    recall = tps / n_pos
    deltas = np.diff(np.r_[0.0, recall])
    return float((precision * deltas).sum())


def auroc(scores, labels) -> float:
    """P(score_pos > score_neg) + 0.5 P(equal), via average ranks."""
    s, y = _validate(scores, labels)
    order = np.argsort(s, kind="stable")
    ranks = np.empty(len(s), dtype=np.float64)
    s_sorted = s[order]
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and s_sorted[j + 1] == s_sorted[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def pr_curve(scores, labels):
    """Precision/recall points at every distinct threshold, plus (1, 0) start."""
    s, y = _validate(scores, labels)
    tps, fps, thresholds = _grouped_counts(s, y)
    precision = np.r_[1.0, tps / (tps + fps)]
    recall = np.r_[0.0, tps / tps[-1]]
    return precision, recall, thresholds


def roc_curve(scores, labels):
    s, y = _validate(scores, labels)
    tps, fps, thresholds = _grouped_counts(s, y)
    tpr = np.r_[0.0, tps / tps[-1]]
    fpr = np.r_[0.0, fps / fps[-1]]
    return fpr, tpr, thresholds


@dataclass
class EvalReport:
    """Per-seed and aggregate ranking scores for one model/dataset pair."""

    model: str
    horizon: int
    positive_fraction: float
    seeds: list[int]
    auprc_per_seed: list[float]
    auroc_per_seed: list[float]
    extra: dict = field(default_factory=dict)

    @property
    def mean_auprc(self) -> float:
        return float(np.mean(self.auprc_per_seed))

    @property
    def mean_auroc(self) -> float:
        return float(np.mean(self.auroc_per_seed))

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "horizon": self.horizon,
            "positive_fraction": self.positive_fraction,
            "random_baseline_auprc": self.positive_fraction,
            "seeds": list(self.seeds),
            "auprc_per_seed": [float(v) for v in self.auprc_per_seed],
            "auroc_per_seed": [float(v) for v in self.auroc_per_seed],
            "mean_auprc": self.mean_auprc,
            "mean_auroc": self.mean_auroc,
            **self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "EvalReport":
        d = json.loads(text)
        known = {
            "model",
            "horizon",
            "positive_fraction",
            "random_baseline_auprc",
            "seeds",
            "auprc_per_seed",
            "auroc_per_seed",
            "mean_auprc",
            "mean_auroc",
        }
        return EvalReport(
            model=d["model"],
            horizon=d["horizon"],
            positive_fraction=d["positive_fraction"],
            seeds=d["seeds"],
            auprc_per_seed=d["auprc_per_seed"],
            auroc_per_seed=d["auroc_per_seed"],
            extra={k: v for k, v in d.items() if k not in known},
        )


def curve_csv(xs: np.ndarray, ys: np.ndarray, x_name: str, y_name: str) -> str:
    lines = [f"{x_name},{y_name}"]
    for x, y in zip(xs, ys):
        lines.append(f"{float(x)!r},{float(y)!r}")
    return "\n".join(lines) + "\n"
