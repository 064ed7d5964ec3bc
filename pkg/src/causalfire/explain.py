"""Shapley-value attribution of model confidence to input feature groups.

Masked coordinates are replaced by the background mean (single-reference
masking), the value function is the positive-class confidence, and groups
partition the flattened input: by default each local variable is one group
(its whole lag window) and each (slow index, lag) cell is its own group, so
lagged influence can be read per month.

Two estimators share the machinery: permutation sampling (telescoping
marginal contributions along random insertion orders) and exact enumeration
over all coalitions for small group counts, used as the estimator's oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .graphs import AdjacencyMatrix
from .models import Batch, ModelConfig, ModelParams, model_forward

__all__ = [
    "FeatureGroup",
    "Attribution",
    "default_feature_groups",
    "confidence_fn",
    "shapley_estimate",
    "exact_shapley",
    "aggregate_abs_by_lag",
    "attributions_to_csv",
    "lag_matrix_to_csv",
]

_MAX_EXACT_GROUPS = 12


@dataclass(frozen=True)
class FeatureGroup:
    """Named set of flattened input coordinates attributed as one player."""

    label: str
    coords: tuple[int, ...]
    kind: str  # 'local' | 'oci'
    variable: str
    lag: int | None = None  # slow-index lag position, None for whole windows


@dataclass
class Attribution:
    """Shapley values for one sample plus the background baseline."""

    values: np.ndarray  # (n_groups,)
    groups: list[FeatureGroup]
    baseline: float  # value of the fully masked sample
    prediction: float  # value of the unmasked sample

    def local_accuracy_gap(self) -> float:
        return abs(self.baseline + float(self.values.sum()) - self.prediction)


def flatten_sample(x_local: np.ndarray, x_oci: np.ndarray) -> np.ndarray:
    return np.concatenate([x_local.reshape(-1), x_oci.reshape(-1)])


def unflatten_sample(flat: np.ndarray, config: ModelConfig) -> tuple[np.ndarray, np.ndarray]:
    n_local = config.c_local * config.l_local
    x_local = flat[:n_local].reshape(config.c_local, config.l_local)
    x_oci = flat[n_local:].reshape(config.c_oci, config.l_oci)
    return x_local, x_oci


def default_feature_groups(
    config: ModelConfig, local_names: list[str], oci_names: list[str]
) -> list[FeatureGroup]:
    """One group per local variable, one per (slow index, lag) coordinate.

    Lag 0 is the most recent sampled block; larger lags look further back.
    """
    groups: list[FeatureGroup] = []
    for c, name in enumerate(local_names):
        coords = tuple(range(c * config.l_local, (c + 1) * config.l_local))
        groups.append(FeatureGroup(label=name, coords=coords, kind="local", variable=name))
    base = config.c_local * config.l_local
    for c, name in enumerate(oci_names):
        for pos in range(config.l_oci):
            lag = config.l_oci - 1 - pos  # last window column is the newest
            groups.append(
                FeatureGroup(
                    label=f"{name}[lag {lag}]",
                    coords=(base + c * config.l_oci + pos,),
                    kind="oci",
                    variable=name,
                    lag=lag,
                )
            )
    return groups


def confidence_fn(
    params: ModelParams,
    config: ModelConfig,
    adjacency: AdjacencyMatrix | None,
    node_names: list[str] | None = None,
):
    """Batched value function: flattened inputs -> positive-class confidence."""

    def value(flat_batch: np.ndarray) -> np.ndarray:
        n = flat_batch.shape[0]
        locals_, ocis = [], []
        for b in range(n):
            xl, xo = unflatten_sample(flat_batch[b], config)
            locals_.append(xl)
            ocis.append(xo)
        batch = Batch(
            x_local=np.stack(locals_),
            x_oci=np.stack(ocis),
            y=np.zeros(n, dtype=np.int64),
            horizon=config.horizon,
        )
        _, conf = model_forward(batch, params, config, adjacency, node_names)
        return conf

    return value


def _validate_groups(groups: list[FeatureGroup], n_coords: int) -> None:
    seen: set[int] = set()
    for g in groups:
        if not g.coords:
            raise ContractError(f"feature group {g.label!r} is empty")
        for c in g.coords:
            if c in seen:
                raise ContractError("feature groups must not overlap")
            seen.add(c)
    if seen != set(range(n_coords)):
        raise ContractError("feature groups must partition the input coordinates")


def _masked_variant(
    sample: np.ndarray, background_mean: np.ndarray, groups, present: set[int]
) -> np.ndarray:
    out = background_mean.copy()
    for gi in present:
        coords = list(groups[gi].coords)
        out[coords] = sample[coords]
    return out


def shapley_estimate(
    value_fn,
    sample: np.ndarray,
    background: np.ndarray,
    groups: list[FeatureGroup],
    n_permutations: int,
    rng: np.random.Generator,
) -> Attribution:
    """Permutation-sampling Shapley values of ``value_fn`` at ``sample``.

    For each sampled insertion order the marginal contribution of adding
    every group is recorded; averaging over orders estimates the Shapley
    value. Each order needs one batched model evaluation of k+1 variants.
    """
    background = np.atleast_2d(np.asarray(background, dtype=np.float64))
    if background.shape[0] < 1:
        raise ContractError("background must contain at least one sample")
    sample = np.asarray(sample, dtype=np.float64).reshape(-1)
    _validate_groups(groups, sample.shape[0])
    k = len(groups)
    bg_mean = background.mean(axis=0)
    totals = np.zeros(k)
    baseline = None
    prediction = None
    for _ in range(n_permutations):
        order = rng.permutation(k)
        variants = np.empty((k + 1, sample.shape[0]))
        present: set[int] = set()
        variants[0] = _masked_variant(sample, bg_mean, groups, present)
        for step, gi in enumerate(order):
            present.add(int(gi))
            variants[step + 1] = _masked_variant(sample, bg_mean, groups, present)
        values = value_fn(variants)
        if baseline is None:
            baseline = float(values[0])
            prediction = float(values[-1])
        totals[order] += np.diff(values)
    return Attribution(
        values=totals / n_permutations,
        groups=list(groups),
        baseline=baseline,
        prediction=prediction,
    )


def exact_shapley(
    value_fn,
    sample: np.ndarray,
    background: np.ndarray,
    groups: list[FeatureGroup],
) -> Attribution:
    """Exact Shapley values by enumerating all 2^k coalitions (k <= 12)."""
    k = len(groups)
    if k > _MAX_EXACT_GROUPS:
        raise ContractError(
            f"exact enumeration supports at most {_MAX_EXACT_GROUPS} groups, got {k}"
        )
    background = np.atleast_2d(np.asarray(background, dtype=np.float64))
    if background.shape[0] < 1:
        raise ContractError("background must contain at least one sample")
    sample = np.asarray(sample, dtype=np.float64).reshape(-1)
    _validate_groups(groups, sample.shape[0])
    bg_mean = background.mean(axis=0)
    n_coalitions = 1 << k
    variants = np.empty((n_coalitions, sample.shape[0]))
    for mask in range(n_coalitions):
        present = {gi for gi in range(k) if mask >> gi & 1}
        variants[mask] = _masked_variant(sample, bg_mean, groups, present)
    values = np.asarray(value_fn(variants), dtype=np.float64)
    fact = [math.factorial(i) for i in range(k + 1)]
    weights = [fact[s] * fact[k - s - 1] / fact[k] for s in range(k)]
    shapley = np.zeros(k)
    for mask in range(n_coalitions):
        size = bin(mask).count("1")
        for gi in range(k):
            if mask >> gi & 1:
                continue
            shapley[gi] += weights[size] * (values[mask | (1 << gi)] - values[mask])
    return Attribution(
        values=shapley,
        groups=list(groups),
        baseline=float(values[0]),
        prediction=float(values[-1]),
    )


def aggregate_abs_by_lag(
    attributions: list[Attribution],
    oci_names: list[str],
    n_lags: int,
    scale_per_variable: bool = False,
) -> np.ndarray:
    """Mean absolute Shapley value per (slow index, lag) cell over samples.

    With scaling each variable's row is min-max mapped to [0, 1], so the
    strongest lag of every index reads as one.
    """
    if not attributions:
        raise ContractError("need at least one attribution to aggregate")
    matrix = np.zeros((len(oci_names), n_lags))
    counts = np.zeros((len(oci_names), n_lags))
    index = {name: i for i, name in enumerate(oci_names)}
    for att in attributions:
        for g, v in zip(att.groups, att.values):
            if g.kind != "oci" or g.lag is None:
                continue
            matrix[index[g.variable], g.lag] += abs(v)
            counts[index[g.variable], g.lag] += 1
    counts[counts == 0] = 1
    matrix /= counts
    if scale_per_variable:
        lo = matrix.min(axis=1, keepdims=True)
        hi = matrix.max(axis=1, keepdims=True)
        span = np.where(hi > lo, hi - lo, 1.0)
        matrix = (matrix - lo) / span
    return matrix


def attributions_to_csv(attributions: list[Attribution]) -> str:
    """Rows are feature groups, columns are samples."""
    if not attributions:
        raise ContractError("nothing to export")
    header = "feature," + ",".join(f"sample_{i}" for i in range(len(attributions)))
    lines = [header]
    for gi, group in enumerate(attributions[0].groups):
        vals = ",".join(repr(float(a.values[gi])) for a in attributions)
        lines.append(f"{group.label},{vals}")
    return "\n".join(lines) + "\n"


def lag_matrix_to_csv(matrix: np.ndarray, oci_names: list[str]) -> str:
    header = "variable," + ",".join(f"lag_{l}" for l in range(matrix.shape[1]))
    lines = [header]
    for name, row in zip(oci_names, matrix):
        lines.append(name + "," + ",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"
