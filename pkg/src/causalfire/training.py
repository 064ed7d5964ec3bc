"""Training harness: imbalance resampling, initialization, optimizer, loop.

Training and validation splits are resampled so negatives outnumber
positives by at most a fixed ratio (the test split is never touched); the
negative subsample is refreshed every epoch by default. Optimization is
Adam with decoupled weight decay, and the best parameters are selected by
validation AUPRC.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .errors import ConfigError, DataError, NonFiniteError
from .graphs import AdjacencyMatrix
from .metrics import auprc
from .models import (
    Batch,
    GcnLayerParams,
    ModelConfig,
    ModelParams,
    build_params_like,
    model_forward,
)

__all__ = [
    "TrainConfig",
    "TrainResult",
    "resample_indices",
    "xavier_init",
    "init_params",
    "AdamW",
    "train",
    "predict_confidence",
]

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 1e-5
    weight_decay: float = 5e-6
    neg_pos_ratio: int = 5
    epochs: int = 100
    batch_size: int = 64
    seeds: tuple[int, ...] = (0, 1, 2)
    resample_each_epoch: bool = True
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self) -> None:
        if self.lr < 0:
            raise ConfigError("learning rate must be >= 0")
        if self.weight_decay < 0:
            raise ConfigError("weight decay must be >= 0")
        if self.neg_pos_ratio < 1:
            raise ConfigError("negative:positive ratio must be >= 1")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["seeds"] = list(self.seeds)
        return d

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        d = dict(d)
        if "seeds" in d:
            d["seeds"] = tuple(d["seeds"])
        return TrainConfig(**d)


def _logit(p: np.ndarray) -> np.ndarray:
    clipped = np.clip(p, 1e-12, 1.0 - 1e-12)
    return np.log(clipped / (1.0 - clipped))


def resample_indices(labels: np.ndarray, ratio: int, rng: np.random.Generator) -> np.ndarray:
    """Keep every positive; subsample negatives without replacement to
    ratio * positives (or all of them, if fewer)."""
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    pos = np.nonzero(labels == 1)[0]
    neg = np.nonzero(labels == 0)[0]
    if len(pos) == 0:
        raise DataError("cannot resample a split with no positive samples")
    n_neg = min(len(neg), ratio * len(pos))
    chosen_neg = rng.choice(neg, size=n_neg, replace=False) if n_neg else np.empty(0, dtype=np.int64)
    return np.sort(np.concatenate([pos, chosen_neg]))


def xavier_init(shape: tuple[int, int], rng: np.random.Generator) -> Tensor:
    """Zero-mean normal with variance 2 / (fan_in + fan_out)."""
    if len(shape) != 2:
        raise ConfigError("xavier initialization expects a 2-D shape")
    std = np.sqrt(2.0 / (shape[0] + shape[1]))
    return Tensor(rng.normal(0.0, std, size=shape), requires_grad=True)


def init_params(kind: str, config: ModelConfig, rng: np.random.Generator) -> ModelParams:
    """Xavier-normal weights, zero biases and zero layer-norm shifts.

    Layer-norm scales start at one so early training sees unit activations.
    """
    params = build_params_like(kind, config)
    for name, t in params.named_tensors():
        leaf = name.split(".")[-1]
        if leaf.startswith("b") or leaf == "beta":
            continue  # stays zero
        if leaf == "gamma":
            t.data[...] = 1.0
            continue
        t.data[...] = xavier_init(t.data.shape, rng).data
    return params


class AdamW:
    """Adam with decoupled weight decay.

    The decay multiplies parameters by (1 - weight_decay) each step
    independently of the learning rate, so a frozen optimizer (lr = 0)
    still shrinks weights as configured.
    """

    def __init__(self, params: ModelParams, cfg: TrainConfig) -> None:
        self.params = params
        self.cfg = cfg
        self._m = {name: np.zeros_like(t.data) for name, t in params.named_tensors()}
        self._v = {name: np.zeros_like(t.data) for name, t in params.named_tensors()}
        self._t = 0

    def zero_grad(self) -> None:
        self.params.zero_grad()

    def step(self) -> None:
        self._t += 1
        c = self.cfg
        bc1 = 1.0 - c.beta1**self._t
        bc2 = 1.0 - c.beta2**self._t
        for name, t in self.params.named_tensors():
            g = t.grad
            m = self._m[name]
            v = self._v[name]
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            if c.weight_decay:
                t.data *= 1.0 - c.weight_decay
            t.data -= c.lr * (m / bc1) / (np.sqrt(v / bc2) + c.adam_eps)
            if not np.all(np.isfinite(t.data)):
                raise NonFiniteError(f"parameter {name} became non-finite")


@dataclass
class TrainResult:
    params: ModelParams
    best_epoch: int
    best_val_auprc: float
    history: list[dict] = field(default_factory=list)


def predict_confidence(
    batch: Batch,
    params: ModelParams,
    config: ModelConfig,
    adjacency: AdjacencyMatrix | None,
    node_names: list[str] | None = None,
    chunk: int = 512,
) -> np.ndarray:
    """Positive-class confidence for every sample, evaluated tape-free."""
    out = np.empty(batch.size)
    for start in range(0, batch.size, chunk):
        idx = np.arange(start, min(start + chunk, batch.size))
        _, conf = model_forward(
            batch.subset(idx), params, config, adjacency, node_names
        )
        out[idx] = conf
    return out


def train(
    model_kind: str,
    windows_train: Batch,
    windows_val: Batch,
    model_config: ModelConfig,
    train_config: TrainConfig,
    rng: np.random.Generator,
    adjacency: AdjacencyMatrix | None = None,
    node_names: list[str] | None = None,
) -> TrainResult:
    """Fit one model; returns the parameters with the best validation AUPRC.

    The validation split is resampled once per run; the training negatives
    are redrawn each epoch unless configured otherwise.
    """
    params = init_params(model_kind, model_config, rng)
    optimizer = AdamW(params, train_config)
    val_idx = resample_indices(windows_val.y, train_config.neg_pos_ratio, rng)
    val_batch = windows_val.subset(val_idx)
    train_idx = resample_indices(windows_train.y, train_config.neg_pos_ratio, rng)

    best = {"epoch": -1, "auprc": -1.0, "loss": np.inf, "values": params.snapshot()}
    history: list[dict] = []
    for epoch in range(train_config.epochs):
        if train_config.resample_each_epoch and epoch > 0:
            train_idx = resample_indices(windows_train.y, train_config.neg_pos_ratio, rng)
        order = rng.permutation(len(train_idx))
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(order), train_config.batch_size):
            idx = train_idx[order[start : start + train_config.batch_size]]
            batch = windows_train.subset(idx)
            optimizer.zero_grad()
            with Tape() as tape:
                logits, _ = model_forward(batch, params, model_config, adjacency, node_names)
                loss, _ = ad.softmax_cross_entropy(logits, batch.y)
            if not np.isfinite(loss.item()):
                raise NonFiniteError(
                    f"loss became non-finite at epoch {epoch} (model {model_kind})"
                )
            tape.backward(loss)
            optimizer.step()
            epoch_loss += loss.item()
            n_batches += 1
        val_scores = predict_confidence(val_batch, params, model_config, adjacency, node_names)
        val_auprc = auprc(val_scores, val_batch.y)
        val_loss = float(
            ad.softmax_cross_entropy(
                Tensor(np.column_stack([np.zeros_like(val_scores), _logit(val_scores)])),
                val_batch.y,
            )[0].item()
        )
        history.append(
            {
                "epoch": epoch,
                "train_loss": epoch_loss / max(n_batches, 1),
                "val_auprc": val_auprc,
                "val_loss": val_loss,
            }
        )
        # selection by validation AUPRC; loss breaks ties (AUPRC saturates
        # quickly on heavily resampled validation splits)
        if val_auprc > best["auprc"] or (
            val_auprc == best["auprc"] and val_loss < best["loss"]
        ):
            best = {
                "epoch": epoch,
                "auprc": val_auprc,
                "loss": val_loss,
                "values": params.snapshot(),
            }
    params.restore(best["values"])
    log.info(
        "trained %s: best val AUPRC %.4f at epoch %d",
        model_kind,
        best["auprc"],
        best["epoch"],
    )
    return TrainResult(
        params=params,
        best_epoch=best["epoch"],
        best_val_auprc=best["auprc"],
        history=history,
    )
