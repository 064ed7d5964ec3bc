"""Neural architectures: shared recurrent encoder, graph convolution, pooling.

Each input variable is a scalar sequence run through one shared LSTM (or GRU)
encoder; the per-variable final hidden states become graph nodes. Two graph
convolution layers with layer norm and LeakyReLU mix node features along a
normalized adjacency, mean pooling gathers the graph, and a linear layer
produces two-class logits. The recurrent baselines skip the mixing and
average the node features directly.

Forward passes take an explicit normalized adjacency. The correlation-graph
variant recomputes its adjacency per batch from the current (detached)
temporal features; gradients do not flow through those correlation weights.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, DimensionError, LabelError
from .graphs import AdjacencyMatrix, corr_adjacency, normalize_adjacency

__all__ = [
    "MODEL_KINDS",
    "ModelConfig",
    "Batch",
    "LstmParams",
    "GruParams",
    "GcnLayerParams",
    "ClassifierParams",
    "ModelParams",
    "lstm_encode",
    "gru_encode",
    "gcn_layer",
    "forward",
    "forward_rnn_baseline",
    "batch_corr_adjacency",
    "save_checkpoint",
    "load_checkpoint",
]

MODEL_KINDS = ("lstm", "gru", "gnn_corr", "gnn_full", "gnn_causal")


@dataclass
class ModelConfig:
    """Architecture dimensions and input window geometry."""

    c_local: int
    c_oci: int
    l_local: int
    l_oci: int
    horizon: int = 1
    hidden_dim: int = 32
    gnn_hidden: int = 64
    num_classes: int = 2
    leaky_slope: float = 0.01
    ln_eps: float = 1e-5

    def __post_init__(self) -> None:
        if min(self.hidden_dim, self.gnn_hidden, self.l_local, self.l_oci) < 1:
            raise ContractError("model dimensions must be >= 1")
        if self.horizon < 1:
            raise ContractError("forecast horizon must be >= 1")
        if self.num_classes != 2:
            raise ContractError("only binary classification is supported")

    @property
    def n_nodes(self) -> int:
        return self.c_local + self.c_oci

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        return ModelConfig(**d)


@dataclass
class Batch:
    """Input windows and labels for a set of samples.

    Lag windows end strictly before the labeled step, which sits ``horizon``
    steps after the last observed input.
    """

    x_local: np.ndarray  # (B, C_local, L_local)
    x_oci: np.ndarray  # (B, C_oci, L_oci)
    y: np.ndarray  # (B,) in {0, 1}
    horizon: int

    def __post_init__(self) -> None:
        self.x_local = np.asarray(self.x_local, dtype=np.float64)
        self.x_oci = np.asarray(self.x_oci, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.x_local.ndim != 3 or self.x_oci.ndim != 3:
            raise DimensionError("batch inputs must be (B, C, L) arrays")
        b = self.x_local.shape[0]
        if b < 1 or self.x_oci.shape[0] != b or self.y.shape != (b,):
            raise DimensionError("inconsistent batch sizes")
        if np.any((self.y != 0) & (self.y != 1)):
            raise LabelError("labels must be 0 or 1")
        if self.horizon < 1:
            raise ContractError("horizon must be >= 1")

    @property
    def size(self) -> int:
        return self.x_local.shape[0]

    def subset(self, idx: np.ndarray) -> "Batch":
        return Batch(
            x_local=self.x_local[idx],
            x_oci=self.x_oci[idx],
            y=self.y[idx],
            horizon=self.horizon,
        )


@dataclass
class LstmParams:
    """Per-gate input/recurrent kernels and biases of the shared encoder."""

    w_xi: Tensor
    w_hi: Tensor
    b_i: Tensor
    w_xf: Tensor
    w_hf: Tensor
    b_f: Tensor
    w_xg: Tensor
    w_hg: Tensor
    b_g: Tensor
    w_xo: Tensor
    w_ho: Tensor
    b_o: Tensor


@dataclass
class GruParams:
    w_xz: Tensor
    w_hz: Tensor
    b_z: Tensor
    w_xr: Tensor
    w_hr: Tensor
    b_r: Tensor
    w_xn: Tensor
    w_hn: Tensor
    b_n: Tensor


@dataclass
class GcnLayerParams:
    kernel: Tensor
    gamma: Tensor
    beta: Tensor


@dataclass
class ClassifierParams:
    weight: Tensor
    bias: Tensor


@dataclass
class ModelParams:
    """All learnable tensors of one model, addressable by stable names."""

    kind: str
    encoder: LstmParams | GruParams
    classifier: ClassifierParams
    gcn1: GcnLayerParams | None = None
    gcn2: GcnLayerParams | None = None

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        out: list[tuple[str, Tensor]] = []
        for group_name in ("encoder", "gcn1", "gcn2", "classifier"):
            group = getattr(self, group_name)
            if group is None:
                continue
            for f in dataclasses.fields(group):
                out.append((f"{group_name}.{f.name}", getattr(group, f.name)))
        return out

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.named_tensors()}

    def restore(self, values: dict[str, np.ndarray]) -> None:
        for name, t in self.named_tensors():
            t.data[...] = values[name]

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(t.data)) for _, t in self.named_tensors())

    def zero_grad(self) -> None:
        for _, t in self.named_tensors():
            t.zero_grad()


def _column(series: np.ndarray, t: int) -> Tensor:
    return Tensor(series[:, t : t + 1])


def _series_data(series) -> np.ndarray:
    data = series.data if isinstance(series, Tensor) else np.asarray(series, dtype=np.float64)
    if data.ndim != 2:
        raise DimensionError("encoder input must be (B, L)")
    if data.shape[1] < 1:
        raise ContractError("encoder input must contain at least one step")
    return data


def lstm_encode(series, p: LstmParams) -> Tensor:
    """Roll the LSTM over a (B, L) scalar sequence; return the final hidden state.

    Gates: i, f, o sigmoid; cell candidate g tanh; c_t = f*c + i*g;
    h_t = o * tanh(c_t). Initial hidden and cell states are zero.
    """
    data = _series_data(series)
    b = data.shape[0]
    hidden = p.w_xi.data.shape[1]
    h = Tensor(np.zeros((b, hidden)))
    c = Tensor(np.zeros((b, hidden)))
    for t in range(data.shape[1]):
        x_t = _column(data, t)
        gate_i = ad.sigmoid(ad.add(ad.add(ad.matmul(x_t, p.w_xi), ad.matmul(h, p.w_hi)), p.b_i))
        gate_f = ad.sigmoid(ad.add(ad.add(ad.matmul(x_t, p.w_xf), ad.matmul(h, p.w_hf)), p.b_f))
        gate_g = ad.tanh(ad.add(ad.add(ad.matmul(x_t, p.w_xg), ad.matmul(h, p.w_hg)), p.b_g))
        gate_o = ad.sigmoid(ad.add(ad.add(ad.matmul(x_t, p.w_xo), ad.matmul(h, p.w_ho)), p.b_o))
        c = ad.add(ad.mul(gate_f, c), ad.mul(gate_i, gate_g))
        h = ad.mul(gate_o, ad.tanh(c))
    return h


def gru_encode(series, p: GruParams) -> Tensor:
    """GRU recurrence: update z, reset r, candidate n; h' = (1-z)*n + z*h."""
    data = _series_data(series)
    b = data.shape[0]
    hidden = p.w_xz.data.shape[1]
    h = Tensor(np.zeros((b, hidden)))
    ones = Tensor(np.ones((b, hidden)))
    for t in range(data.shape[1]):
        x_t = _column(data, t)
        z = ad.sigmoid(ad.add(ad.add(ad.matmul(x_t, p.w_xz), ad.matmul(h, p.w_hz)), p.b_z))
        r = ad.sigmoid(ad.add(ad.add(ad.matmul(x_t, p.w_xr), ad.matmul(h, p.w_hr)), p.b_r))
        n = ad.tanh(
            ad.add(ad.add(ad.matmul(x_t, p.w_xn), ad.mul(r, ad.matmul(h, p.w_hn))), p.b_n)
        )
        h = ad.add(ad.mul(ad.sub(ones, z), n), ad.mul(z, h))
    return h


def gcn_layer(
    nodes: Tensor,
    adj: AdjacencyMatrix,
    layer: GcnLayerParams,
    slope: float,
    ln_eps: float = 1e-5,
) -> Tensor:
    """One graph convolution on a (C, d) node-feature matrix.

    Messages flow source -> target along adjacency columns, then a shared
    linear kernel, per-node layer norm, and LeakyReLU.
    """
    if not adj.normalized:
        raise ContractError("gcn_layer requires a normalized adjacency")
    if nodes.data.shape[0] != adj.n_nodes:
        raise ContractError("node count does not match the adjacency")
    mixed = ad.matmul(Tensor(adj.weights.T), nodes)
    projected = ad.matmul(mixed, layer.kernel)
    return ad.leaky_relu(ad.layer_norm(projected, layer.gamma, layer.beta, eps=ln_eps), slope)


def _encode_nodes(batch: Batch, params: ModelParams) -> list[Tensor]:
    """Shared encoder applied per variable: locals first, then ocis."""
    encode = lstm_encode if isinstance(params.encoder, LstmParams) else gru_encode
    features = [
        encode(batch.x_local[:, c, :], params.encoder)
        for c in range(batch.x_local.shape[1])
    ]
    features += [
        encode(batch.x_oci[:, c, :], params.encoder)
        for c in range(batch.x_oci.shape[1])
    ]
    return features


def _mix_nodes(units: list[Tensor], weights: np.ndarray) -> list[Tensor]:
    """Linear node mixing with constant scalar weights (source -> target)."""
    mixed = []
    for target in range(len(units)):
        acc = None
        for source in range(len(units)):
            w = weights[source, target]
            if w == 0.0:
                continue
            term = ad.scale(units[source], w)
            acc = term if acc is None else ad.add(acc, term)
        if acc is None:
            acc = Tensor(np.zeros_like(units[target].data))
        mixed.append(acc)
    return mixed


def _gcn_layer_batched(
    node_feats: list[Tensor],
    adj: AdjacencyMatrix,
    layer: GcnLayerParams,
    slope: float,
    ln_eps: float,
) -> list[Tensor]:
    projected = [ad.matmul(h, layer.kernel) for h in node_feats]
    mixed = _mix_nodes(projected, adj.weights)
    return [
        ad.leaky_relu(ad.layer_norm(m, layer.gamma, layer.beta, eps=ln_eps), slope)
        for m in mixed
    ]


def _check_model_kind(params: ModelParams, expect_gcn: bool) -> None:
    has_gcn = params.gcn1 is not None and params.gcn2 is not None
    if expect_gcn and not has_gcn:
        raise ContractError(f"model kind {params.kind!r} lacks graph layers")


def forward(
    batch: Batch,
    adjacency: AdjacencyMatrix,
    params: ModelParams,
    config: ModelConfig,
) -> tuple[Tensor, np.ndarray]:
    """Graph-network forward pass with an explicit normalized adjacency.

    Returns (logits, confidence); confidence is the softmax probability of
    the positive class per sample.
    """
    _check_model_kind(params, expect_gcn=True)
    if not adjacency.normalized:
        raise ContractError("forward requires a normalized adjacency")
    if batch.x_local.shape[1] != config.c_local or batch.x_oci.shape[1] != config.c_oci:
        raise ContractError("batch variable counts do not match the model config")
    if adjacency.n_nodes != config.n_nodes:
        raise ContractError(
            f"adjacency has {adjacency.n_nodes} nodes, model expects {config.n_nodes}"
        )
    node_feats = _encode_nodes(batch, params)
    h1 = _gcn_layer_batched(node_feats, adjacency, params.gcn1, config.leaky_slope, config.ln_eps)
    h2 = _gcn_layer_batched(h1, adjacency, params.gcn2, config.leaky_slope, config.ln_eps)
    pooled = None
    for h in h2:
        pooled = h if pooled is None else ad.add(pooled, h)
    pooled = ad.scale(pooled, 1.0 / len(h2))
    logits = ad.add(ad.matmul(pooled, params.classifier.weight), params.classifier.bias)
    confidence = ad.softmax(logits.data)[:, 1]
    return logits, confidence


def forward_rnn_baseline(
    batch: Batch, params: ModelParams, config: ModelConfig
) -> tuple[Tensor, np.ndarray]:
    """Recurrent baseline: average the per-variable hidden states, classify.

    Differs from the graph models only in the missing mixing step, which
    isolates the contribution of the adjacency.
    """
    if batch.x_local.shape[1] != config.c_local or batch.x_oci.shape[1] != config.c_oci:
        raise ContractError("batch variable counts do not match the model config")
    node_feats = _encode_nodes(batch, params)
    pooled = None
    for h in node_feats:
        pooled = h if pooled is None else ad.add(pooled, h)
    pooled = ad.scale(pooled, 1.0 / len(node_feats))
    logits = ad.add(ad.matmul(pooled, params.classifier.weight), params.classifier.bias)
    confidence = ad.softmax(logits.data)[:, 1]
    return logits, confidence


def batch_corr_adjacency(
    batch: Batch, params: ModelParams, config: ModelConfig, names: list[str]
) -> AdjacencyMatrix:
    """Correlation adjacency of the current batch's temporal features.

    Encodes the batch without recording to any tape and correlates the
    flattened per-variable hidden states; the result is a constant for the
    subsequent forward pass (no gradient flows through the weights).
    """
    feats = _encode_nodes(batch, params)  # no active tape -> detached
    flat = np.stack([f.data.reshape(-1) for f in feats])
    return normalize_adjacency(corr_adjacency(flat, names))


def model_forward(
    batch: Batch,
    params: ModelParams,
    config: ModelConfig,
    adjacency: AdjacencyMatrix | None = None,
    node_names: list[str] | None = None,
) -> tuple[Tensor, np.ndarray]:
    """Dispatch on model kind; gnn_corr recomputes its adjacency per batch
    unless an explicit (frozen) one is supplied."""
    if params.kind in ("lstm", "gru"):
        return forward_rnn_baseline(batch, params, config)
    if params.kind == "gnn_corr" and adjacency is None:
        names = node_names or [f"v{i}" for i in range(config.n_nodes)]
        adjacency = batch_corr_adjacency(batch, params, config, names)
    if adjacency is None:
        raise ContractError(f"model kind {params.kind!r} needs an adjacency")
    return forward(batch, adjacency, params, config)


def config_hash(config: ModelConfig) -> str:
    blob = json.dumps(config.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def save_checkpoint(path: Path, params: ModelParams, config: ModelConfig, seed: int) -> None:
    """Write a flat float64 binary plus a JSON manifest next to it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    named = params.named_tensors()
    manifest = {
        "format": 1,
        "kind": params.kind,
        "seed": seed,
        "config": config.to_dict(),
        "config_hash": config_hash(config),
        "tensors": [],
    }
    offset = 0
    chunks = []
    for name, t in named:
        arr = np.ascontiguousarray(t.data, dtype="<f8")
        manifest["tensors"].append(
            {"name": name, "shape": list(arr.shape), "offset": offset}
        )
        chunks.append(arr.tobytes())
        offset += arr.size
    path.with_suffix(".bin").write_bytes(b"".join(chunks))
    path.with_suffix(".json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load_checkpoint(path: Path) -> tuple[ModelParams, ModelConfig, int]:
    path = Path(path)
    manifest = json.loads(path.with_suffix(".json").read_text())
    config = ModelConfig.from_dict(manifest["config"])
    raw = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype="<f8")
    params = build_params_like(manifest["kind"], config)
    by_name = {e["name"]: e for e in manifest["tensors"]}
    for name, t in params.named_tensors():
        entry = by_name[name]
        size = int(np.prod(entry["shape"])) if entry["shape"] else 1
        t.data[...] = raw[entry["offset"] : entry["offset"] + size].reshape(entry["shape"])
    return params, config, manifest["seed"]


def _zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def build_params_like(kind: str, config: ModelConfig) -> ModelParams:
    """Zero-valued parameter structure of the right shapes for ``kind``."""
    if kind not in MODEL_KINDS:
        raise ContractError(f"unknown model kind {kind!r}")
    h = config.hidden_dim
    if kind == "gru":
        encoder = GruParams(
            **{
                f.name: _zeros((1, h) if f.name.startswith("w_x") or f.name.startswith("b") else (h, h))
                for f in dataclasses.fields(GruParams)
            }
        )
    else:
        encoder = LstmParams(
            **{
                f.name: _zeros((1, h) if f.name.startswith("w_x") or f.name.startswith("b") else (h, h))
                for f in dataclasses.fields(LstmParams)
            }
        )
    gcn1 = gcn2 = None
    if kind.startswith("gnn"):
        gcn1 = GcnLayerParams(
            kernel=_zeros((h, config.gnn_hidden)),
            gamma=_zeros(config.gnn_hidden),
            beta=_zeros(config.gnn_hidden),
        )
        gcn2 = GcnLayerParams(
            kernel=_zeros((config.gnn_hidden, h)),
            gamma=_zeros(h),
            beta=_zeros(h),
        )
    classifier = ClassifierParams(weight=_zeros((h, 2)), bias=_zeros((1, 2)))
    return ModelParams(kind=kind, encoder=encoder, classifier=classifier, gcn1=gcn1, gcn2=gcn2)
