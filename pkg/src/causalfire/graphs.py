"""Static weighted adjacency matrices gating the graph-network message passing.

Three flavours share one normalization: 'causal' aggregates discovered lagged
links per directed variable pair, 'corr' uses absolute feature correlations,
'full' connects everything. The forecast target never appears as a node; its
row and column are masked out before the matrix is built.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DegenerateSeriesError, EmptyGraphError
from .pcmci import CausalGraph
from .stats import corrcoef_matrix

__all__ = [
    "AdjacencyMatrix",
    "causal_adjacency",
    "corr_adjacency",
    "full_adjacency",
    "normalize_adjacency",
    "adjacency_to_csv",
]

log = logging.getLogger(__name__)


@dataclass
class AdjacencyMatrix:
    """Nonnegative (C, C) weights over non-target variables.

    weights[i, j] is the strength of i -> j (messages flow along columns into
    the target node of the edge).
    """

    weights: np.ndarray
    names: list[str]
    kind: str  # 'causal' | 'corr' | 'full'
    normalized: bool = False

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        c = len(self.names)
        if self.weights.shape != (c, c):
            raise ContractError("adjacency must be square over the named variables")
        if np.any(self.weights < 0):
            raise ContractError("adjacency weights must be nonnegative")
        if not np.all(np.isfinite(self.weights)):
            raise ContractError("adjacency weights must be finite")

    @property
    def n_nodes(self) -> int:
        return len(self.names)


def _nontarget_names(graph: CausalGraph) -> list[str]:
    return [n for n, k in zip(graph.names, graph.kinds) if k != "target"]


def causal_adjacency(graph: CausalGraph) -> AdjacencyMatrix:
    """Aggregate retained lagged links into per-pair weights.

    For each directed pair the weight is the largest |mci| over retained lags
    tau >= 1 (contemporaneous links are diagnostic only and skipped);
    self-links land on the diagonal. Target row/column are masked out.
    """
    names = _nontarget_names(graph)
    if not names:
        raise EmptyGraphError("graph has no non-target variables")
    index = {graph.names.index(n): k for k, n in enumerate(names)}
    c = len(names)
    weights = np.zeros((c, c))
    for link in graph.lagged_links():
        if link.source in index and link.target in index:
            i, j = index[link.source], index[link.target]
            weights[i, j] = max(weights[i, j], abs(link.mci))
    return AdjacencyMatrix(weights=weights, names=names, kind="causal")


def corr_adjacency(node_features: np.ndarray, names: list[str]) -> AdjacencyMatrix:
    """Absolute correlation of per-variable temporal features.

    A constant feature row would make the correlation undefined; such rows
    fall back to zero weights (logged) so a forward pass never crashes.
    """
    f = np.asarray(node_features, dtype=np.float64)
    if f.ndim != 2 or f.shape[1] < 2:
        raise ContractError("node features must be (C, d) with d >= 2")
    if f.shape[0] != len(names):
        raise ContractError("feature rows must match the variable names")
    centered = f - f.mean(axis=1, keepdims=True)
    degenerate = np.nonzero((centered * centered).sum(axis=1) == 0.0)[0]
    if degenerate.size:
        log.warning(
            "constant temporal features for %s; using zero adjacency rows",
            [names[i] for i in degenerate],
        )
        keep = [i for i in range(f.shape[0]) if i not in set(degenerate.tolist())]
        weights = np.zeros((f.shape[0], f.shape[0]))
        if keep:
            sub = np.abs(corrcoef_matrix(f[keep]))
            for a, i in enumerate(keep):
                for b, j in enumerate(keep):
                    weights[i, j] = sub[a, b]
    else:
        weights = np.abs(corrcoef_matrix(f))
    return AdjacencyMatrix(weights=weights, names=list(names), kind="corr")


def full_adjacency(names: list[str]) -> AdjacencyMatrix:
    """Fully connected graph: every entry one before normalization."""
    c = len(names)
    if c == 0:
        raise EmptyGraphError("no variables for the fully connected graph")
    return AdjacencyMatrix(weights=np.ones((c, c)), names=list(names), kind="full")


def normalize_adjacency(adj: AdjacencyMatrix) -> AdjacencyMatrix:
    """Degree-rescale A + I for stable message passing.

    Computes D_out^{-1/2} (A + I) D_in^{-1/2} where D_out/D_in are the
    row/column sums of A + I. For symmetric inputs this is the standard
    symmetric normalization; the added identity keeps isolated nodes defined.
    Idempotent in pattern: zeros stay zero apart from the added diagonal.
    """
    if adj.normalized:
        raise ContractError("adjacency is already normalized")
    with_loops = adj.weights + np.eye(adj.n_nodes)
    d_out = with_loops.sum(axis=1)
    d_in = with_loops.sum(axis=0)
    scaled = with_loops / np.sqrt(np.outer(d_out, d_in))
    return AdjacencyMatrix(
        weights=scaled, names=list(adj.names), kind=adj.kind, normalized=True
    )


def adjacency_to_csv(adj: AdjacencyMatrix) -> str:
    """CSV with a leading header row/column of variable names."""
    lines = ["," + ",".join(adj.names)]
    for name, row_vals in zip(adj.names, adj.weights):
        lines.append(name + "," + ",".join(repr(float(v)) for v in row_vals))
    return "\n".join(lines) + "\n"
