"""Dense float64 tensors with reverse-mode differentiation on an explicit tape.

Every operation executed while a :class:`Tape` is active appends a backward
closure to that tape. Creation order is topological order by construction, so
``Tape.backward`` simply replays the closures in reverse. Outside any tape
(evaluation, finite-difference probing) the same operations run forward-only
and record nothing.

Scope is deliberately narrow: 0/1/2-D arrays, matmul, the elementwise ops the
recurrent and graph layers need, fused layer-norm and softmax cross-entropy.
No GPU, no double-backward, no general broadcasting.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import (
    ContractError,
    DegenerateSeriesError,
    DimensionError,
    LabelError,
    NonFiniteError,
)

__all__ = [
    "Tensor",
    "Tape",
    "add",
    "sub",
    "mul",
    "neg",
    "scale",
    "matmul",
    "sigmoid",
    "tanh",
    "leaky_relu",
    "layer_norm",
    "softmax",
    "softmax_cross_entropy",
    "sum_all",
    "mean_rows",
    "concat_rows",
    "row",
]

_TAPE_STACK: list["Tape"] = []


class Tape:
    """Ordered record of differentiable operations for one backward pass.

    Used as a context manager around a forward computation::

        with Tape() as tape:
            loss, probs = softmax_cross_entropy(logits, labels)
        tape.backward(loss)

    A tape can be consumed exactly once; a second ``backward`` raises.
    """

    def __init__(self) -> None:
        self._backward_fns: list[Callable[[], None]] = []
        self._consumed = False

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPE_STACK.pop()

    def __len__(self) -> int:
        return len(self._backward_fns)

    def record(self, backward_fn: Callable[[], None]) -> None:
        self._backward_fns.append(backward_fn)

    def backward(self, loss: "Tensor") -> None:
        """Seed ``loss`` with gradient 1 and propagate through the tape.

        Tensors that did not contribute to ``loss`` keep their zero gradient.
        """
        if self._consumed:
            raise ContractError("tape already consumed by a previous backward pass")
        if loss.data.size != 1:
            raise DimensionError(
                f"backward root must be scalar, got shape {loss.data.shape}"
            )
        if not loss.requires_grad:
            raise ContractError("loss is not connected to any tensor requiring grad")
        self._consumed = True
        loss.grad += 1.0
        for fn in reversed(self._backward_fns):
            fn()


def _active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class Tensor:
    """Row-major float64 array with an optional same-shape gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False) -> None:
        arr = np.array(data, dtype=np.float64, copy=True)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("tensor values must be finite")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(arr) if self.requires_grad else None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0.0)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    # Operator sugar; the module-level functions do the real work.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make_output(data: np.ndarray, *parents: Tensor) -> tuple[Tensor, Tape | None]:
    """Wrap an op result; grad tracking only under an active tape."""
    tape = _active_tape()
    needs_grad = tape is not None and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs_grad)
    return out, (tape if needs_grad else None)


def add(a, b) -> Tensor:
    """Elementwise sum; also accepts a row-vector or scalar second operand."""
    a, b = _as_tensor(a), _as_tensor(b)
    bias_like = b.data.shape != a.data.shape
    if bias_like and not _row_broadcastable(a.data.shape, b.data.shape):
        raise DimensionError(f"cannot add shapes {a.data.shape} and {b.data.shape}")
    out, tape = _make_output(a.data + b.data, a, b)
    if tape is not None:

        def backward() -> None:
            if a.requires_grad:
                a.grad += out.grad
            if b.requires_grad:
                b.grad += _reduce_to(out.grad, b.data.shape)

        tape.record(backward)
    return out


def sub(a, b) -> Tensor:
    return add(a, neg(_as_tensor(b)))


def neg(a) -> Tensor:
    a = _as_tensor(a)
    out, tape = _make_output(-a.data, a)
    if tape is not None:

        def backward() -> None:
            a.grad -= out.grad

        tape.record(backward)
    return out


def mul(a, b) -> Tensor:
    """Elementwise product of equal shapes, or tensor times python scalar."""
    a = _as_tensor(a)
    if isinstance(b, (int, float)):
        return scale(a, float(b))
    b = _as_tensor(b)
    if a.data.shape != b.data.shape:
        raise DimensionError(f"cannot multiply shapes {a.data.shape} and {b.data.shape}")
    out, tape = _make_output(a.data * b.data, a, b)
    if tape is not None:

        def backward() -> None:
            if a.requires_grad:
                a.grad += out.grad * b.data
            if b.requires_grad:
                b.grad += out.grad * a.data

        tape.record(backward)
    return out


def scale(a, c: float) -> Tensor:
    a = _as_tensor(a)
    c = float(c)
    out, tape = _make_output(a.data * c, a)
    if tape is not None:

        def backward() -> None:
            a.grad += out.grad * c

        tape.record(backward)
    return out


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError("matmul expects 2-D operands")
    if a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(
            f"inner dimensions disagree: {a.data.shape} x {b.data.shape}"
        )
    out, tape = _make_output(a.data @ b.data, a, b)
    if tape is not None:

        def backward() -> None:
            if a.requires_grad:
                a.grad += out.grad @ b.data.T
            if b.requires_grad:
                b.grad += a.data.T @ out.grad

        tape.record(backward)
    return out


def sigmoid(x) -> Tensor:
    x = _as_tensor(x)
    v = x.data
    y = np.where(v >= 0, 1.0 / (1.0 + np.exp(-np.abs(v))), np.exp(-np.abs(v)) / (1.0 + np.exp(-np.abs(v))))
    out, tape = _make_output(y, x)
    if tape is not None:
        y_saved = out.data

        def backward() -> None:
            x.grad += out.grad * y_saved * (1.0 - y_saved)

        tape.record(backward)
    return out


def tanh(x) -> Tensor:
    x = _as_tensor(x)
    out, tape = _make_output(np.tanh(x.data), x)
    if tape is not None:
        y_saved = out.data

        def backward() -> None:
            x.grad += out.grad * (1.0 - y_saved * y_saved)

        tape.record(backward)
    return out


def leaky_relu(x, slope: float = 0.01) -> Tensor:
    """y = x for x >= 0 else slope * x; slope must lie in (0, 1)."""
    if not 0.0 < slope < 1.0:
        raise ContractError(f"leaky_relu slope must be in (0, 1), got {slope}")
    x = _as_tensor(x)
    mask = x.data >= 0
    out, tape = _make_output(np.where(mask, x.data, slope * x.data), x)
    if tape is not None:

        def backward() -> None:
            x.grad += out.grad * np.where(mask, 1.0, slope)

        tape.record(backward)
    return out


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Row-wise normalization to zero mean / unit variance, then affine.

    ``x`` is (rows, d) with d >= 2; ``gamma`` and ``beta`` have d entries.
    The backward pass applies the full per-row Jacobian.
    """
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    if x.data.ndim != 2:
        raise DimensionError("layer_norm expects a 2-D input")
    d = x.data.shape[1]
    if d < 2:
        raise DegenerateSeriesError(f"layer_norm needs at least 2 features, got {d}")
    if eps <= 0:
        raise ContractError("layer_norm eps must be positive")
    if gamma.data.reshape(-1).shape[0] != d or beta.data.reshape(-1).shape[0] != d:
        raise DimensionError("gamma/beta length must match the feature dimension")
    g = gamma.data.reshape(1, d)
    mu = x.data.mean(axis=1, keepdims=True)
    var = x.data.var(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x.data - mu) * inv_std
    out, tape = _make_output(x_hat * g + beta.data.reshape(1, d), x, gamma, beta)
    if tape is not None:

        def backward() -> None:
            gy = out.grad
            if gamma.requires_grad:
                gamma.grad += (gy * x_hat).sum(axis=0).reshape(gamma.data.shape)
            if beta.requires_grad:
                beta.grad += gy.sum(axis=0).reshape(beta.data.shape)
            if x.requires_grad:
                dxhat = gy * g
                m1 = dxhat.mean(axis=1, keepdims=True)
                m2 = (dxhat * x_hat).mean(axis=1, keepdims=True)
                x.grad += inv_std * (dxhat - m1 - x_hat * m2)

        tape.record(backward)
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stabilized row softmax of a plain array."""
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, labels) -> tuple[Tensor, Tensor]:
    """Mean negative log-likelihood of binary labels under row softmax.

    Returns ``(loss, probs)`` where ``loss`` is a scalar on the tape and
    ``probs`` is a detached (B, 2) tensor of class probabilities.
    """
    logits = _as_tensor(logits)
    if logits.data.ndim != 2 or logits.data.shape[1] != 2:
        raise DimensionError("logits must have shape (B, 2)")
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if y.shape[0] != logits.data.shape[0]:
        raise DimensionError("labels length must match the batch size")
    if np.any((y != 0) & (y != 1)):
        raise LabelError("labels must be 0 or 1")
    batch = logits.data.shape[0]
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    log_probs = z - log_norm[:, None]
    loss_value = -log_probs[np.arange(batch), y].mean()
    probs = np.exp(log_probs)
    out, tape = _make_output(np.float64(loss_value), logits)
    if tape is not None:

        def backward() -> None:
            g = probs.copy()
            g[np.arange(batch), y] -= 1.0
            logits.grad += out.grad * g / batch

        tape.record(backward)
    return out, Tensor(probs)


def sum_all(x) -> Tensor:
    x = _as_tensor(x)
    out, tape = _make_output(np.float64(x.data.sum()), x)
    if tape is not None:

        def backward() -> None:
            x.grad += out.grad

        tape.record(backward)
    return out


def mean_rows(x) -> Tensor:
    """Mean over axis 0, keeping a (1, d) row; used for graph pooling."""
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise DimensionError("mean_rows expects a 2-D input")
    n = x.data.shape[0]
    out, tape = _make_output(x.data.mean(axis=0, keepdims=True), x)
    if tape is not None:

        def backward() -> None:
            x.grad += out.grad / n

        tape.record(backward)
    return out


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    """Stack 2-D tensors along axis 0."""
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise ContractError("concat_rows needs at least one part")
    for p in parts:
        if p.data.ndim != 2 or p.data.shape[1] != parts[0].data.shape[1]:
            raise DimensionError("concat_rows parts must be 2-D with equal width")
    out, tape = _make_output(np.concatenate([p.data for p in parts], axis=0), *parts)
    if tape is not None:
        sizes = [p.data.shape[0] for p in parts]

        def backward() -> None:
            offset = 0
            for p, n in zip(parts, sizes):
                if p.requires_grad:
                    p.grad += out.grad[offset : offset + n]
                offset += n

        tape.record(backward)
    return out


def row(x, i: int) -> Tensor:
    """Extract row ``i`` of a 2-D tensor as a (1, d) tensor."""
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise DimensionError("row expects a 2-D input")
    if not 0 <= i < x.data.shape[0]:
        raise DimensionError(f"row index {i} out of range for {x.data.shape}")
    out, tape = _make_output(x.data[i : i + 1], x)
    if tape is not None:

        def backward() -> None:
            x.grad[i : i + 1] += out.grad

        tape.record(backward)
    return out


def _row_broadcastable(a_shape: tuple[int, ...], b_shape: tuple[int, ...]) -> bool:
    if b_shape == ():
        return True
    if len(a_shape) == 2 and b_shape in ((1, a_shape[1]), (a_shape[1],)):
        return True
    return False


def _reduce_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if shape == ():
        return grad.sum()
    return grad.sum(axis=0).reshape(shape)
