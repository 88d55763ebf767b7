"""Minimal reverse-mode autodiff over dense and CSR-sparse 2-D arrays.

A Tape records each primitive in execution order; backward replays the
records in exact reverse, accumulating gradients into every tensor that
requires them. Passing ``tape=None`` runs any primitive forward-only
(inference and finite-difference evaluation).

Segment primitives operate on edge-major value arrays grouped by a CSR
``indptr``; they are what the message-passing layers are built from.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels


class NumcoreError(ValueError):
    pass


class Tensor:
    """A 0/1/2-D float64 value with an optional gradient accumulator."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        # ascontiguousarray would promote 0-d scalars to 1-d; keep them 0-d
        data = np.asarray(data, dtype=np.float64)
        self.data = data if data.ndim == 0 else np.ascontiguousarray(data)
        if self.data.ndim > 2:
            raise NumcoreError("tensors are at most 2-D")
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self):
        return self.data.shape

    def ensure_grad(self) -> np.ndarray:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        return self.grad

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


class Tape:
    """Ordered record of primitive applications with their backward rules."""

    def __init__(self):
        self._records: list[tuple[Tensor, Callable]] = []
        self._used = False

    def add(self, out: Tensor, backward: Callable) -> None:
        self._records.append((out, backward))

    def backward(self, loss: Tensor) -> None:
        if self._used:
            raise NumcoreError("backward already ran on this tape; call reset() first")
        if loss.data.ndim != 0:
            raise NumcoreError("backward requires a scalar loss tensor")
        self._used = True
        loss.grad = np.ones(())
        for out, bwd in reversed(self._records):
            if out.grad is not None:
                bwd(out.grad)

    def reset(self) -> None:
        self._records.clear()
        self._used = False


@dataclass(frozen=True)
class SparseMatrix:
    """Constant CSR operand for message passing (not differentiated)."""

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    shape: tuple
    _transpose_cache: list = field(default_factory=list, compare=False, repr=False)

    def __post_init__(self):
        n_rows, n_cols = self.shape
        if self.indptr.shape != (n_rows + 1,) or self.indptr[0] != 0 or self.indptr[-1] != self.indices.size:
            raise NumcoreError("malformed CSR offsets")
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= n_cols):
            raise NumcoreError("CSR column index out of bounds")
        for i in range(n_rows):
            seg = self.indices[self.indptr[i] : self.indptr[i + 1]]
            if seg.size > 1 and np.any(np.diff(seg) <= 0):
                raise NumcoreError(f"CSR row {i} indices not strictly sorted")

    def transpose(self) -> "SparseMatrix":
        if not self._transpose_cache:
            tp, ti, tw = kernels.csr_transpose(self.indptr, self.indices, self.data, self.shape[1])
            self._transpose_cache.append(
                SparseMatrix(indptr=tp, indices=ti, data=tw, shape=(self.shape[1], self.shape[0]))
            )
        return self._transpose_cache[0]

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        for i in range(self.shape[0]):
            lo, hi = self.indptr[i], self.indptr[i + 1]
            out[i, self.indices[lo:hi]] = self.data[lo:hi]
        return out


def _result(tape: Optional[Tape], data, inputs: Sequence[Tensor], backward: Callable) -> Tensor:
    track = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=track)
    if track:
        tape.add(out, backward)
    return out


# ---------------------------------------------------------------------------
# dense primitives
# ---------------------------------------------------------------------------

def matmul(tape, a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise NumcoreError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    def backward(g):
        if a.requires_grad:
            a.ensure_grad()
            a.grad += g @ b.data.T
        if b.requires_grad:
            b.ensure_grad()
            b.grad += a.data.T @ g
    return _result(tape, a.data @ b.data, (a, b), backward)


def add(tape, a: Tensor, b: Tensor) -> Tensor:
    bias = b.data.ndim == 1
    if not bias and a.data.shape != b.data.shape:
        raise NumcoreError(f"add shape mismatch: {a.shape} + {b.shape}")
    if bias and (a.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]):
        raise NumcoreError(f"bias add shape mismatch: {a.shape} + {b.shape}")
    def backward(g):
        if a.requires_grad:
            a.ensure_grad()
            a.grad += g
        if b.requires_grad:
            b.ensure_grad()
            b.grad += g.sum(axis=0) if bias else g
    return _result(tape, a.data + b.data, (a, b), backward)


def mul(tape, a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; ``b`` may be a column (E,1) broadcast over a (E,d)."""
    col = b.data.ndim == 2 and b.data.shape[1] == 1 and a.data.shape[1] != 1
    if not col and a.data.shape != b.data.shape:
        raise NumcoreError(f"mul shape mismatch: {a.shape} * {b.shape}")
    def backward(g):
        if a.requires_grad:
            a.ensure_grad()
            a.grad += g * b.data
        if b.requires_grad:
            b.ensure_grad()
            b.grad += (g * a.data).sum(axis=1, keepdims=True) if col else g * a.data
    return _result(tape, a.data * b.data, (a, b), backward)


def scale(tape, a: Tensor, c: float) -> Tensor:
    def backward(g):
        if a.requires_grad:
            a.ensure_grad()
            a.grad += g * c
    return _result(tape, a.data * c, (a,), backward)


def relu(tape, a: Tensor) -> Tensor:
    mask = a.data > 0.0
    def backward(g):
        if a.requires_grad:
            a.ensure_grad()
            a.grad += g * mask
    return _result(tape, np.where(mask, a.data, 0.0), (a,), backward)


def leaky_relu(tape, a: Tensor, slope: float = 0.2) -> Tensor:
    mask = a.data > 0.0
    def backward(g):
        if a.requires_grad:
            a.ensure_grad()
            a.grad += g * np.where(mask, 1.0, slope)
    return _result(tape, np.where(mask, a.data, slope * a.data), (a,), backward)


def elu(tape, a: Tensor, alpha: float = 1.0) -> Tensor:
    mask = a.data > 0.0
    neg = alpha * (np.exp(np.minimum(a.data, 0.0)) - 1.0)
    out = np.where(mask, a.data, neg)
    def backward(g):
        if a.requires_grad:
            a.ensure_grad()
            a.grad += g * np.where(mask, 1.0, neg + alpha)
    return _result(tape, out, (a,), backward)


def softmax_rows(tape, a: Tensor) -> Tensor:
    z = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=1, keepdims=True)
    def backward(g):
        if a.requires_grad:
            a.ensure_grad()
            a.grad += s * (g - (g * s).sum(axis=1, keepdims=True))
    return _result(tape, s, (a,), backward)


def concat_cols(tape, parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise NumcoreError("concat_cols needs at least one tensor")
    rows = parts[0].data.shape[0]
    if any(p.data.ndim != 2 or p.data.shape[0] != rows for p in parts):
        raise NumcoreError("concat_cols requires 2-D tensors with equal row counts")
    widths = [p.data.shape[1] for p in parts]
    bounds = np.cumsum([0] + widths)
    def backward(g):
        for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
            if p.requires_grad:
                p.ensure_grad()
                p.grad += g[:, lo:hi]
    return _result(tape, np.concatenate([p.data for p in parts], axis=1), tuple(parts), backward)


def rowwise_max(tape, a: Tensor) -> Tensor:
    if a.data.ndim != 2 or a.data.shape[1] == 0:
        raise NumcoreError("rowwise_max needs a 2-D tensor with at least one column")
    arg = a.data.argmax(axis=1)  # first index on ties
    out = a.data[np.arange(a.data.shape[0]), arg][:, None]
    def backward(g):
        if a.requires_grad:
            a.ensure_grad()
            a.grad[np.arange(a.data.shape[0]), arg] += g[:, 0]
    return _result(tape, out, (a,), backward)


def rowwise_mean(tape, a: Tensor) -> Tensor:
    if a.data.ndim != 2 or a.data.shape[1] == 0:
        raise NumcoreError("rowwise_mean needs a 2-D tensor with at least one column")
    d = a.data.shape[1]
    def backward(g):
        if a.requires_grad:
            a.ensure_grad()
            a.grad += g / d
    return _result(tape, a.data.mean(axis=1, keepdims=True), (a,), backward)


def reshape(tape, a: Tensor, shape) -> Tensor:
    def backward(g):
        if a.requires_grad:
            a.ensure_grad()
            a.grad += g.reshape(a.data.shape)
    return _result(tape, a.data.reshape(shape), (a,), backward)


def cross_entropy(tape, logits: Tensor, labels) -> Tensor:
    """Mean softmax cross-entropy of integer labels against logit rows."""
    y = np.asarray(labels, dtype=np.int64)
    if logits.data.ndim != 2 or y.shape != (logits.data.shape[0],):
        raise NumcoreError("cross_entropy expects (N,C) logits and (N,) labels")
    if y.size == 0:
        raise NumcoreError("cross_entropy over an empty batch")
    if y.min() < 0 or y.max() >= logits.data.shape[1]:
        raise NumcoreError("label outside logit range")
    z = logits.data
    m = z.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(z - m).sum(axis=1))
    loss = float(np.mean(lse - z[np.arange(y.size), y]))
    def backward(g):
        if logits.requires_grad:
            logits.ensure_grad()
            soft = np.exp(z - lse[:, None])
            soft[np.arange(y.size), y] -= 1.0
            logits.grad += float(g) * soft / y.size
    return _result(tape, loss, (logits,), backward)


# ---------------------------------------------------------------------------
# sparse / segment primitives
# ---------------------------------------------------------------------------

def sparse_dense_matmul(tape, sp: SparseMatrix, x: Tensor) -> Tensor:
    if x.data.ndim != 2 or x.data.shape[0] != sp.shape[1]:
        raise NumcoreError(f"sparse_dense_matmul shape mismatch: {sp.shape} @ {x.shape}")
    def backward(g):
        if x.requires_grad:
            x.ensure_grad()
            t = sp.transpose()
            x.grad += kernels.spmm(t.indptr, t.indices, t.data, g)
    return _result(tape, kernels.spmm(sp.indptr, sp.indices, sp.data, x.data), (x,), backward)


def gather_rows(tape, x: Tensor, idx) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)
    def backward(g):
        if x.requires_grad:
            kernels.scatter_add_rows(x.ensure_grad(), idx, g)
    return _result(tape, x.data[idx], (x,), backward)


def segment_sum(tape, x: Tensor, indptr) -> Tensor:
    def backward(g):
        if x.requires_grad:
            x.ensure_grad()
            x.grad += kernels.expand_segments(g, indptr)
    return _result(tape, kernels.segment_sum(x.data, indptr), (x,), backward)


def segment_mean(tape, x: Tensor, indptr) -> Tensor:
    counts = np.diff(indptr).astype(np.float64)
    def backward(g):
        if x.requires_grad:
            x.ensure_grad()
            safe = np.where(counts > 0, counts, 1.0)
            x.grad += kernels.expand_segments(g / safe[:, None], indptr)
    return _result(tape, kernels.segment_mean(x.data, indptr), (x,), backward)


def segment_max(tape, x: Tensor, indptr) -> Tensor:
    """Columnwise max within segments; empty segments produce zero rows."""
    out, arg = kernels.segment_max(x.data, indptr)
    def backward(g):
        if x.requires_grad:
            x.ensure_grad()
            x.grad += kernels.segment_max_backward(g, arg, x.data.shape[0])
    return _result(tape, out, (x,), backward)


def segment_softmax(tape, scores: Tensor, indptr) -> Tensor:
    """Softmax within segments; 1-D scores or 2-D applied per column."""
    alpha = kernels.segment_softmax(scores.data, indptr)
    one_d = scores.data.ndim == 1
    def backward(g):
        if scores.requires_grad:
            scores.ensure_grad()
            ga = (g * alpha)[:, None] if one_d else g * alpha
            seg_dot = kernels.segment_sum(ga, indptr)
            expanded = kernels.expand_segments(seg_dot, indptr)
            scores.grad += alpha * (g - (expanded[:, 0] if one_d else expanded))
    return _result(tape, alpha, (scores,), backward)


def neighbor_mean(tape, x: Tensor, src, indptr) -> Tensor:
    """Per-segment mean of x rows addressed by src (fused gather+mean)."""
    def backward(g):
        if x.requires_grad:
            x.ensure_grad()
            x.grad += kernels.neighbor_mean_backward(g, src, indptr, x.data.shape[0])
    return _result(tape, kernels.neighbor_mean(x.data, src, indptr), (x,), backward)


def neighbor_max(tape, x: Tensor, src, indptr) -> Tensor:
    """Per-segment columnwise max of x rows addressed by src; empty -> 0."""
    out, arg = kernels.neighbor_max(x.data, src, indptr)
    def backward(g):
        if x.requires_grad:
            x.ensure_grad()
            x.grad += kernels.neighbor_max_backward(g, arg, x.data.shape[0])
    return _result(tape, out, (x,), backward)


def gat_attention(tape, left: Tensor, right: Tensor, att: Tensor, indptr, src, dst, slope: float = 0.2) -> Tensor:
    """Fused GATv2 neighborhood attention.

    Edge scores ``att_h . leaky_relu(left[i] + right[j])`` are softmaxed per
    destination segment and used to weight-sum ``right[j]``; heads live side
    by side in the H*d column layout.
    """
    h, d = att.data.shape
    if left.data.shape != right.data.shape or left.data.shape[1] != h * d:
        raise NumcoreError("gat_attention shape mismatch")
    alpha, out = kernels.gat_forward(left.data, right.data, att.data, indptr, src, dst, slope)
    def backward(g):
        dleft, dright, datt = kernels.gat_backward(
            g, left.data, right.data, att.data, alpha, indptr, src, dst, slope
        )
        if left.requires_grad:
            left.ensure_grad()
            left.grad += dleft
        if right.requires_grad:
            right.ensure_grad()
            right.grad += dright
        if att.requires_grad:
            att.ensure_grad()
            att.grad += datt
    return _result(tape, out, (left, right, att), backward)


# ---------------------------------------------------------------------------
# gradient checking and optimization
# ---------------------------------------------------------------------------

def grad_check(f, arrays: Sequence[np.ndarray], eps: float = 1e-5) -> float:
    """Max relative error between tape gradients and central differences.

    ``f(tape, *tensors)`` must return a scalar Tensor and be deterministic.
    """
    if eps <= 0:
        raise NumcoreError("eps must be positive")
    tensors = [parameter(np.array(a, dtype=np.float64)) for a in arrays]
    tape = Tape()
    loss = f(tape, *tensors)
    tape.backward(loss)
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]
    worst = 0.0
    for t, grad in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = float(f(None, *tensors).data)
            flat[i] = orig - eps
            fm = float(f(None, *tensors).data)
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * eps)
            rel = abs(gflat[i] - numeric) / max(1.0, abs(gflat[i]), abs(numeric))
            worst = max(worst, rel)
    return worst


@dataclass
class AdamState:
    step: int
    m: list
    v: list

    @classmethod
    def init(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls(step=0, m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])


def adam_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: AdamState,
    lr: float = 0.01,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """One bias-corrected Adam update, applied to the params in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise NumcoreError("adam_step requires aligned params/grads/state")
    state.step += 1
    c1 = 1.0 - beta1 ** state.step
    c2 = 1.0 - beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise NumcoreError("gradient shape mismatch in adam_step")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state
