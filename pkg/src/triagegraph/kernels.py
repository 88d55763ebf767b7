"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

Backend selection: the ``TRIAGEGRAPH_BACKEND`` environment variable may be
``auto`` (default: numba when importable), ``numba`` or ``numpy``. Tests and
the benchmark switch backends in-process via :func:`use_backend`.

All kernels are deterministic within one backend; the two backends agree to
floating-point roundoff (summation order may differ in the numpy path).

Metric ids: 0 = cosine similarity, 1 = Euclidean, 2 = Manhattan.
"""
from __future__ import annotations

import contextlib
import os
import warnings

import numpy as np

COSINE = 0
EUCLIDEAN = 1
MANHATTAN = 2

# Row-chunk size for the blocked numpy fallbacks; bounds temp memory.
_CHUNK = 256


# ---------------------------------------------------------------------------
# pure-numpy implementations
# ---------------------------------------------------------------------------

def _norms_np(X):
    return np.sqrt(np.einsum("ij,ij->i", X, X))


def _metric_block_np(Xb, X, metric, norms_b, norms):
    """Metric values between each row of block Xb and each row of X."""
    if metric == COSINE:
        vals = (Xb @ X.T) / np.outer(norms_b, norms)
        np.minimum(vals, 1.0, out=vals)
        return vals
    if metric == EUCLIDEAN:
        sq = norms_b[:, None] ** 2 + norms[None, :] ** 2 - 2.0 * (Xb @ X.T)
        np.maximum(sq, 0.0, out=sq)
        return np.sqrt(sq)
    # Manhattan has no matmul identity; broadcast in small slabs.
    out = np.empty((Xb.shape[0], X.shape[0]))
    for s in range(0, Xb.shape[0], 32):
        out[s : s + 32] = np.abs(Xb[s : s + 32, None, :] - X[None, :, :]).sum(axis=2)
    return out


def _pairwise_mean_np(X, metric):
    n = X.shape[0]
    norms = _norms_np(X)
    total = 0.0
    for s in range(0, n, _CHUNK):
        b = slice(s, min(s + _CHUNK, n))
        vals = _metric_block_np(X[b], X, metric, norms[b], norms)
        # keep only j > i of each row to count unordered pairs once
        cols = np.arange(n)[None, :]
        rows = np.arange(s, b.stop)[:, None]
        total += vals[cols > rows].sum()
    return total / (n * (n - 1) / 2.0)


def _metric_row_np(X, x, metric):
    norms = _norms_np(X)
    nx = float(np.sqrt(np.dot(x, x)))
    return _metric_block_np(x[None, :], X, metric, np.array([nx]), norms)[0]


def _clears(vals, metric, tau):
    return vals > tau if metric == COSINE else vals < tau


def _build_adjacency_np(X, metric, tau):
    n = X.shape[0]
    norms = _norms_np(X)
    idx_chunks = []
    w_chunks = []
    counts = np.zeros(n, dtype=np.int64)
    for s in range(0, n, _CHUNK):
        b = slice(s, min(s + _CHUNK, n))
        vals = _metric_block_np(X[b], X, metric, norms[b], norms)
        keep = _clears(vals, metric, tau)
        keep[np.arange(b.stop - s), np.arange(s, b.stop)] = False
        ri, ci = np.nonzero(keep)
        counts[s : b.stop] = keep.sum(axis=1)
        idx_chunks.append(ci.astype(np.int64))
        w_chunks.append(vals[ri, ci])
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    indices = np.concatenate(idx_chunks) if idx_chunks else np.empty(0, np.int64)
    weights = np.concatenate(w_chunks) if w_chunks else np.empty(0)
    return indptr, indices, weights


def _spmm_np(indptr, indices, data, B):
    n = indptr.size - 1
    out = np.zeros((n, B.shape[1]))
    if indices.size == 0:
        return out
    # process row blocks so the gathered temp stays bounded
    row = 0
    while row < n:
        end = row
        while end < n and indptr[end + 1] - indptr[row] <= 1 << 19:
            end += 1
        end = max(end, row + 1)
        lo, hi = indptr[row], indptr[end]
        if hi > lo:
            gathered = data[lo:hi, None] * B[indices[lo:hi]]
            starts = np.minimum(indptr[row:end] - lo, hi - lo - 1)
            red = np.add.reduceat(gathered, starts, axis=0)
            red[indptr[row + 1 : end + 1] == indptr[row:end]] = 0.0
            out[row:end] = red
        row = end
    return out


def _csr_transpose_np(indptr, indices, data, n_cols):
    n = indptr.size - 1
    order = np.argsort(indices, kind="stable")
    rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(indptr))
    indptr_t = np.zeros(n_cols + 1, dtype=np.int64)
    np.cumsum(np.bincount(indices, minlength=n_cols), out=indptr_t[1:])
    return indptr_t, rows[order], data[order]


def _segment_sum_np(values, indptr):
    e = values.shape[0]
    n = indptr.size - 1
    out = np.zeros((n,) + values.shape[1:], dtype=values.dtype)
    if e == 0 or n == 0:
        return out
    starts = np.minimum(indptr[:-1], e - 1)
    red = np.add.reduceat(values, starts, axis=0)
    red[indptr[1:] == indptr[:-1]] = 0
    out[:] = red
    return out


def _segment_mean_np(values, indptr):
    counts = np.diff(indptr).astype(np.float64)
    out = _segment_sum_np(values, indptr)
    nz = counts > 0
    out[nz] /= counts[nz][:, None] if out.ndim == 2 else counts[nz]
    return out


def _segment_max_np(values, indptr):
    n = indptr.size - 1
    d = values.shape[1]
    out = np.zeros((n, d))
    arg = np.full((n, d), -1, dtype=np.int64)
    for s in range(n):
        lo, hi = indptr[s], indptr[s + 1]
        if hi > lo:
            seg = values[lo:hi]
            a = seg.argmax(axis=0)
            out[s] = seg[a, np.arange(d)]
            arg[s] = lo + a
    return out, arg


def _segment_max_backward_np(grad, arg, n_edges):
    d = grad.shape[1]
    out = np.zeros((n_edges, d))
    for c in range(d):
        valid = arg[:, c] >= 0
        out[arg[valid, c], c] = grad[valid, c]
    return out


def _expand_segments_np(values, indptr):
    return np.repeat(values, np.diff(indptr), axis=0)


def _segment_softmax_np(scores, indptr):
    counts = np.diff(indptr)
    e = scores.shape[0]
    if e == 0:
        return scores.copy()
    starts = np.minimum(indptr[:-1], e - 1)
    seg_max = np.maximum.reduceat(scores, starts, axis=0)
    ex = np.exp(scores - np.repeat(seg_max, counts, axis=0))
    seg_sum = np.add.reduceat(ex, starts, axis=0)
    return ex / np.repeat(seg_sum, counts, axis=0)


def _scatter_add_rows_np(out, idx, values):
    np.add.at(out, idx, values)
    return out


def _neighbor_mean_np(values, src, indptr):
    return _segment_mean_np(values[src], indptr)


def _neighbor_mean_backward_np(g, src, indptr, n_values):
    counts = np.diff(indptr).astype(np.float64)
    safe = np.where(counts > 0, counts, 1.0)
    per_edge = _expand_segments_np(g / safe[:, None], indptr)
    out = np.zeros((n_values, g.shape[1]))
    np.add.at(out, src, per_edge)
    return out


def _neighbor_max_np(values, src, indptr):
    out, arg_edge = _segment_max_np(values[src], indptr)
    arg = np.where(arg_edge >= 0, src[np.maximum(arg_edge, 0)], -1)
    return out, arg


def _neighbor_max_backward_np(g, arg, n_values):
    out = np.zeros((n_values, g.shape[1]))
    for c in range(g.shape[1]):
        valid = arg[:, c] >= 0
        np.add.at(out[:, c], arg[valid, c], g[valid, c])
    return out


def _gat_forward_np(left, right, att, indptr, src, dst, slope):
    h, d = att.shape
    pre = left[dst] + right[src]
    z = np.where(pre > 0.0, pre, slope * pre)
    scores = np.einsum("ehd,hd->eh", z.reshape(-1, h, d), att)
    alpha = _segment_softmax_np(scores, indptr)
    weighted = right[src] * np.repeat(alpha, d, axis=1)
    return alpha, _segment_sum_np(weighted, indptr)


def _gat_backward_np(g, left, right, att, alpha, indptr, src, dst, slope):
    h, d = att.shape
    g_e = g[dst]
    r_e = right[src]
    dalpha = (g_e * r_e).reshape(-1, h, d).sum(axis=2)
    seg_dot = _segment_sum_np(alpha * dalpha, indptr)
    ds = alpha * (dalpha - _expand_segments_np(seg_dot, indptr))
    pre = left[dst] + r_e
    z = np.where(pre > 0.0, pre, slope * pre)
    datt = np.einsum("ehd,eh->hd", z.reshape(-1, h, d), ds)
    dz = np.einsum("eh,hd->ehd", ds, att).reshape(-1, h * d)
    dpre = np.where(pre > 0.0, dz, slope * dz)
    dleft = np.zeros_like(left)
    dright = np.zeros_like(right)
    np.add.at(dleft, dst, dpre)
    np.add.at(dright, src, dpre + np.repeat(alpha, d, axis=1) * g_e)
    return dleft, dright, datt


def _knn_indices_np(X, k):
    n = X.shape[0]
    norms2 = np.einsum("ij,ij->i", X, X)
    out = np.empty((n, k), dtype=np.int64)
    for s in range(0, n, _CHUNK):
        b = slice(s, min(s + _CHUNK, n))
        d2 = norms2[b, None] + norms2[None, :] - 2.0 * (X[b] @ X.T)
        np.maximum(d2, 0.0, out=d2)
        d2[np.arange(b.stop - s), np.arange(s, b.stop)] = np.inf
        order = np.argsort(d2, axis=1, kind="stable")
        out[b] = order[:, :k]
    return out


def _knn_query_np(Xtr, Q, k):
    m = Q.shape[0]
    ntr2 = np.einsum("ij,ij->i", Xtr, Xtr)
    idx = np.empty((m, k), dtype=np.int64)
    d2s = np.empty((m, k))
    for s in range(0, m, _CHUNK):
        b = slice(s, min(s + _CHUNK, m))
        q2 = np.einsum("ij,ij->i", Q[b], Q[b])
        d2 = q2[:, None] + ntr2[None, :] - 2.0 * (Q[b] @ Xtr.T)
        np.maximum(d2, 0.0, out=d2)
        order = np.argsort(d2, axis=1, kind="stable")[:, :k]
        idx[b] = order
        d2s[b] = np.take_along_axis(d2, order, axis=1)
    return idx, d2s


_NUMPY_IMPL = {
    "pairwise_mean": _pairwise_mean_np,
    "metric_row": _metric_row_np,
    "build_adjacency": _build_adjacency_np,
    "spmm": _spmm_np,
    "csr_transpose": _csr_transpose_np,
    "segment_sum": _segment_sum_np,
    "segment_mean": _segment_mean_np,
    "segment_max": _segment_max_np,
    "segment_max_backward": _segment_max_backward_np,
    "expand_segments": _expand_segments_np,
    "segment_softmax": _segment_softmax_np,
    "scatter_add_rows": _scatter_add_rows_np,
    "neighbor_mean": _neighbor_mean_np,
    "neighbor_mean_backward": _neighbor_mean_backward_np,
    "neighbor_max": _neighbor_max_np,
    "neighbor_max_backward": _neighbor_max_backward_np,
    "gat_forward": _gat_forward_np,
    "gat_backward": _gat_backward_np,
    "knn_indices": _knn_indices_np,
    "knn_query": _knn_query_np,
}


# ---------------------------------------------------------------------------
# backend selection
# ---------------------------------------------------------------------------

_NUMBA_IMPL = None
try:  # numba is optional at runtime; the numpy path is always available
    from . import _kernels_numba as _nb

    _NUMBA_IMPL = {name: getattr(_nb, name) for name in _NUMPY_IMPL}
    _NUMBA_IMPL["segment_softmax2d"] = _nb.segment_softmax2d
except Exception as exc:  # pragma: no cover - exercised only without numba
    _NUMBA_IMPORT_ERROR = exc


def _initial_backend():
    requested = os.environ.get("TRIAGEGRAPH_BACKEND", "auto").lower()
    if requested not in ("auto", "numba", "numpy"):
        raise ValueError(f"TRIAGEGRAPH_BACKEND must be auto|numba|numpy, got {requested!r}")
    if requested == "numpy":
        return "numpy"
    if _NUMBA_IMPL is None:
        if requested == "numba":
            warnings.warn("numba backend requested but unavailable; using numpy fallback")
        return "numpy"
    return "numba"


_ACTIVE = _initial_backend()


def active_backend() -> str:
    return _ACTIVE


def available_backends() -> tuple:
    return ("numpy", "numba") if _NUMBA_IMPL is not None else ("numpy",)


@contextlib.contextmanager
def use_backend(name: str):
    """Temporarily switch the kernel backend (tests, benchmark)."""
    global _ACTIVE
    if name not in available_backends():
        raise ValueError(f"backend {name!r} not available; have {available_backends()}")
    prev = _ACTIVE
    _ACTIVE = name
    try:
        yield
    finally:
        _ACTIVE = prev


def _impl(name):
    table = _NUMBA_IMPL if _ACTIVE == "numba" else _NUMPY_IMPL
    return table[name]


# ---------------------------------------------------------------------------
# public kernel surface
# ---------------------------------------------------------------------------

def pairwise_mean(X, metric):
    """Mean metric value over all N(N-1)/2 unordered row pairs."""
    return float(_impl("pairwise_mean")(np.ascontiguousarray(X), metric))


def metric_row(X, x, metric):
    """Metric between vector ``x`` and every row of ``X``."""
    return _impl("metric_row")(np.ascontiguousarray(X), np.ascontiguousarray(x), metric)


def build_adjacency(X, metric, tau):
    """CSR adjacency of all ordered pairs strictly clearing the threshold."""
    return _impl("build_adjacency")(np.ascontiguousarray(X), metric, tau)


def spmm(indptr, indices, data, B):
    """CSR sparse matrix times dense matrix."""
    return _impl("spmm")(indptr, indices, data, np.ascontiguousarray(B))


def csr_transpose(indptr, indices, data, n_cols):
    return _impl("csr_transpose")(indptr, indices, data, n_cols)


def segment_sum(values, indptr):
    return _impl("segment_sum")(np.ascontiguousarray(values), indptr)


def segment_mean(values, indptr):
    return _impl("segment_mean")(np.ascontiguousarray(values), indptr)


def segment_max(values, indptr):
    """Per-segment columnwise max; empty segments yield 0 with arg -1."""
    return _impl("segment_max")(np.ascontiguousarray(values), indptr)


def segment_max_backward(grad, arg, n_edges):
    return _impl("segment_max_backward")(np.ascontiguousarray(grad), arg, n_edges)


def expand_segments(values, indptr):
    """Repeat each segment value over the segment's members."""
    return _impl("expand_segments")(np.ascontiguousarray(values), indptr)


def segment_softmax(scores, indptr):
    """Numerically stable softmax within each segment.

    Accepts 1-D scores or a 2-D array treated columnwise.
    """
    scores = np.ascontiguousarray(scores)
    if scores.ndim == 2 and _ACTIVE == "numba":
        return _NUMBA_IMPL["segment_softmax2d"](scores, indptr)
    return _impl("segment_softmax")(scores, indptr)


def scatter_add_rows(out, idx, values):
    """out[idx[e]] += values[e] for every e, in place."""
    return _impl("scatter_add_rows")(out, idx, np.ascontiguousarray(values))


def neighbor_mean(values, src, indptr):
    """Mean of values[src[e]] per segment without materializing edges."""
    return _impl("neighbor_mean")(np.ascontiguousarray(values), src, indptr)


def neighbor_mean_backward(g, src, indptr, n_values):
    return _impl("neighbor_mean_backward")(np.ascontiguousarray(g), src, indptr, n_values)


def neighbor_max(values, src, indptr):
    """Columnwise max of values[src[e]] per segment; arg holds source ids."""
    return _impl("neighbor_max")(np.ascontiguousarray(values), src, indptr)


def neighbor_max_backward(g, arg, n_values):
    return _impl("neighbor_max_backward")(np.ascontiguousarray(g), arg, n_values)


def gat_forward(left, right, att, indptr, src, dst, slope):
    """Fused attention pass; returns (alpha (E,H), aggregated (N,H*d))."""
    return _impl("gat_forward")(
        np.ascontiguousarray(left), np.ascontiguousarray(right), np.ascontiguousarray(att),
        indptr, src, dst, slope,
    )


def gat_backward(g, left, right, att, alpha, indptr, src, dst, slope):
    return _impl("gat_backward")(
        np.ascontiguousarray(g), np.ascontiguousarray(left), np.ascontiguousarray(right),
        np.ascontiguousarray(att), np.ascontiguousarray(alpha), indptr, src, dst, slope,
    )


def knn_indices(X, k):
    """Indices of the k nearest other rows per row (squared Euclidean).

    Ties break deterministically toward the lower row index.
    """
    return _impl("knn_indices")(np.ascontiguousarray(X), k)


def knn_query(Xtrain, Q, k):
    """k nearest training rows per query row, with squared distances."""
    return _impl("knn_query")(np.ascontiguousarray(Xtrain), np.ascontiguousarray(Q), k)
