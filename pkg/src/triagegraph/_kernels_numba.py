"""Numba-compiled twins of the kernels in :mod:`triagegraph.kernels`.

Loop nests mirror the numpy fallbacks but accumulate per pair in feature
order, which keeps insert-vs-rebuild adjacency construction bitwise
reproducible within this backend.
"""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _row_norms(X):
    n, d = X.shape
    out = np.empty(n)
    for i in range(n):
        s = 0.0
        for k in range(d):
            s += X[i, k] * X[i, k]
        out[i] = np.sqrt(s)
    return out


@njit(cache=True, inline="always")
def _pair_value(a, b, metric, na, nb):
    d = a.shape[0]
    if metric == 0:
        s = 0.0
        for k in range(d):
            s += a[k] * b[k]
        v = s / (na * nb)
        if v > 1.0:
            v = 1.0
        return v
    elif metric == 1:
        s = 0.0
        for k in range(d):
            t = a[k] - b[k]
            s += t * t
        return np.sqrt(s)
    else:
        s = 0.0
        for k in range(d):
            t = a[k] - b[k]
            if t < 0.0:
                t = -t
            s += t
        return s


@njit(cache=True)
def pairwise_mean(X, metric):
    n = X.shape[0]
    norms = _row_norms(X)
    total = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            total += _pair_value(X[i], X[j], metric, norms[i], norms[j])
    return total / (n * (n - 1) / 2.0)


@njit(cache=True)
def metric_row(X, x, metric):
    n = X.shape[0]
    norms = _row_norms(X)
    nx = 0.0
    for k in range(x.shape[0]):
        nx += x[k] * x[k]
    nx = np.sqrt(nx)
    out = np.empty(n)
    for i in range(n):
        out[i] = _pair_value(X[i], x, metric, norms[i], nx)
    return out


@njit(cache=True)
def build_adjacency(X, metric, tau):
    n = X.shape[0]
    norms = _row_norms(X)
    indptr = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        c = 0
        for j in range(n):
            if j == i:
                continue
            v = _pair_value(X[i], X[j], metric, norms[i], norms[j])
            if (metric == 0 and v > tau) or (metric != 0 and v < tau):
                c += 1
        indptr[i + 1] = indptr[i] + c
    e = indptr[n]
    indices = np.empty(e, dtype=np.int64)
    weights = np.empty(e)
    for i in range(n):
        p = indptr[i]
        for j in range(n):
            if j == i:
                continue
            v = _pair_value(X[i], X[j], metric, norms[i], norms[j])
            if (metric == 0 and v > tau) or (metric != 0 and v < tau):
                indices[p] = j
                weights[p] = v
                p += 1
    return indptr, indices, weights


@njit(cache=True)
def spmm(indptr, indices, data, B):
    n = indptr.size - 1
    d = B.shape[1]
    out = np.zeros((n, d))
    for i in range(n):
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            w = data[p]
            for c in range(d):
                out[i, c] += w * B[j, c]
    return out


@njit(cache=True)
def csr_transpose(indptr, indices, data, n_cols):
    n = indptr.size - 1
    e = indices.size
    counts = np.zeros(n_cols + 1, dtype=np.int64)
    for p in range(e):
        counts[indices[p] + 1] += 1
    indptr_t = np.zeros(n_cols + 1, dtype=np.int64)
    for c in range(n_cols):
        indptr_t[c + 1] = indptr_t[c] + counts[c + 1]
    fill = indptr_t.copy()
    indices_t = np.empty(e, dtype=np.int64)
    data_t = np.empty(e)
    for i in range(n):
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            q = fill[j]
            indices_t[q] = i
            data_t[q] = data[p]
            fill[j] = q + 1
    return indptr_t, indices_t, data_t


@njit(cache=True)
def segment_sum(values, indptr):
    n = indptr.size - 1
    d = values.shape[1]
    out = np.zeros((n, d))
    for s in range(n):
        for p in range(indptr[s], indptr[s + 1]):
            for c in range(d):
                out[s, c] += values[p, c]
    return out


@njit(cache=True)
def segment_mean(values, indptr):
    n = indptr.size - 1
    d = values.shape[1]
    out = np.zeros((n, d))
    for s in range(n):
        count = indptr[s + 1] - indptr[s]
        if count == 0:
            continue
        for p in range(indptr[s], indptr[s + 1]):
            for c in range(d):
                out[s, c] += values[p, c]
        for c in range(d):
            out[s, c] /= count
    return out


@njit(cache=True)
def segment_max(values, indptr):
    n = indptr.size - 1
    d = values.shape[1]
    out = np.zeros((n, d))
    arg = np.full((n, d), -1, dtype=np.int64)
    for s in range(n):
        lo, hi = indptr[s], indptr[s + 1]
        if hi == lo:
            continue
        for c in range(d):
            best = values[lo, c]
            bp = lo
            for p in range(lo + 1, hi):
                if values[p, c] > best:
                    best = values[p, c]
                    bp = p
            out[s, c] = best
            arg[s, c] = bp
    return out, arg


@njit(cache=True)
def segment_max_backward(grad, arg, n_edges):
    n, d = grad.shape
    out = np.zeros((n_edges, d))
    for s in range(n):
        for c in range(d):
            p = arg[s, c]
            if p >= 0:
                out[p, c] = grad[s, c]
    return out


@njit(cache=True)
def expand_segments(values, indptr):
    n = indptr.size - 1
    d = values.shape[1]
    out = np.empty((indptr[n], d))
    for s in range(n):
        for p in range(indptr[s], indptr[s + 1]):
            for c in range(d):
                out[p, c] = values[s, c]
    return out


@njit(cache=True)
def segment_softmax(scores, indptr):
    n = indptr.size - 1
    out = np.empty_like(scores)
    for s in range(n):
        lo, hi = indptr[s], indptr[s + 1]
        if hi == lo:
            continue
        m = scores[lo]
        for p in range(lo + 1, hi):
            if scores[p] > m:
                m = scores[p]
        total = 0.0
        for p in range(lo, hi):
            out[p] = np.exp(scores[p] - m)
            total += out[p]
        for p in range(lo, hi):
            out[p] /= total
    return out


@njit(cache=True)
def segment_softmax2d(scores, indptr):
    n = indptr.size - 1
    h = scores.shape[1]
    out = np.empty_like(scores)
    for s in range(n):
        lo, hi = indptr[s], indptr[s + 1]
        if hi == lo:
            continue
        for c in range(h):
            m = scores[lo, c]
            for p in range(lo + 1, hi):
                if scores[p, c] > m:
                    m = scores[p, c]
            total = 0.0
            for p in range(lo, hi):
                out[p, c] = np.exp(scores[p, c] - m)
                total += out[p, c]
            for p in range(lo, hi):
                out[p, c] /= total
    return out


@njit(cache=True)
def scatter_add_rows(out, idx, values):
    d = values.shape[1]
    for e in range(idx.size):
        i = idx[e]
        for c in range(d):
            out[i, c] += values[e, c]
    return out


@njit(cache=True)
def neighbor_mean(values, src, indptr):
    n = indptr.size - 1
    d = values.shape[1]
    out = np.zeros((n, d))
    for i in range(n):
        lo, hi = indptr[i], indptr[i + 1]
        if hi == lo:
            continue
        for p in range(lo, hi):
            j = src[p]
            for c in range(d):
                out[i, c] += values[j, c]
        inv = 1.0 / (hi - lo)
        for c in range(d):
            out[i, c] *= inv
    return out


@njit(cache=True)
def neighbor_mean_backward(g, src, indptr, n_values):
    n = indptr.size - 1
    d = g.shape[1]
    out = np.zeros((n_values, d))
    for i in range(n):
        lo, hi = indptr[i], indptr[i + 1]
        if hi == lo:
            continue
        inv = 1.0 / (hi - lo)
        for p in range(lo, hi):
            j = src[p]
            for c in range(d):
                out[j, c] += g[i, c] * inv
    return out


@njit(cache=True)
def neighbor_max(values, src, indptr):
    n = indptr.size - 1
    d = values.shape[1]
    out = np.zeros((n, d))
    arg = np.full((n, d), -1, dtype=np.int64)
    for i in range(n):
        lo, hi = indptr[i], indptr[i + 1]
        if hi == lo:
            continue
        for c in range(d):
            best = values[src[lo], c]
            bj = src[lo]
            for p in range(lo + 1, hi):
                j = src[p]
                if values[j, c] > best:
                    best = values[j, c]
                    bj = j
            out[i, c] = best
            arg[i, c] = bj
    return out, arg


@njit(cache=True)
def neighbor_max_backward(g, arg, n_values):
    n, d = g.shape
    out = np.zeros((n_values, d))
    for i in range(n):
        for c in range(d):
            j = arg[i, c]
            if j >= 0:
                out[j, c] += g[i, c]
    return out


@njit(cache=True)
def gat_forward(left, right, att, indptr, src, dst, slope):
    """Fused GATv2 edge pass: scores, per-segment softmax, weighted sum."""
    e_count = src.size
    h, d = att.shape
    scores = np.empty((e_count, h))
    for e in range(e_count):
        i = dst[e]
        j = src[e]
        for hh in range(h):
            s = 0.0
            for c in range(d):
                v = left[i, hh * d + c] + right[j, hh * d + c]
                if v <= 0.0:
                    v *= slope
                s += att[hh, c] * v
            scores[e, hh] = s
    alpha = segment_softmax2d(scores, indptr)
    out = np.zeros((indptr.size - 1, h * d))
    for e in range(e_count):
        i = dst[e]
        j = src[e]
        for hh in range(h):
            a = alpha[e, hh]
            for c in range(d):
                out[i, hh * d + c] += a * right[j, hh * d + c]
    return alpha, out


@njit(cache=True)
def gat_backward(g, left, right, att, alpha, indptr, src, dst, slope):
    e_count = src.size
    h, d = att.shape
    dleft = np.zeros_like(left)
    dright = np.zeros_like(right)
    datt = np.zeros_like(att)
    ds = np.empty((e_count, h))
    for e in range(e_count):
        i = dst[e]
        j = src[e]
        for hh in range(h):
            s = 0.0
            for c in range(d):
                s += g[i, hh * d + c] * right[j, hh * d + c]
            ds[e, hh] = s
    n = indptr.size - 1
    for seg in range(n):
        lo, hi = indptr[seg], indptr[seg + 1]
        for hh in range(h):
            tot = 0.0
            for p in range(lo, hi):
                tot += alpha[p, hh] * ds[p, hh]
            for p in range(lo, hi):
                ds[p, hh] = alpha[p, hh] * (ds[p, hh] - tot)
    for e in range(e_count):
        i = dst[e]
        j = src[e]
        for hh in range(h):
            dse = ds[e, hh]
            a = alpha[e, hh]
            for c in range(d):
                col = hh * d + c
                pre = left[i, col] + right[j, col]
                z = pre if pre > 0.0 else slope * pre
                datt[hh, c] += dse * z
                dz = dse * att[hh, c]
                dpre = dz if pre > 0.0 else dz * slope
                dleft[i, col] += dpre
                dright[j, col] += dpre + a * g[i, col]
    return dleft, dright, datt


@njit(cache=True)
def knn_indices(X, k):
    n = X.shape[0]
    d = X.shape[1]
    out = np.empty((n, k), dtype=np.int64)
    bestd = np.empty(k)
    bestj = np.empty(k, dtype=np.int64)
    for i in range(n):
        for t in range(k):
            bestd[t] = np.inf
            bestj[t] = -1
        for j in range(n):
            if j == i:
                continue
            d2 = 0.0
            for c in range(d):
                t = X[i, c] - X[j, c]
                d2 += t * t
            if d2 < bestd[k - 1]:
                pos = k - 1
                while pos > 0 and bestd[pos - 1] > d2:
                    bestd[pos] = bestd[pos - 1]
                    bestj[pos] = bestj[pos - 1]
                    pos -= 1
                bestd[pos] = d2
                bestj[pos] = j
        for t in range(k):
            out[i, t] = bestj[t]
    return out


@njit(cache=True)
def knn_query(Xtr, Q, k):
    m = Q.shape[0]
    n = Xtr.shape[0]
    d = Xtr.shape[1]
    idx = np.empty((m, k), dtype=np.int64)
    d2s = np.empty((m, k))
    bestd = np.empty(k)
    bestj = np.empty(k, dtype=np.int64)
    for q in range(m):
        for t in range(k):
            bestd[t] = np.inf
            bestj[t] = -1
        for j in range(n):
            d2 = 0.0
            for c in range(d):
                t = Q[q, c] - Xtr[j, c]
                d2 += t * t
            if d2 < bestd[k - 1]:
                pos = k - 1
                while pos > 0 and bestd[pos - 1] > d2:
                    bestd[pos] = bestd[pos - 1]
                    bestj[pos] = bestj[pos - 1]
                    pos -= 1
                bestd[pos] = d2
                bestj[pos] = j
        for t in range(k):
            idx[q, t] = bestj[t]
            d2s[q, t] = bestd[t]
    return idx, d2s
