"""Weighted patient-similarity graphs with threshold-gated edges.

Edges connect patient pairs whose metric value strictly clears a threshold:
above it for cosine similarity, below it for the Euclidean and Manhattan
distances. Edge weights store the raw metric value; converting distances to
affinities for message passing is the consumer's concern.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import kernels


class SimgraphError(ValueError):
    pass


class Metric(Enum):
    COSINE = "cosine"
    EUCLIDEAN = "euclidean"
    MANHATTAN = "manhattan"

    @property
    def is_similarity(self) -> bool:
        return self is Metric.COSINE

    @property
    def kernel_id(self) -> int:
        return {"cosine": kernels.COSINE, "euclidean": kernels.EUCLIDEAN, "manhattan": kernels.MANHATTAN}[self.value]

    def clears(self, value: float, tau: float) -> bool:
        return value > tau if self.is_similarity else value < tau

    @classmethod
    def from_name(cls, name: str) -> "Metric":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise SimgraphError(f"unknown metric: {name!r}") from None


@dataclass(frozen=True)
class Threshold:
    value: float
    provenance: str  # dataset-mean | user-supplied

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise SimgraphError("threshold must be finite")
        if self.provenance not in ("dataset-mean", "user-supplied"):
            raise SimgraphError(f"bad threshold provenance: {self.provenance!r}")


# ---------------------------------------------------------------------------
# pairwise metrics (scalar forms; bulk work happens in kernels)
# ---------------------------------------------------------------------------

def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise SimgraphError("cosine_similarity requires equal-length vectors")
    na = float(np.sqrt(np.dot(a, a)))
    nb = float(np.sqrt(np.dot(b, b)))
    if na == 0.0 or nb == 0.0:
        raise SimgraphError("cosine similarity undefined for a zero vector")
    return min(1.0, float(np.dot(a, b) / (na * nb)))


def euclidean_distance(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise SimgraphError("euclidean_distance requires equal-length vectors")
    return float(np.sqrt(np.sum((a - b) ** 2)))


def manhattan_distance(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise SimgraphError("manhattan_distance requires equal-length vectors")
    return float(np.sum(np.abs(a - b)))


def metric_value(metric: Metric, a, b) -> float:
    if metric is Metric.COSINE:
        return cosine_similarity(a, b)
    if metric is Metric.EUCLIDEAN:
        return euclidean_distance(a, b)
    return manhattan_distance(a, b)


# ---------------------------------------------------------------------------
# graph
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimilarityGraph:
    """Undirected weighted graph in CSR form; nodes carry feature rows."""

    features: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    metric: Metric
    threshold: float

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def n_edges(self) -> int:
        """Undirected edge count (each stored twice in CSR)."""
        return self.indices.size // 2

    def degree(self, i: int) -> int:
        return int(self.indptr[i + 1] - self.indptr[i])

    def neighbors(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.indices[lo:hi], self.weights[lo:hi]

    def validate(self) -> None:
        n = self.n
        if self.indptr.shape != (n + 1,) or self.indptr[0] != 0 or self.indptr[-1] != self.indices.size:
            raise SimgraphError("malformed CSR offsets")
        for i in range(n):
            idx, w = self.neighbors(i)
            if idx.size and (np.any(np.diff(idx) <= 0) or idx.min() < 0 or idx.max() >= n):
                raise SimgraphError(f"row {i}: neighbor ids unsorted or out of bounds")
            if np.any(idx == i):
                raise SimgraphError(f"row {i}: self-edge stored in graph")
            for v in w:
                if not self.metric.clears(v, self.threshold):
                    raise SimgraphError(f"row {i}: stored weight {v} does not clear threshold")
        tp, ti, tw = kernels.csr_transpose(self.indptr, self.indices, self.weights, n)
        if not (np.array_equal(tp, self.indptr) and np.array_equal(ti, self.indices) and np.array_equal(tw, self.weights)):
            raise SimgraphError("adjacency is not symmetric")


def mean_pairwise(features, metric: Metric) -> Threshold:
    """Dataset-mean threshold: average metric over all unordered pairs."""
    X = _as_matrix(features)
    if X.shape[0] < 2:
        raise SimgraphError("mean_pairwise requires at least two rows")
    if metric is Metric.COSINE:
        _check_nonzero_rows(X)
    return Threshold(value=kernels.pairwise_mean(X, metric.kernel_id), provenance="dataset-mean")


def build_graph(features, metric: Metric, threshold) -> SimilarityGraph:
    """Connect all pairs whose metric strictly clears the threshold."""
    X = _as_matrix(features)
    tau = threshold.value if isinstance(threshold, Threshold) else float(threshold)
    if not metric.is_similarity and tau <= 0.0 and not math.isinf(tau):
        raise SimgraphError("distance threshold must be positive")
    if metric is Metric.COSINE:
        _check_nonzero_rows(X)
    indptr, indices, weights = kernels.build_adjacency(X, metric.kernel_id, tau)
    return SimilarityGraph(
        features=X, indptr=indptr, indices=indices, weights=weights, metric=metric, threshold=tau
    )


def insert_node(graph: SimilarityGraph, features) -> tuple[SimilarityGraph, int]:
    """Append one node, wiring edges by the graph's own metric/threshold rule.

    Existing edges are untouched; the input graph is not modified.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.shape != (graph.features.shape[1],):
        raise SimgraphError(
            f"feature dimension mismatch: expected {graph.features.shape[1]}, got {x.shape}"
        )
    if graph.metric is Metric.COSINE and not np.any(x):
        raise SimgraphError("cosine similarity undefined for a zero vector")
    vals = kernels.metric_row(graph.features, x, graph.metric.kernel_id)
    mask = vals > graph.threshold if graph.metric.is_similarity else vals < graph.threshold
    new_id = graph.n
    extra = mask.astype(np.int64)

    indptr = np.empty(graph.n + 2, dtype=np.int64)
    indptr[0] = 0
    np.cumsum(np.diff(graph.indptr) + extra, out=indptr[1 : graph.n + 1])
    n_new = int(mask.sum())
    indptr[graph.n + 1] = indptr[graph.n] + n_new

    indices = np.empty(indptr[-1], dtype=np.int64)
    weights = np.empty(indptr[-1])
    for i in range(graph.n):
        lo, hi = graph.indptr[i], graph.indptr[i + 1]
        dst = indptr[i]
        width = hi - lo
        indices[dst : dst + width] = graph.indices[lo:hi]
        weights[dst : dst + width] = graph.weights[lo:hi]
        if mask[i]:  # the new node has the largest id, so it sorts last
            indices[dst + width] = new_id
            weights[dst + width] = vals[i]
    tail = indptr[graph.n]
    indices[tail:] = np.nonzero(mask)[0]
    weights[tail:] = vals[mask]

    extended = np.vstack([graph.features, x[None, :]])
    return (
        SimilarityGraph(
            features=extended,
            indptr=indptr,
            indices=indices,
            weights=weights,
            metric=graph.metric,
            threshold=graph.threshold,
        ),
        new_id,
    )


def _as_matrix(features) -> np.ndarray:
    X = getattr(features, "X", features)
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise SimgraphError("features must be a 2-D matrix")
    return X


def _check_nonzero_rows(X) -> None:
    zero = ~np.any(X != 0.0, axis=1)
    if np.any(zero):
        raise SimgraphError(f"cosine metric undefined for all-zero feature row {int(np.nonzero(zero)[0][0])}")
