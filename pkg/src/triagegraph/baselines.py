"""Tabular baselines trained on the same preprocessed matrix: KNN and a
one-vs-rest linear SVM (L2-regularized hinge loss, SGD with a decaying
step and seeded shuffling)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .records import TriageLevel


class BaselineError(ValueError):
    pass


@dataclass
class KnnModel:
    X: np.ndarray
    y: np.ndarray
    k: int = 5

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        self.y = np.ascontiguousarray(self.y, dtype=np.int64)
        if self.X.shape[0] == 0:
            raise BaselineError("KNN model needs at least one training row")
        if not (1 <= self.k <= self.X.shape[0]):
            raise BaselineError(f"k={self.k} must be within [1, {self.X.shape[0]}]")


def knn_fit(X, y, k: int = 5) -> KnnModel:
    return KnnModel(X=X, y=y, k=k)


def knn_predict_batch(model: KnnModel, Q) -> np.ndarray:
    """Majority label among the k nearest rows per query.

    Ties break by the smaller summed distance over the tied classes, then
    by the lower class code.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
    idx, d2 = kernels.knn_query(model.X, Q, model.k)
    out = np.empty(Q.shape[0], dtype=np.int64)
    n_classes = int(model.y.max()) + 1 if model.y.size else 1
    for q in range(Q.shape[0]):
        votes = np.zeros(n_classes, dtype=np.int64)
        dist_sum = np.zeros(n_classes)
        for t in range(model.k):
            c = model.y[idx[q, t]]
            votes[c] += 1
            dist_sum[c] += np.sqrt(d2[q, t])
        best = votes.max()
        tied = np.nonzero(votes == best)[0]
        if tied.size > 1:
            tied = tied[dist_sum[tied] == dist_sum[tied].min()]
        out[q] = tied[0]
    return out


def knn_predict(model: KnnModel, x) -> TriageLevel:
    return TriageLevel(int(knn_predict_batch(model, np.asarray(x))[0]))


@dataclass
class SvmConfig:
    lr: float = 0.01
    epochs: int = 200
    l2: float = 1e-4
    seed: int = 0


@dataclass
class SvmModel:
    W: np.ndarray  # (n_classes, dim)
    b: np.ndarray  # (n_classes,)
    objective_trace: list = field(default_factory=list)

    def decision_values(self, Q) -> np.ndarray:
        Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
        return Q @ self.W.T + self.b


def _svm_objective(W, b, X, targets, l2: float) -> float:
    margins = targets * (X @ W.T + b)
    hinge = np.maximum(0.0, 1.0 - margins).mean(axis=0).sum()
    return float(hinge + l2 * np.sum(W * W))


def svm_train(X, y, config: SvmConfig | None = None, n_classes: int = 4) -> SvmModel:
    """One-vs-rest subgradient training; records the objective per epoch."""
    config = config or SvmConfig()
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    present = np.unique(y)
    if present.size < 2:
        raise BaselineError("SVM training needs at least two classes")
    n, dim = X.shape
    targets = np.where(y[:, None] == np.arange(n_classes)[None, :], 1.0, -1.0)

    rng = np.random.default_rng(config.seed)
    W = np.zeros((n_classes, dim))
    b = np.zeros(n_classes)
    trace = [_svm_objective(W, b, X, targets, config.l2)]
    for epoch in range(config.epochs):
        lr = config.lr / (1.0 + 0.1 * epoch)
        order = rng.permutation(n)
        for i in order:
            margins = targets[i] * (W @ X[i] + b)
            active = margins < 1.0
            # L2 shrinkage applies every step; hinge subgradient only when active
            W *= 1.0 - 2.0 * lr * config.l2
            if np.any(active):
                W[active] += lr * targets[i, active, None] * X[i][None, :]
                b[active] += lr * targets[i, active]
        trace.append(_svm_objective(W, b, X, targets, config.l2))
    return SvmModel(W=W, b=b, objective_trace=trace)


def svm_hinge_subgradient(model: SvmModel, X, y, n_classes: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Sum-form hinge subgradient of the one-vs-rest objective at the model.

    Points correctly classified outside every margin contribute exactly
    zero, so appending such a point leaves this subgradient unchanged.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    targets = np.where(y[:, None] == np.arange(n_classes)[None, :], 1.0, -1.0)
    margins = targets * (X @ model.W.T + model.b)
    active = margins < 1.0
    dW = -(targets * active).T @ X
    db = -(targets * active).sum(axis=0)
    return dW, db


def svm_predict_batch(model: SvmModel, Q) -> np.ndarray:
    return model.decision_values(Q).argmax(axis=1).astype(np.int64)


def svm_predict(model: SvmModel, x) -> TriageLevel:
    return TriageLevel(int(svm_predict_batch(model, np.asarray(x))[0]))
