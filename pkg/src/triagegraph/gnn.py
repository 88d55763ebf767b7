"""Message-passing architectures, training, and inductive prediction.

Three layer families are implemented on top of :mod:`triagegraph.numcore`:

* graph convolution: ``act(D^-1/2 (A + I) D^-1/2 H W + b)`` with weighted
  degrees; distance-weighted graphs enter via the affinity ``1/(1+d)``
  unless ``edge_weighting='unweighted'``.
* GATv2 attention: per head, ``e_ij = a^T leaky_relu(W_l h_i + W_r h_j)``
  softmax-normalized over each in-neighborhood including the self loop;
  heads concatenate on hidden layers and average on the output layer.
* GraphSAGE: ``act(W_self h_i + W_neigh agg_i)`` where ``agg`` is either the
  neighborhood mean of raw features or the columnwise max of a pooled
  transform ``relu(W_pool h_j + b_pool)``; empty neighborhoods aggregate to
  zero so isolated nodes stay classifiable.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import numcore as nc
from .ingest import EncoderState, ScalerState, SplitMasks
from .records import LABEL_CODES, PatientRecord, TriageLevel
from .simgraph import Metric, SimilarityGraph, insert_node


class GnnError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, lr: float, loss: float):
        super().__init__(f"non-finite training loss {loss!r} at epoch {epoch} (lr={lr})")
        self.epoch = epoch
        self.lr = lr


# ---------------------------------------------------------------------------
# architecture specs
# ---------------------------------------------------------------------------

GCN, GATV2, SAGE = "gcn", "gatv2", "sage"


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_dim: int
    out_dim: int
    heads: int = 1
    concat_heads: bool = True
    aggregator: Optional[str] = None  # SAGE only: max | mean
    activation: str = "relu"  # relu | linear

    def __post_init__(self):
        if self.kind not in (GCN, GATV2, SAGE):
            raise GnnError(f"unknown layer kind: {self.kind!r}")
        if self.in_dim <= 0 or self.out_dim <= 0:
            raise GnnError("layer dims must be positive")
        if self.heads < 1:
            raise GnnError("heads must be >= 1")
        if (self.aggregator is not None) != (self.kind == SAGE):
            raise GnnError("aggregator is set exactly for SAGE layers")
        if self.kind == SAGE and self.aggregator not in ("max", "mean"):
            raise GnnError(f"bad SAGE aggregator: {self.aggregator!r}")
        if self.kind == GATV2 and self.concat_heads and self.out_dim % self.heads != 0:
            raise GnnError("concatenated GATv2 layer needs out_dim divisible by heads")
        if self.activation not in ("relu", "linear"):
            raise GnnError(f"unknown activation: {self.activation!r}")

    def head_dim(self) -> int:
        return self.out_dim // self.heads if self.concat_heads else self.out_dim

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "in_dim": self.in_dim,
            "out_dim": self.out_dim,
            "heads": self.heads,
            "concat_heads": self.concat_heads,
            "aggregator": self.aggregator,
            "activation": self.activation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        return cls(**d)


@dataclass(frozen=True)
class ModelSpec:
    preset: str
    layers: tuple

    def __post_init__(self):
        if not self.layers:
            raise GnnError("model needs at least one layer")
        for prev, cur in zip(self.layers, self.layers[1:]):
            if prev.out_dim != cur.in_dim:
                raise GnnError(f"layer chain mismatch: {prev.out_dim} -> {cur.in_dim}")

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def kinds(self) -> set:
        return {layer.kind for layer in self.layers}

    def to_dict(self) -> dict:
        return {"preset": self.preset, "layers": [l.to_dict() for l in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(preset=d["preset"], layers=tuple(LayerSpec.from_dict(l) for l in d["layers"]))


def _gcn_chain(preset: str, widths: Sequence[int]) -> ModelSpec:
    layers = []
    for i, (a, b) in enumerate(zip(widths, widths[1:])):
        act = "linear" if i == len(widths) - 2 else "relu"
        layers.append(LayerSpec(kind=GCN, in_dim=a, out_dim=b, activation=act))
    return ModelSpec(preset=preset, layers=tuple(layers))


def preset_architectures() -> dict:
    """The four named model architectures (input 16, output 4)."""
    sage_dims = [(16, 64), (64, 32), (32, 16), (16, 8), (8, 4)]
    sage_aggs = ["max", "max", "mean", "max", "max"]
    sage_layers = tuple(
        LayerSpec(
            kind=SAGE,
            in_dim=a,
            out_dim=b,
            aggregator=agg,
            activation="linear" if i == len(sage_dims) - 1 else "relu",
        )
        for i, ((a, b), agg) in enumerate(zip(sage_dims, sage_aggs))
    )
    return {
        "GCN_COS_MAN": _gcn_chain("GCN_COS_MAN", [16, 64, 64, 64, 64, 4]),
        "GCN_EUC": _gcn_chain("GCN_EUC", [16, 32, 32, 32, 4]),
        "GAT": ModelSpec(
            preset="GAT",
            layers=(
                LayerSpec(kind=GATV2, in_dim=16, out_dim=32, heads=4, concat_heads=True),
                LayerSpec(
                    kind=GATV2, in_dim=32, out_dim=4, heads=4, concat_heads=False, activation="linear"
                ),
            ),
        ),
        "SAGE": ModelSpec(preset="SAGE", layers=sage_layers),
    }


def default_epochs(spec: ModelSpec, metric: Metric) -> int:
    """Training-regime pairing: GCN/GAT run 200 epochs on the Euclidean
    graph and 300 otherwise; SAGE always runs 300."""
    if metric is Metric.EUCLIDEAN and SAGE not in spec.kinds():
        return 200
    return 300


# ---------------------------------------------------------------------------
# graph context: per-architecture operands derived from one graph
# ---------------------------------------------------------------------------

class GraphContext:
    """Message-passing operands (normalized adjacency, neighbor segments)."""

    def __init__(self, graph: SimilarityGraph, edge_weighting: str = "affinity"):
        if edge_weighting not in ("affinity", "unweighted"):
            raise GnnError(f"edge_weighting must be affinity|unweighted, got {edge_weighting!r}")
        self.graph = graph
        self.edge_weighting = edge_weighting
        self.n = graph.n
        self.features = graph.features
        self._gcn = None
        self._gat = None

    def _message_weights(self) -> np.ndarray:
        if self.edge_weighting == "unweighted":
            return np.ones_like(self.graph.weights)
        if self.graph.metric.is_similarity:
            return self.graph.weights
        return 1.0 / (1.0 + self.graph.weights)

    def gcn_operator(self) -> nc.SparseMatrix:
        """Symmetrically normalized self-looped adjacency."""
        if self._gcn is None:
            g = self.graph
            deg = np.diff(g.indptr)
            dst = np.concatenate([np.repeat(np.arange(self.n, dtype=np.int64), deg), np.arange(self.n, dtype=np.int64)])
            src = np.concatenate([g.indices, np.arange(self.n, dtype=np.int64)])
            w = np.concatenate([self._message_weights(), np.ones(self.n)])
            order = np.lexsort((src, dst))
            dst, src, w = dst[order], src[order], w[order]
            dhat = np.zeros(self.n)
            np.add.at(dhat, dst, w)
            norm = w / np.sqrt(dhat[dst] * dhat[src])
            indptr = np.zeros(self.n + 1, dtype=np.int64)
            np.cumsum(np.bincount(dst, minlength=self.n), out=indptr[1:])
            self._gcn = nc.SparseMatrix(indptr=indptr, indices=src, data=norm, shape=(self.n, self.n))
        return self._gcn

    def gat_segments(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Self-augmented in-neighborhoods as (indptr, src, dst) edge lists."""
        if self._gat is None:
            g = self.graph
            deg = np.diff(g.indptr)
            dst = np.concatenate([np.repeat(np.arange(self.n, dtype=np.int64), deg), np.arange(self.n, dtype=np.int64)])
            src = np.concatenate([g.indices, np.arange(self.n, dtype=np.int64)])
            order = np.lexsort((src, dst))
            dst, src = dst[order], src[order]
            indptr = np.zeros(self.n + 1, dtype=np.int64)
            np.cumsum(np.bincount(dst, minlength=self.n), out=indptr[1:])
            self._gat = (indptr, src, dst)
        return self._gat

    def sage_segments(self) -> tuple[np.ndarray, np.ndarray]:
        return self.graph.indptr, self.graph.indices


# ---------------------------------------------------------------------------
# model parameters and forward pass
# ---------------------------------------------------------------------------

def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=shape)


def _activate(tape, spec: LayerSpec, t: nc.Tensor) -> nc.Tensor:
    return nc.relu(tape, t) if spec.activation == "relu" else t


class Model:
    """A parameterized architecture instance over the numcore tape."""

    def __init__(self, spec: ModelSpec, params: dict):
        self.spec = spec
        self.params = params

    @classmethod
    def init(cls, spec: ModelSpec, seed: int = 0) -> "Model":
        rng = np.random.default_rng(seed)
        params: dict = {}
        for li, layer in enumerate(spec.layers):
            p = f"L{li}"
            if layer.kind == GCN:
                params[f"{p}.W"] = nc.parameter(_glorot(rng, layer.in_dim, layer.out_dim, (layer.in_dim, layer.out_dim)))
                params[f"{p}.b"] = nc.parameter(np.zeros(layer.out_dim))
            elif layer.kind == GATV2:
                dh = layer.head_dim()
                wide = dh * layer.heads
                # per-head glorot limits, heads packed side by side
                params[f"{p}.Wl"] = nc.parameter(_glorot(rng, layer.in_dim, dh, (layer.in_dim, wide)))
                params[f"{p}.Wr"] = nc.parameter(_glorot(rng, layer.in_dim, dh, (layer.in_dim, wide)))
                params[f"{p}.att"] = nc.parameter(_glorot(rng, dh, 1, (layer.heads, dh)))
                params[f"{p}.b"] = nc.parameter(np.zeros(wide if layer.concat_heads else dh))
            else:  # SAGE
                params[f"{p}.W_self"] = nc.parameter(_glorot(rng, layer.in_dim, layer.out_dim, (layer.in_dim, layer.out_dim)))
                params[f"{p}.W_neigh"] = nc.parameter(_glorot(rng, layer.in_dim, layer.out_dim, (layer.in_dim, layer.out_dim)))
                params[f"{p}.b"] = nc.parameter(np.zeros(layer.out_dim))
                if layer.aggregator == "max":
                    params[f"{p}.W_pool"] = nc.parameter(_glorot(rng, layer.in_dim, layer.in_dim, (layer.in_dim, layer.in_dim)))
                    params[f"{p}.b_pool"] = nc.parameter(np.zeros(layer.in_dim))
        return cls(spec, params)

    def weights(self) -> dict:
        return {k: t.data.copy() for k, t in self.params.items()}

    def load_weights(self, weights: dict) -> None:
        if set(weights) != set(self.params):
            raise GnnError("weight names do not match the model spec")
        for k, t in self.params.items():
            if weights[k].shape != t.data.shape:
                raise GnnError(f"weight {k} has shape {weights[k].shape}, expected {t.data.shape}")
            t.data = np.ascontiguousarray(weights[k], dtype=np.float64)
            t.grad = None

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.zero_grad()

    # -- layer forwards ----------------------------------------------------

    def _gcn_layer(self, tape, li, layer, ctx, H):
        hw = nc.matmul(tape, H, self.params[f"L{li}.W"])
        agg = nc.sparse_dense_matmul(tape, ctx.gcn_operator(), hw)
        return _activate(tape, layer, nc.add(tape, agg, self.params[f"L{li}.b"]))

    def _gat_layer(self, tape, li, layer, ctx, H):
        indptr, src, dst = ctx.gat_segments()
        dh = layer.head_dim()
        left = nc.matmul(tape, H, self.params[f"L{li}.Wl"])
        right = nc.matmul(tape, H, self.params[f"L{li}.Wr"])
        combined = nc.gat_attention(
            tape, left, right, self.params[f"L{li}.att"], indptr, src, dst
        )  # (N, heads*dh), heads side by side
        if not layer.concat_heads:
            avg = np.tile(np.eye(dh), (layer.heads, 1)) / layer.heads
            combined = nc.matmul(tape, combined, nc.Tensor(avg))
        return _activate(tape, layer, nc.add(tape, combined, self.params[f"L{li}.b"]))

    def _sage_layer(self, tape, li, layer, ctx, H):
        indptr, src = ctx.sage_segments()
        if layer.aggregator == "mean":
            agg = nc.neighbor_mean(tape, H, src, indptr)
        else:
            pooled = nc.relu(
                tape,
                nc.add(tape, nc.matmul(tape, H, self.params[f"L{li}.W_pool"]), self.params[f"L{li}.b_pool"]),
            )
            agg = nc.neighbor_max(tape, pooled, src, indptr)
        out = nc.add(
            tape,
            nc.matmul(tape, H, self.params[f"L{li}.W_self"]),
            nc.matmul(tape, agg, self.params[f"L{li}.W_neigh"]),
        )
        return _activate(tape, layer, nc.add(tape, out, self.params[f"L{li}.b"]))

    def forward(self, tape, ctx: GraphContext, H: Optional[nc.Tensor] = None) -> nc.Tensor:
        if H is None:
            H = nc.Tensor(ctx.features)
        if H.data.shape[1] != self.spec.in_dim:
            raise GnnError(f"input width {H.data.shape[1]} != model input {self.spec.in_dim}")
        for li, layer in enumerate(self.spec.layers):
            if layer.kind == GCN:
                H = self._gcn_layer(tape, li, layer, ctx, H)
            elif layer.kind == GATV2:
                H = self._gat_layer(tape, li, layer, ctx, H)
            else:
                H = self._sage_layer(tape, li, layer, ctx, H)
        return H


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    epochs: Optional[int] = None  # None: resolve from (architecture, metric)
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    edge_weighting: str = "affinity"

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class ModelBundle:
    """Everything inductive prediction needs, persistable as one file."""

    spec: ModelSpec
    weights_best: dict
    weights_final: dict
    encoders: EncoderState
    scaler: ScalerState
    graph: SimilarityGraph
    labels: np.ndarray
    synthetic: np.ndarray
    label_codes: dict
    train_config: dict
    history: dict
    version: int = 1

    def model(self, which: str = "best") -> Model:
        m = Model.init(self.spec, seed=0)
        m.load_weights(self.weights_best if which == "best" else self.weights_final)
        return m

    def context(self) -> GraphContext:
        return GraphContext(self.graph, self.train_config.get("edge_weighting", "affinity"))


def _accuracy(pred: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    if not np.any(mask):
        raise GnnError("empty mask")
    return float(np.mean(pred[mask] == labels[mask]))


def train(
    spec: ModelSpec,
    graph: SimilarityGraph,
    labels: np.ndarray,
    masks: SplitMasks,
    config: TrainConfig,
    encoders: Optional[EncoderState] = None,
    scaler: Optional[ScalerState] = None,
    synthetic: Optional[np.ndarray] = None,
) -> ModelBundle:
    """Full-batch transductive training with best-eval weight selection."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (graph.n,):
        raise GnnError("labels must cover every node")
    if np.any(labels[masks.train] < 0):
        raise GnnError("train-mask nodes must be labeled")
    epochs = config.epochs if config.epochs is not None else default_epochs(spec, graph.metric)
    if epochs <= 0:
        raise GnnError("epochs must be positive")

    ctx = GraphContext(graph, config.edge_weighting)
    model = Model.init(spec, seed=config.seed)
    param_list = list(model.params.values())
    adam = nc.AdamState.init([t.data for t in param_list])
    train_idx = np.nonzero(masks.train)[0]

    history = {"train_loss": [], "train_accuracy": [], "eval_accuracy": []}
    best_acc = -1.0
    best_weights = model.weights()
    for epoch in range(epochs):
        model.zero_grad()
        tape = nc.Tape()
        logits = model.forward(tape, ctx)
        loss = nc.cross_entropy(tape, nc.gather_rows(tape, logits, train_idx), labels[train_idx])
        loss_val = float(loss.data)
        if not np.isfinite(loss_val):
            raise TrainingDiverged(epoch, config.lr, loss_val)
        tape.backward(loss)

        # logits belong to the pre-update weights, so select before stepping
        pred = logits.data.argmax(axis=1)
        eval_acc = _accuracy(pred, labels, masks.eval_)
        history["train_loss"].append(loss_val)
        history["train_accuracy"].append(_accuracy(pred, labels, masks.train))
        history["eval_accuracy"].append(eval_acc)
        if eval_acc > best_acc:
            best_acc = eval_acc
            best_weights = model.weights()

        grads = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in param_list]
        nc.adam_step([t.data for t in param_list], grads, adam, config.lr, config.beta1, config.beta2, config.eps)

    return ModelBundle(
        spec=spec,
        weights_best=best_weights,
        weights_final=model.weights(),
        encoders=encoders if encoders is not None else EncoderState(residence_codes={}, smoking_codes={}),
        scaler=scaler if scaler is not None else ScalerState(col_min=np.zeros(spec.in_dim), col_max=np.ones(spec.in_dim)),
        graph=graph,
        labels=labels,
        synthetic=synthetic if synthetic is not None else np.zeros(graph.n, dtype=bool),
        label_codes=dict(LABEL_CODES),
        train_config={**config.to_dict(), "epochs": epochs, "metric": graph.metric.value, "preset": spec.preset},
        history=history,
    )


def predict_transductive(bundle: ModelBundle) -> tuple[np.ndarray, np.ndarray]:
    """(predicted labels, softmax scores) for every node of the stored graph."""
    logits = bundle.model().forward(None, bundle.context())
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    scores = e / e.sum(axis=1, keepdims=True)
    return logits.data.argmax(axis=1), scores


def evaluate(bundle: ModelBundle, masks: SplitMasks) -> dict:
    """Per-split metrics of the bundle's best weights on its own graph."""
    from . import evalmetrics

    pred, _ = predict_transductive(bundle)
    out = {}
    for name, mask in (("train", masks.train), ("test", masks.test), ("eval", masks.eval_)):
        if not np.any(mask):
            raise GnnError(f"empty {name} mask")
        out[name] = evalmetrics.compute_metrics(bundle.labels[mask], pred[mask])
    return out


# ---------------------------------------------------------------------------
# inductive prediction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TriageVerdict:
    level: TriageLevel
    scores: np.ndarray  # softmax over the four levels, sums to 1
    neighbors: tuple    # ((node id, raw edge weight), ...) closest first
    clamped_features: int

    def to_dict(self) -> dict:
        return {
            "level": self.level.display,
            "scores": {lvl.display: float(self.scores[int(lvl)]) for lvl in TriageLevel},
            "neighbors": [{"node": int(i), "weight": float(w)} for i, w in self.neighbors],
            "clamped_features": self.clamped_features,
        }


def predict_inductive(bundle: ModelBundle, patient: PatientRecord, neighbors_limit: int = 5) -> TriageVerdict:
    """Classify a new patient by ephemeral insertion into the stored graph.

    The bundle's graph is never mutated; each call builds its own extended
    graph, runs one forward pass, and reports the new node's verdict.
    """
    from .ingest import encode_record

    raw = encode_record(patient, bundle.encoders)
    scaled, clamped = bundle.scaler.transform_vector(raw)
    return predict_inductive_vector(bundle, scaled, clamped_features=clamped, neighbors_limit=neighbors_limit)


def predict_inductive_vector(
    bundle: ModelBundle,
    scaled: np.ndarray,
    clamped_features: int = 0,
    neighbors_limit: int = 5,
) -> TriageVerdict:
    extended, node_id = insert_node(bundle.graph, scaled)
    ctx = GraphContext(extended, bundle.train_config.get("edge_weighting", "affinity"))
    logits = bundle.model().forward(None, ctx)
    row = logits.data[node_id]
    z = row - row.max()
    e = np.exp(z)
    scores = e / e.sum()

    idx, w = extended.neighbors(node_id)
    closeness = -w if extended.metric.is_similarity else w
    order = np.lexsort((idx, closeness))[:neighbors_limit]
    neighbors = tuple((int(idx[i]), float(w[i])) for i in order)
    return TriageVerdict(
        level=TriageLevel(int(scores.argmax())),
        scores=scores,
        neighbors=neighbors,
        clamped_features=clamped_features,
    )
