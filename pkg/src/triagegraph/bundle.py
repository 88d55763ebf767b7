"""ModelBundle persistence: one little-endian binary file with a CRC32 tail.

Layout: magic ``TGB1``, u32 format version, then tagged sections (4-byte
tag, u64 payload length, payload), then CRC32 of everything before it.
Arrays are fixed-width little-endian (i64 ints, f64 reals); structured
content is canonical JSON. Serialization is deterministic, so
save(load(path)) reproduces the file byte for byte.
"""
from __future__ import annotations

import json
import struct
import zlib

import numpy as np

from .gnn import ModelBundle, ModelSpec
from .ingest import EncoderState, ScalerState
from .simgraph import Metric, SimilarityGraph

MAGIC = b"TGB1"
FORMAT_VERSION = 1

_METRIC_IDS = {Metric.COSINE: 0, Metric.EUCLIDEAN: 1, Metric.MANHATTAN: 2}
_METRIC_FROM_ID = {v: k for k, v in _METRIC_IDS.items()}


class BundleError(ValueError):
    pass


class BundleChecksumError(BundleError):
    pass


def _json_bytes(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _pack_weights(weights: dict) -> bytes:
    parts = [struct.pack("<I", len(weights))]
    for name in sorted(weights):
        arr = np.ascontiguousarray(weights[name], dtype="<f8")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", arr.ndim))
        for dim in arr.shape:
            parts.append(struct.pack("<q", dim))
        parts.append(arr.tobytes())
    return b"".join(parts)


def _unpack_weights(payload: bytes) -> dict:
    view = memoryview(payload)
    (count,) = struct.unpack_from("<I", view, 0)
    offset = 4
    out = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", view, offset)
        offset += 2
        name = bytes(view[offset : offset + name_len]).decode("utf-8")
        offset += name_len
        (ndim,) = struct.unpack_from("<B", view, offset)
        offset += 1
        shape = []
        for _ in range(ndim):
            (dim,) = struct.unpack_from("<q", view, offset)
            offset += 8
            shape.append(dim)
        size = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(view, dtype="<f8", count=size, offset=offset).reshape(shape)
        offset += size * 8
        out[name] = arr.astype(np.float64)
    return out


def _pack_graph(graph: SimilarityGraph) -> bytes:
    header = struct.pack(
        "<Bdqq", _METRIC_IDS[graph.metric], graph.threshold, graph.n, graph.indices.size
    )
    return b"".join(
        [
            header,
            np.ascontiguousarray(graph.indptr, dtype="<i8").tobytes(),
            np.ascontiguousarray(graph.indices, dtype="<i8").tobytes(),
            np.ascontiguousarray(graph.weights, dtype="<f8").tobytes(),
        ]
    )


def _unpack_graph(payload: bytes, features: np.ndarray) -> SimilarityGraph:
    metric_id, threshold, n, e = struct.unpack_from("<Bdqq", payload, 0)
    offset = struct.calcsize("<Bdqq")
    indptr = np.frombuffer(payload, dtype="<i8", count=n + 1, offset=offset).astype(np.int64)
    offset += (n + 1) * 8
    indices = np.frombuffer(payload, dtype="<i8", count=e, offset=offset).astype(np.int64)
    offset += e * 8
    weights = np.frombuffer(payload, dtype="<f8", count=e, offset=offset).astype(np.float64)
    if features.shape[0] != n:
        raise BundleError("graph/feature section size mismatch")
    return SimilarityGraph(
        features=features,
        indptr=indptr,
        indices=indices,
        weights=weights,
        metric=_METRIC_FROM_ID[metric_id],
        threshold=threshold,
    )


def _pack_features(bundle: ModelBundle) -> bytes:
    X = np.ascontiguousarray(bundle.graph.features, dtype="<f8")
    return b"".join(
        [
            struct.pack("<qq", X.shape[0], X.shape[1]),
            X.tobytes(),
            np.ascontiguousarray(bundle.labels, dtype="<i8").tobytes(),
            np.ascontiguousarray(bundle.synthetic, dtype="u1").tobytes(),
        ]
    )


def _unpack_features(payload: bytes) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n, d = struct.unpack_from("<qq", payload, 0)
    offset = 16
    X = np.frombuffer(payload, dtype="<f8", count=n * d, offset=offset).reshape(n, d).astype(np.float64)
    offset += n * d * 8
    labels = np.frombuffer(payload, dtype="<i8", count=n, offset=offset).astype(np.int64)
    offset += n * 8
    synthetic = np.frombuffer(payload, dtype="u1", count=n, offset=offset).astype(bool)
    return X, labels, synthetic


def save_bundle(bundle: ModelBundle, path) -> None:
    sections = [
        (
            b"MSPC",
            _json_bytes(
                {
                    "spec": bundle.spec.to_dict(),
                    "train_config": bundle.train_config,
                    "label_codes": bundle.label_codes,
                    "bundle_version": bundle.version,
                }
            ),
        ),
        (b"WGTB", _pack_weights(bundle.weights_best)),
        (b"WGTF", _pack_weights(bundle.weights_final)),
        (
            b"XFRM",
            _json_bytes({"encoders": bundle.encoders.to_dict(), "scaler": bundle.scaler.to_dict()}),
        ),
        (b"GRPH", _pack_graph(bundle.graph)),
        (b"FEAT", _pack_features(bundle)),
        (b"RPRT", _json_bytes(bundle.history)),
    ]
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", FORMAT_VERSION)
    for tag, payload in sections:
        blob += tag
        blob += struct.pack("<Q", len(payload))
        blob += payload
    blob += struct.pack("<I", zlib.crc32(bytes(blob)))
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def load_bundle(path) -> ModelBundle:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise BundleError("not a TGB1 bundle")
    (stored_crc,) = struct.unpack_from("<I", blob, len(blob) - 4)
    if zlib.crc32(blob[:-4]) != stored_crc:
        raise BundleChecksumError("bundle checksum mismatch; file is corrupt")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version > FORMAT_VERSION:
        raise BundleError(f"unsupported bundle format version {version}")

    sections = {}
    offset = 8
    end = len(blob) - 4
    while offset < end:
        tag = blob[offset : offset + 4]
        (length,) = struct.unpack_from("<Q", blob, offset + 4)
        offset += 12
        sections[tag] = blob[offset : offset + length]
        offset += length
    required = {b"MSPC", b"WGTB", b"WGTF", b"XFRM", b"GRPH", b"FEAT", b"RPRT"}
    missing = required - set(sections)
    if missing:
        raise BundleError(f"bundle missing sections: {sorted(t.decode() for t in missing)}")

    meta = json.loads(sections[b"MSPC"])
    transforms = json.loads(sections[b"XFRM"])
    X, labels, synthetic = _unpack_features(sections[b"FEAT"])
    graph = _unpack_graph(sections[b"GRPH"], X)
    return ModelBundle(
        spec=ModelSpec.from_dict(meta["spec"]),
        weights_best=_unpack_weights(sections[b"WGTB"]),
        weights_final=_unpack_weights(sections[b"WGTF"]),
        encoders=EncoderState.from_dict(transforms["encoders"]),
        scaler=ScalerState.from_dict(transforms["scaler"]),
        graph=graph,
        labels=labels,
        synthetic=synthetic,
        label_codes={k: int(v) for k, v in meta["label_codes"].items()},
        train_config=meta["train_config"],
        history=json.loads(sections[b"RPRT"]),
        version=meta["bundle_version"],
    )


def bundle_checksum(path) -> str:
    """Hex CRC32 of the bundle file (the stored trailing checksum)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4:
        raise BundleError("truncated bundle")
    (crc,) = struct.unpack_from("<I", blob, len(blob) - 4)
    return f"{crc:08x}"
