"""Shared fixtures: synthetic datasets and pre-trained fixture bundles.

Everything expensive is session-scoped; all randomness is seeded so the
fixtures are bit-identical across runs.
"""
from __future__ import annotations

import pytest

from triagegraph import datagen, gnn, ingest, simgraph

SMALL_CLASS_COUNTS = {"Red": 60, "Orange": 81, "Yellow": 168, "Green": 111}


def make_small_csv(path, seed: int = 7):
    return datagen.synth_patient_dataset(
        path,
        class_counts=SMALL_CLASS_COUNTS,
        unknown_smoking=120,
        n_null_rows=20,
        n_duplicate_rows=9,
        seed=seed,
    )


@pytest.fixture(scope="session")
def small_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "small.csv"
    make_small_csv(path)
    return path


@pytest.fixture(scope="session")
def small_pre(small_csv):
    records = ingest.load_dataset(small_csv)
    return ingest.run_preprocess(records, seed=0)


def duplicate_pair_records(n_distinct: int = 100, seed: int = 11):
    """Well-separated labeled records where every patient appears twice.

    The twin guarantees every node has an identical-feature neighbor, which
    pins down the inductive-vs-transductive comparison for max-pool
    aggregation exactly; the wide class separation keeps trained models
    confident so the twin edge cannot flip an argmax.
    """
    per_class = n_distinct // 4
    counts = {
        "Red": per_class,
        "Orange": per_class,
        "Yellow": per_class,
        "Green": n_distinct - 3 * per_class,
    }
    base = datagen.synth_records(counts, seed=seed, subclusters=2, separation=2.5)
    doubled = []
    for r in base:
        doubled.append(r)
        doubled.append(r)
    return doubled


def build_fixture_bundle(
    records, spec, *, epochs=120, seed=0, metric=simgraph.Metric.COSINE, threshold=None
):
    """Ingest (without SMOTE), build a graph, and train one model.

    ``threshold=None`` uses the dataset mean; fixtures that need a
    cluster-pure graph pass a stricter user-supplied value.
    """
    imputed, _, _ = ingest.impute_smoking_unknown(records)
    encoders = ingest.fit_encoders(imputed)
    X, y = ingest.apply_encoders(imputed, encoders)
    matrix = ingest.FeatureMatrix.from_arrays(X, y)
    scaler = ingest.fit_scaler(matrix)
    matrix, _ = ingest.apply_scaler(matrix, scaler)
    masks = ingest.split_stratified(matrix, 0.3, 0.3, seed=seed)
    tau = threshold if threshold is not None else simgraph.mean_pairwise(matrix.X, metric)
    graph = simgraph.build_graph(matrix.X, metric, tau)
    trained = gnn.train(
        spec,
        graph,
        matrix.y,
        masks,
        gnn.TrainConfig(epochs=epochs, seed=seed),
        encoders=encoders,
        scaler=scaler,
        synthetic=matrix.synthetic,
    )
    return trained, imputed, masks


def sage_spec(aggregator: str) -> gnn.ModelSpec:
    dims = [(16, 64), (64, 32), (32, 16), (16, 8), (8, 4)]
    layers = tuple(
        gnn.LayerSpec(
            kind=gnn.SAGE,
            in_dim=a,
            out_dim=b,
            aggregator=aggregator,
            activation="linear" if i == len(dims) - 1 else "relu",
        )
        for i, (a, b) in enumerate(dims)
    )
    return gnn.ModelSpec(preset=f"SAGE_{aggregator.upper()}", layers=layers)


@pytest.fixture(scope="session")
def dup_records():
    return duplicate_pair_records()


@pytest.fixture(scope="session")
def inductive_bundles(dup_records):
    presets = gnn.preset_architectures()
    out = {}
    for name, spec in (
        ("GCN", presets["GCN_COS_MAN"]),
        ("GAT", presets["GAT"]),
        ("SAGE_MEAN", sage_spec("mean")),
        ("SAGE_MAX", sage_spec("max")),
    ):
        # the 0.99 cosine threshold keeps the fixture graph class-pure, so
        # every model trains to confident verdicts the twin edge cannot flip
        bundle, records, masks = build_fixture_bundle(dup_records, spec, epochs=150, threshold=0.99)
        out[name] = (bundle, records, masks)
    return out


@pytest.fixture(scope="session")
def service_bundle(tmp_path_factory):
    """A small trained bundle saved to disk for service/CLI tests."""
    from triagegraph import bundle as bundle_io

    records = duplicate_pair_records(n_distinct=60, seed=5)
    spec = gnn.preset_architectures()["GCN_EUC"]
    trained, recs, masks = build_fixture_bundle(records, spec, epochs=60, metric=simgraph.Metric.COSINE)
    path = tmp_path_factory.mktemp("bundle") / "fixture.tgb"
    bundle_io.save_bundle(trained, path)
    return {"bundle": trained, "path": path, "records": recs, "masks": masks}
