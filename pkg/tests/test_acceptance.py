"""Acceptance suite: one test per release criterion, at stated tolerances.

Each test prints one PASS/FAIL line (visible with ``pytest -s`` or in the
captured output). The directional grid check runs the complete pipeline on
a reduced-size synthetic replica by default so it finishes on one core; set
TRIAGEGRAPH_ACCEPT_FULL=1 to run it at the full 6962-row scale (budget:
under two hours on a desktop-class machine).
"""
import json
import os
import threading
import time
from contextlib import contextmanager

import numpy as np
import pytest

from triagegraph import baselines, datagen, gnn, ingest, kernels, numcore as nc, simgraph
from triagegraph.datagen import two_cluster_features
from triagegraph.ingest import FeatureMatrix, split_stratified
from triagegraph.simgraph import Metric

from tests.conftest import make_small_csv


@contextmanager
def criterion(name, budget_seconds=None):
    start = time.time()
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {name}: FAIL ({time.time() - start:.1f}s)")
        raise
    elapsed = time.time() - start
    print(f"ACCEPTANCE {name}: PASS ({elapsed:.1f}s)")
    if budget_seconds is not None:
        assert elapsed < budget_seconds, f"{name} exceeded its {budget_seconds}s budget"


@pytest.fixture(scope="module")
def full_replica(tmp_path_factory):
    path = tmp_path_factory.mktemp("acceptance") / "replica.csv"
    datagen.synth_patient_dataset(path)  # 6962 rows, 6551 clean, 1886 Unknown
    return path


def test_dataset_fidelity(full_replica):
    with criterion("dataset-fidelity", budget_seconds=10):
        records = ingest.load_dataset(full_replica)
        assert len(records) == 6962
        cleaned, stats = ingest.clean(records)
        assert len(cleaned) == 6551
        assert stats.dropped_null + stats.dropped_duplicate == 6962 - 6551
        _, imputed, _ = ingest.impute_smoking_unknown(cleaned)
        assert imputed == 1886


def test_balance_and_range(full_replica):
    with criterion("balance-and-range", budget_seconds=60):
        records = ingest.load_dataset(full_replica)
        result = ingest.run_preprocess(records, seed=0)
        counts = [int(c) for c in np.bincount(result.matrix.y, minlength=4)]
        assert len(set(counts)) == 1, f"unbalanced post-SMOTE counts {counts}"
        X = result.matrix.X
        assert np.abs(X.min(axis=0)).max() <= 1e-12
        assert np.abs(X.max(axis=0) - 1.0).max() <= 1e-12


def test_graph_soundness(full_replica):
    with criterion("graph-soundness", budget_seconds=60):
        records = ingest.load_dataset(full_replica)
        result = ingest.run_preprocess(records, seed=0)
        rng = np.random.default_rng(0)
        sample = rng.choice(result.matrix.n, size=501, replace=False)
        X, x_new = result.matrix.X[sample[:500]], result.matrix.X[sample[500]]
        for metric in Metric:
            tau = simgraph.mean_pairwise(X, metric)
            graph = simgraph.build_graph(X, metric, tau)
            graph.validate()  # symmetry + threshold soundness on every edge
            # sampled non-edges must fail the threshold inequality
            neighbor_sets = [set(graph.neighbors(i)[0]) for i in range(500)]
            for _ in range(2000):
                i, j = rng.integers(0, 500, size=2)
                if i != j and j not in neighbor_sets[i]:
                    v = simgraph.metric_value(metric, X[i], X[j])
                    assert not metric.clears(v, graph.threshold)
            inserted, new_id = simgraph.insert_node(graph, x_new)
            rebuilt = simgraph.build_graph(np.vstack([X, x_new[None, :]]), metric, tau.value)
            assert np.array_equal(inserted.indptr, rebuilt.indptr)
            assert np.array_equal(inserted.indices, rebuilt.indices)


def _preset_grad_errors():
    rng = np.random.default_rng(7)
    X = rng.random((12, 16)) * 0.9 + 0.05
    y = rng.integers(0, 4, size=12)
    g = simgraph.build_graph(X, Metric.COSINE, simgraph.mean_pairwise(X, Metric.COSINE))
    ctx = gnn.GraphContext(g, "affinity")
    errors = {}
    for name, spec in gnn.preset_architectures().items():
        model = gnn.Model.init(spec, seed=1)
        names = list(model.params)

        def f(tape, *tensors, _m=model, _n=names):
            for pname, t in zip(_n, tensors):
                _m.params[pname] = t
            return nc.cross_entropy(tape, _m.forward(tape, ctx), y)

        errors[name] = nc.grad_check(f, [model.params[n].data.copy() for n in names])
    return errors


def test_numeric_correctness():
    with criterion("numeric-correctness", budget_seconds=60):
        # sparse message passing against the dense oracle
        rng = np.random.default_rng(1)
        for _ in range(5):
            X = rng.random((15, 6)) + 0.05
            g = simgraph.build_graph(X, Metric.COSINE, simgraph.mean_pairwise(X, Metric.COSINE))
            ctx = gnn.GraphContext(g)
            op = ctx.gcn_operator()
            H = rng.normal(size=(15, 6))
            dense = op.to_dense()
            got = kernels.spmm(op.indptr, op.indices, op.data, H)
            assert np.abs(got - dense @ H).max() <= 1e-12

        errors = _preset_grad_errors()
        for name, err in errors.items():
            assert err < 1e-4, f"{name} gradient check failed: {err}"


def test_learning_sanity():
    with criterion("learning-sanity", budget_seconds=300):
        X, y = two_cluster_features(200, seed=0)
        tau = simgraph.mean_pairwise(X, Metric.COSINE)
        graph = simgraph.build_graph(X, Metric.COSINE, tau)
        masks = split_stratified(FeatureMatrix.from_arrays(X, y), 0.3, 0.3, seed=0)
        for name, spec in gnn.preset_architectures().items():
            trained = gnn.train(spec, graph, y, masks, gnn.TrainConfig(epochs=200, seed=0))
            best = max(trained.history["train_accuracy"])
            assert best >= 0.95, f"{name} reached only {best:.3f} train accuracy"
        # determinism per seed
        spec = gnn.preset_architectures()["GCN_EUC"]
        a = gnn.train(spec, graph, y, masks, gnn.TrainConfig(epochs=40, seed=9))
        b = gnn.train(spec, graph, y, masks, gnn.TrainConfig(epochs=40, seed=9))
        assert a.history["train_loss"] == b.history["train_loss"]


def _full_pipeline_grid(csv_path, seeds=(0, 1, 2)):
    """Run preprocess -> graphs -> all presets + baselines for each seed."""
    presets = gnn.preset_architectures()
    gnn_acc = {(p, m.value): [] for p in presets for m in Metric}
    baseline_acc = {"KNN": [], "SVM": []}
    majority = []
    for seed in seeds:
        records = ingest.load_dataset(csv_path)
        result = ingest.run_preprocess(records, seed=seed)
        matrix, masks = result.matrix, result.masks
        train_y, test_y = matrix.y[masks.train], matrix.y[masks.test]
        top = np.argmax(np.bincount(train_y, minlength=4))
        majority.append(float(np.mean(test_y == top)))
        for metric in Metric:
            tau = simgraph.mean_pairwise(matrix.X, metric)
            graph = simgraph.build_graph(matrix.X, metric, tau)
            for pname, spec in presets.items():
                trained = gnn.train(spec, graph, matrix.y, masks, gnn.TrainConfig(seed=seed))
                pred, _ = gnn.predict_transductive(trained)
                gnn_acc[(pname, metric.value)].append(float(np.mean(pred[masks.test] == test_y)))
        knn = baselines.knn_fit(matrix.X[masks.train], train_y, k=5)
        baseline_acc["KNN"].append(float(np.mean(baselines.knn_predict_batch(knn, matrix.X[masks.test]) == test_y)))
        svm = baselines.svm_train(matrix.X[masks.train], train_y, baselines.SvmConfig(seed=seed))
        baseline_acc["SVM"].append(float(np.mean(baselines.svm_predict_batch(svm, matrix.X[masks.test]) == test_y)))
    return gnn_acc, baseline_acc, majority


def test_directional_improvement(tmp_path):
    """Every model beats the majority-class baseline by >= 10 points,
    seed-averaged; the architecture ordering is printed, not asserted."""
    budget = 7200
    with criterion("directional-improvement", budget_seconds=budget):
        csv_path = tmp_path / "grid.csv"
        if os.environ.get("TRIAGEGRAPH_ACCEPT_FULL") == "1":
            datagen.synth_patient_dataset(csv_path)
        else:
            make_small_csv(csv_path)
        gnn_acc, baseline_acc, majority = _full_pipeline_grid(csv_path)
        floor = float(np.mean(majority)) + 0.10

        rows = [(f"{p} on {m}", float(np.mean(acc))) for (p, m), acc in gnn_acc.items()]
        rows += [(name, float(np.mean(acc))) for name, acc in baseline_acc.items()]
        print(f"\n  majority-class baseline: {np.mean(majority):.3f} (floor {floor:.3f})")
        for label, acc in sorted(rows, key=lambda r: -r[1]):
            print(f"  {label}: {acc:.3f}")
        sage_mean = np.mean([np.mean(gnn_acc[("SAGE", m.value)]) for m in Metric])
        print(f"  observation only: GraphSAGE mean {sage_mean:.3f} vs baselines "
              f"KNN {np.mean(baseline_acc['KNN']):.3f} / SVM {np.mean(baseline_acc['SVM']):.3f}")

        for label, acc in rows:
            assert acc >= floor, f"{label} accuracy {acc:.3f} below floor {floor:.3f}"


def test_baseline_oracles():
    with criterion("baseline-oracle"):
        from tests.test_baselines import brute_knn

        rng = np.random.default_rng(3)
        X = rng.random((400, 16))
        y = rng.integers(0, 4, size=400)
        Q = rng.random((500, 16))
        model = baselines.knn_fit(X, y, k=5)
        got = baselines.knn_predict_batch(model, Q)
        expect = np.array([brute_knn(X, y, q, 5) for q in Q])
        assert np.array_equal(got, expect)

        blob = rng.normal(size=(60, 2))
        Xs = np.vstack([blob + (-5, 0), blob + (5, 0)])
        ys = np.array([0] * 60 + [1] * 60)
        svm = baselines.svm_train(Xs, ys, baselines.SvmConfig(seed=0))
        assert np.array_equal(baselines.svm_predict_batch(svm, Xs), ys)


def test_inductive_consistency(inductive_bundles):
    with criterion("inductive-consistency"):
        rng = np.random.default_rng(5)
        for arch in ("GCN", "GAT", "SAGE_MEAN"):
            bundle, records, _ = inductive_bundles[arch]
            trans_pred, _ = gnn.predict_transductive(bundle)
            for node in rng.choice(bundle.graph.n, size=30, replace=False):
                verdict = gnn.predict_inductive(bundle, records[int(node)])
                assert int(verdict.level) == int(trans_pred[node]), (
                    f"{arch}: node {node} inductive {verdict.level} != transductive {trans_pred[node]}"
                )
        bundle, records, _ = inductive_bundles["SAGE_MAX"]
        _, trans_scores = gnn.predict_transductive(bundle)
        for node in rng.choice(bundle.graph.n, size=30, replace=False):
            verdict = gnn.predict_inductive(bundle, records[int(node)])
            deviation = np.abs(verdict.scores - trans_scores[node]).max()
            assert deviation < 1e-6, f"SAGE_MAX node {node}: score deviation {deviation}"


def test_service_contract(service_bundle):
    with criterion("service-contract"):
        from fastapi.testclient import TestClient

        from triagegraph import service
        from tests.test_service import FixedClock, assert_matches_golden, record_body

        app = service.create_app(
            service_bundle["bundle"], bundle_path=str(service_bundle["path"]), clock=FixedClock()
        )
        with TestClient(app) as client:
            assert_matches_golden("healthz.json", client.get("/healthz").json())
            assert_matches_golden("model_card.json", client.get("/api/v1/model").json())
            first = client.post("/api/v1/triage", json=record_body(service_bundle["records"][0]))
            assert first.status_code == 201
            assert_matches_golden("triage_response.json", first.json())
            assert_matches_golden("queue_response.json", client.get("/api/v1/queue").json())

        # fresh app for the concurrency determinism check
        app2 = service.create_app(service_bundle["bundle"], clock=FixedClock())
        with TestClient(app2) as client:
            body = record_body(service_bundle["records"][3])
            results = [None] * 100
            errors = []

            def fire(i):
                try:
                    resp = client.post("/api/v1/triage", json=body)
                    assert resp.status_code == 201
                    results[i] = resp.json()
                except Exception as exc:
                    errors.append(exc)

            threads = [threading.Thread(target=fire, args=(i,)) for i in range(100)]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
            assert not errors
            verdicts = {json.dumps(r["verdict"], sort_keys=True, separators=(",", ":")) for r in results}
            assert len(verdicts) == 1
