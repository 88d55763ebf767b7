"""Similarity graph construction, thresholds, and inductive insertion."""
import numpy as np
import pytest

from triagegraph import simgraph
from triagegraph.simgraph import Metric, SimgraphError, Threshold


def test_cosine_identical_direction():
    assert simgraph.cosine_similarity([1.0, 0.0], [1.0, 0.0]) == 1.0


def test_cosine_orthogonal():
    assert simgraph.cosine_similarity([1.0, 0.0], [0.0, 1.0]) == 0.0


def test_cosine_reference_value():
    # direct formula evaluation: 32 / (sqrt(14) * sqrt(77))
    got = simgraph.cosine_similarity([1.0, 2.0, 3.0], [4.0, 5.0, 6.0])
    assert got == pytest.approx(0.974632, abs=1e-6)


def test_cosine_zero_vector_errors():
    with pytest.raises(SimgraphError):
        simgraph.cosine_similarity([0.0, 0.0], [1.0, 0.0])


def test_distances_3_4_5():
    assert simgraph.euclidean_distance([0.0, 0.0], [3.0, 4.0]) == 5.0
    assert simgraph.manhattan_distance([0.0, 0.0], [3.0, 4.0]) == 7.0


def test_metric_axioms_on_random_vectors():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        a, b, c = rng.normal(size=(3, 5))
        for dist in (simgraph.euclidean_distance, simgraph.manhattan_distance):
            assert dist(a, b) == pytest.approx(dist(b, a), rel=1e-12)
            assert dist(a, a) == 0.0
            assert dist(a, c) <= dist(a, b) + dist(b, c) + 1e-12
        assert simgraph.cosine_similarity(a, b) == pytest.approx(simgraph.cosine_similarity(b, a), rel=1e-12)


def test_mean_pairwise_trivial_cases():
    two_identical = np.array([[1.0, 2.0], [1.0, 2.0]])
    assert simgraph.mean_pairwise(two_identical, Metric.COSINE).value == pytest.approx(1.0)
    rows = np.array([[0.0, 0.0], [3.0, 4.0]])
    assert simgraph.mean_pairwise(rows, Metric.EUCLIDEAN).value == pytest.approx(5.0)
    with pytest.raises(SimgraphError):
        simgraph.mean_pairwise(np.array([[1.0, 2.0]]), Metric.EUCLIDEAN)


def test_mean_pairwise_matches_bruteforce():
    rng = np.random.default_rng(1)
    X = rng.random((4, 3)) + 0.1
    for metric in Metric:
        vals = [simgraph.metric_value(metric, X[i], X[j]) for i in range(4) for j in range(i + 1, 4)]
        assert simgraph.mean_pairwise(X, metric).value == pytest.approx(np.mean(vals), abs=1e-12)


def test_build_graph_exact_edge_set():
    # pairwise cosine approx {(0,1): 0.9997, (0,2): 0.7746, (1,2): 0.7843}
    X = np.array([[1.0, 1.0], [1.0, 0.9], [1.0, 0.1]])
    sims = {
        (i, j): simgraph.cosine_similarity(X[i], X[j]) for i in range(3) for j in range(i + 1, 3)
    }
    tau = 0.9
    g = simgraph.build_graph(X, Metric.COSINE, tau)
    expected_edges = {pair for pair, v in sims.items() if v > tau}
    got_edges = set()
    for i in range(3):
        for j in g.neighbors(i)[0]:
            got_edges.add((min(i, int(j)), max(i, int(j))))
    assert got_edges == expected_edges == {(0, 1)}
    idx, w = g.neighbors(0)
    assert w[list(idx).index(1)] == pytest.approx(sims[(0, 1)], abs=1e-12)


def test_build_graph_threshold_above_all_gives_no_edges():
    rng = np.random.default_rng(2)
    X = rng.random((10, 4)) + 0.1
    g = simgraph.build_graph(X, Metric.COSINE, 1.0)
    assert g.indices.size == 0 and g.n == 10


def test_build_graph_infinite_distance_threshold_is_complete():
    rng = np.random.default_rng(3)
    X = rng.random((8, 4))
    g = simgraph.build_graph(X, Metric.EUCLIDEAN, np.inf)
    assert g.n_edges == 8 * 7 // 2


def test_graph_validate_symmetry_and_threshold(small_pre):
    X = small_pre.matrix.X[:150]
    for metric in Metric:
        tau = simgraph.mean_pairwise(X, metric)
        g = simgraph.build_graph(X, metric, tau)
        g.validate()  # symmetry + threshold soundness + sorted rows
        assert all(simgraph.Metric.COSINE.clears(v, 0) for v in [1])  # sanity of helper


def test_cosine_weights_within_unit_interval(small_pre):
    X = small_pre.matrix.X[:200]
    tau = simgraph.mean_pairwise(X, Metric.COSINE)
    g = simgraph.build_graph(X, Metric.COSINE, tau)
    assert g.weights.size > 0
    assert g.weights.min() >= 0.0 and g.weights.max() <= 1.0


def test_insert_copy_of_existing_node():
    rng = np.random.default_rng(4)
    X = rng.random((30, 5)) + 0.05
    tau = simgraph.mean_pairwise(X, Metric.COSINE)
    g = simgraph.build_graph(X, Metric.COSINE, tau)
    node = 7
    g2, new_id = simgraph.insert_node(g, X[node])
    assert new_id == 30
    new_neighbors = set(g2.neighbors(new_id)[0])
    old_neighbors = set(g.neighbors(node)[0])
    assert old_neighbors <= new_neighbors
    assert node in new_neighbors  # identical vectors always clear tau < 1
    # existing edges untouched
    for i in range(30):
        old_idx, old_w = g.neighbors(i)
        new_idx, new_w = g2.neighbors(i)
        keep = new_idx != new_id
        assert np.array_equal(new_idx[keep], old_idx)
        assert np.array_equal(new_w[keep], old_w)


def test_insert_zero_distance_twin_weight():
    X = np.array([[0.0, 0.0], [3.0, 4.0]])
    g = simgraph.build_graph(X, Metric.EUCLIDEAN, 6.0)
    g2, new_id = simgraph.insert_node(g, np.array([3.0, 4.0]))
    idx, w = g2.neighbors(new_id)
    assert w[list(idx).index(1)] == 0.0


def test_insert_equals_rebuild():
    rng = np.random.default_rng(5)
    X = rng.random((100, 6)) + 0.02
    x_new = rng.random(6) + 0.02
    for metric in Metric:
        tau = simgraph.mean_pairwise(X, metric)
        g = simgraph.build_graph(X, metric, tau)
        inserted, new_id = simgraph.insert_node(g, x_new)
        rebuilt = simgraph.build_graph(np.vstack([X, x_new[None, :]]), metric, tau.value)
        assert new_id == 100
        assert np.array_equal(inserted.indptr, rebuilt.indptr)
        assert np.array_equal(inserted.indices, rebuilt.indices)
        assert np.allclose(inserted.weights, rebuilt.weights, atol=1e-12)
        inserted.validate()


def test_insert_dimension_mismatch():
    g = simgraph.build_graph(np.eye(3) + 0.1, Metric.COSINE, 0.5)
    with pytest.raises(SimgraphError):
        simgraph.insert_node(g, np.ones(5))


def test_threshold_type_invariants():
    with pytest.raises(SimgraphError):
        Threshold(value=float("nan"), provenance="dataset-mean")
    with pytest.raises(SimgraphError):
        Threshold(value=1.0, provenance="guessed")
    with pytest.raises(SimgraphError):
        simgraph.build_graph(np.eye(3) + 0.1, Metric.EUCLIDEAN, -1.0)
