"""Tests for Laplacians, spectral clustering and cut metrics"""
import itertools

import numpy as np
import pytest

from app.core.exceptions import DegenerateCutError, ParameterError
from app.schemas.schemas import Hyperplane, Partition
from app.services.graph_service import build_knn_graph
from app.services.spectral_service import (
    canonical_labels,
    cut_metrics,
    cut_ratio_stats,
    fiedler_split,
    hyperplane_partition,
    laplacian,
    read_partition,
    spectral_cluster,
    write_partition,
)
from tests.factories import clique_edges, graph_from_edges, line_dataset, path_graph


def _random_graph(n=12, p=0.4, seed=0):
    rng = np.random.default_rng(seed)
    edges = [(u, v) for u, v in itertools.combinations(range(n), 2) if rng.random() < p]
    return graph_from_edges(n, edges, rng.uniform(0.1, 2.0, size=len(edges)))


def _barbell():
    edges = clique_edges(range(4)) + clique_edges(range(4, 8)) + [(3, 4)]
    return graph_from_edges(8, edges)


def _brute_force_ratiocut(graph):
    best = np.inf
    for mask in range(1, 2 ** (graph.n - 1)):
        assignment = [(mask >> i) & 1 for i in range(graph.n)]
        best = min(best, cut_metrics(graph, Partition(assignment=assignment, K=2)).ratio_cut)
    return best


def test_single_edge_laplacian():
    graph = graph_from_edges(2, [(0, 1)], [2.5])
    np.testing.assert_allclose(laplacian(graph), [[2.5, -2.5], [-2.5, 2.5]])


def test_laplacian_rows_sum_to_zero():
    L = laplacian(_random_graph())
    np.testing.assert_allclose(L.sum(axis=1), 0.0, atol=1e-12)
    vals = np.linalg.eigvalsh(L)
    assert vals[0] == pytest.approx(0.0, abs=1e-9)
    assert np.all(vals > -1e-9)


def test_disjoint_edges_have_two_zero_eigenvalues():
    vals = np.linalg.eigvalsh(laplacian(graph_from_edges(4, [(0, 1), (2, 3)])))
    assert np.sum(np.abs(vals) < 1e-9) == 2


def test_normalized_laplacian_isolated_node():
    L = laplacian(graph_from_edges(3, [(0, 1)]), normalized=True)
    np.testing.assert_allclose(L[2], [0.0, 0.0, 1.0])
    np.testing.assert_allclose(L, L.T)


def test_two_cliques_are_recovered(two_cliques):
    graph = build_knn_graph(two_cliques, 10)
    partition = spectral_cluster(graph, 2)
    np.testing.assert_array_equal(partition.assignment, two_cliques.labels)
    assert cut_metrics(graph, partition).cut == 0.0


def test_path_split_in_the_middle():
    graph = path_graph(4)
    partition = spectral_cluster(graph, 2)
    assert partition.assignment.tolist() == [0, 0, 1, 1]
    assert cut_metrics(graph, partition).cut == 1.0


@pytest.mark.parametrize("graph", [path_graph(4), path_graph(6), _barbell(),
                                   graph_from_edges(6, clique_edges(range(3)) + clique_edges(range(3, 6)))])
def test_fiedler_split_matches_brute_force(graph):
    partition, objective = fiedler_split(graph)
    assert objective == pytest.approx(_brute_force_ratiocut(graph), abs=1e-9)
    assert cut_metrics(graph, partition).ratio_cut == pytest.approx(objective, abs=1e-9)


@pytest.mark.parametrize("graph", [path_graph(5), _barbell(),
                                   graph_from_edges(6, clique_edges(range(3)) + clique_edges(range(3, 6)))])
def test_spectral_cluster_reaches_brute_force_ratiocut(graph):
    partition = spectral_cluster(graph, 2, seed=0)
    assert cut_metrics(graph, partition).ratio_cut == pytest.approx(_brute_force_ratiocut(graph), abs=1e-9)


def test_normalized_split_of_barbell():
    partition = spectral_cluster(_barbell(), 2, normalized=True)
    assert partition.assignment.tolist() == [0, 0, 0, 0, 1, 1, 1, 1]


def test_three_components_with_kmeans():
    edges = clique_edges(range(5)) + clique_edges(range(5, 10)) + clique_edges(range(10, 15))
    partition = spectral_cluster(graph_from_edges(15, edges), 3, seed=4)
    assert partition.assignment.tolist() == [0] * 5 + [1] * 5 + [2] * 5


def test_spectral_cluster_rejects_bad_k():
    with pytest.raises(ParameterError):
        spectral_cluster(path_graph(4), 1)
    with pytest.raises(ParameterError):
        spectral_cluster(path_graph(4), 5)


def test_canonical_labels_follow_first_appearance():
    assert canonical_labels(np.array([2, 2, 0, 1, 0])).tolist() == [0, 0, 1, 2, 1]


def test_cycle_cut_metrics():
    graph = graph_from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0)])
    report = cut_metrics(graph, Partition(assignment=[0, 0, 1, 1], K=2))
    assert report.cut == 2.0
    assert report.ratio_cut == pytest.approx(2.0)
    assert report.ncut == pytest.approx(1.0)
    assert report.volumes == [4.0, 4.0]


def test_multiway_metrics_on_a_path():
    report = cut_metrics(path_graph(6), Partition(assignment=[0, 0, 1, 1, 2, 2], K=3))
    assert report.cut == 2.0
    assert report.boundary_cuts == [1.0, 2.0, 1.0]
    # sum of cut(C_i, rest) / |C_i|
    assert report.ratio_cut == pytest.approx(1 / 2 + 2 / 2 + 1 / 2)
    # sum of cut(C_i, rest) / vol(C_i), volumes 3, 4, 3
    assert report.ncut == pytest.approx(1 / 3 + 2 / 4 + 1 / 3)


def test_empty_cluster_is_rejected():
    with pytest.raises(DegenerateCutError):
        cut_metrics(path_graph(3), Partition(assignment=[0, 0, 0], K=2))


def test_cut_equals_laplacian_quadratic_form():
    rng = np.random.default_rng(2)
    for seed in range(100):
        graph = _random_graph(n=int(rng.integers(2, 13)), p=float(rng.uniform(0.2, 0.9)), seed=seed)
        indicator = rng.integers(0, 2, size=graph.n)
        indicator[0], indicator[-1] = 0, 1
        cut = cut_metrics(graph, Partition(assignment=indicator, K=2)).cut
        assert cut == pytest.approx(indicator @ laplacian(graph) @ indicator, abs=1e-9)


def test_metrics_ignore_cluster_ids():
    graph = _random_graph(seed=3)
    assignment = np.arange(graph.n) % 3
    a = cut_metrics(graph, Partition(assignment=assignment, K=3))
    b = cut_metrics(graph, Partition(assignment=(assignment + 1) % 3, K=3))
    assert a.cut == pytest.approx(b.cut)
    assert a.ratio_cut == pytest.approx(b.ratio_cut)
    assert a.ncut == pytest.approx(b.ncut)


def test_ratiocut_lower_bound():
    graph = _random_graph(seed=5)
    rng = np.random.default_rng(6)
    for _ in range(20):
        indicator = rng.integers(0, 2, size=graph.n)
        if indicator.min() == indicator.max():
            continue
        report = cut_metrics(graph, Partition(assignment=indicator, K=2))
        assert report.ratio_cut >= 4.0 * report.cut / graph.n - 1e-12


def test_hyperplane_sides():
    partition = hyperplane_partition(line_dataset([-1.0, 2.0]), [1.0], 0.0)
    assert partition.assignment.tolist() == [0, 1]


def test_points_on_hyperplane_use_seeded_coin():
    dataset = line_dataset([-1.0] + [0.0] * 20 + [1.0])
    a = hyperplane_partition(dataset, Hyperplane(normal=[1.0], offset=0.0), seed=3)
    b = hyperplane_partition(dataset, Hyperplane(normal=[1.0], offset=0.0), seed=3)
    np.testing.assert_array_equal(a.assignment, b.assignment)
    assert a.assignment[0] == 0 and a.assignment[-1] == 1
    assert 0 < a.assignment[1:-1].sum() < 20


def test_one_sided_hyperplane_is_degenerate():
    partition = hyperplane_partition(line_dataset([1.0, 2.0, 3.0]), [1.0], 10.0)
    assert partition.is_degenerate


def test_cut_ratio_of_identical_hyperplanes(two_cliques):
    graph = build_knn_graph(two_cliques, 10)
    plane = Hyperplane.axis_aligned(0, 0.6, 2)
    q, y = cut_ratio_stats(graph, two_cliques, plane, plane)
    assert q == pytest.approx(1.0)
    assert y == min(hyperplane_partition(two_cliques, plane).sizes) / two_cliques.n


def test_cut_ratio_across_the_gap(two_cliques):
    graph = build_knn_graph(two_cliques, 10)
    q, y = cut_ratio_stats(graph, two_cliques, Hyperplane.axis_aligned(0, 5.0, 2),
                           Hyperplane.axis_aligned(0, 0.6, 2))
    assert q == 0.0
    assert y == 0.5


def test_cut_ratio_needs_balanced_cut(two_cliques):
    graph = build_knn_graph(two_cliques, 10)
    with pytest.raises(DegenerateCutError):
        cut_ratio_stats(graph, two_cliques, Hyperplane.axis_aligned(0, 0.6, 2),
                        Hyperplane.axis_aligned(0, 5.0, 2))


def test_partition_csv(tmp_path):
    partition = Partition(assignment=[0, 2, 1, 1, 0], K=3)
    loaded = read_partition(write_partition(partition, tmp_path / "partition.csv"))
    np.testing.assert_array_equal(loaded.assignment, partition.assignment)
    assert loaded.K == 3
