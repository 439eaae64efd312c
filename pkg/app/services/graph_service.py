"""
Graph Service - k-NN, rank-modulated degree (RMD), epsilon and full-RBF graphs
"""
import logging
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist

from app.core.exceptions import DatasetError, ParameterError
from app.schemas.schemas import (
    Dataset,
    DegreeProfile,
    Graph,
    GraphBuilder,
    GraphConfig,
    GraphMeta,
    RankVector,
    WeightKind,
    WeightScheme,
)
from app.utils.io import read_csv, read_json, write_csv, write_json
from app.utils.neighbors import nearest_neighbors

logger = logging.getLogger(__name__)

TINY_WEIGHT = np.finfo(float).tiny


def rbf_weight(dist, sigma: float):
    """exp(-dist^2 / (2 sigma^2)); accepts scalars or arrays"""
    if not sigma > 0:
        raise ParameterError(f"sigma must be > 0, got {sigma}")
    value = np.exp(-np.square(dist) / (2.0 * sigma * sigma))
    return float(value) if np.ndim(value) == 0 else value


def _edge_weights(dist: np.ndarray, weight: WeightScheme) -> np.ndarray:
    if weight.kind == WeightKind.UNIT:
        return np.ones_like(dist, dtype=float)
    # keep far edges present with the smallest positive weight
    return np.maximum(rbf_weight(dist, weight.sigma), TINY_WEIGHT)


def _assemble(
    n: int,
    src: np.ndarray,
    dst: np.ndarray,
    dist: np.ndarray,
    weight: WeightScheme,
    meta: GraphMeta,
    degree_profile: Optional[DegreeProfile] = None,
) -> Graph:
    """Union-symmetrize directed pairs into a canonically sorted edge list"""
    u = np.minimum(src, dst)
    v = np.maximum(src, dst)
    keys, first = np.unique(u * n + v, return_index=True)
    return Graph(
        n=n,
        rows=keys // n,
        cols=keys % n,
        weights=_edge_weights(dist[first], weight),
        meta=meta,
        degree_profile=degree_profile,
    )


def _check_k(k: int, upper: int, what: str = "k") -> None:
    if k < 1 or k > upper:
        raise ParameterError(f"{what}={k} outside [1, {upper}]")


def build_knn_graph(dataset: Dataset, k: int, weight: Optional[WeightScheme] = None) -> Graph:
    """Link u and v if v is among the k nearest neighbours of u or vice versa"""
    weight = weight or WeightScheme.unit()
    _check_k(k, dataset.n - 1)
    table = nearest_neighbors(dataset.points, k)
    src = np.repeat(np.arange(dataset.n), k)
    meta = GraphMeta(builder=GraphBuilder.KNN, k=k, sigma=weight.sigma, weight=weight.kind)
    graph = _assemble(dataset.n, src, table.indices.ravel(), table.distances.ravel(), weight, meta)
    logger.debug("knn graph: n=%d k=%d edges=%d", dataset.n, k, graph.n_edges)
    return graph


def rmd_degrees(ranks: np.ndarray, k: int, lam: float, n: int) -> np.ndarray:
    """deg(x) = k(lambda + 2(1 - lambda)R(x)), rounded half up and clamped to [1, n-1]"""
    raw = k * (lam + 2.0 * (1.0 - lam) * np.asarray(ranks, dtype=float))
    return np.clip(np.floor(raw + 0.5).astype(np.int64), 1, n - 1)


def build_rmd_graph(
    dataset: Dataset,
    ranks: RankVector,
    k: int,
    lam: float,
    weight: Optional[WeightScheme] = None,
) -> Graph:
    """
    Rank-modulated degree graph

    Each point is linked to its deg(x) nearest neighbours, where deg grows
    with the density rank; the directed links are then union-symmetrized.
    With lam = 1 every degree is k and the result equals the k-NN graph.

    Raises:
        ParameterError: rank length mismatch, k outside [1, (n-1)/2], lam outside [0, 1]
    """
    weight = weight or WeightScheme.unit()
    n = dataset.n
    if ranks.n != n:
        raise ParameterError(f"rank vector has {ranks.n} entries for {n} points")
    _check_k(k, (n - 1) // 2)
    if not 0.0 <= lam <= 1.0:
        raise ParameterError(f"lambda must lie in [0, 1], got {lam}")

    degrees = rmd_degrees(ranks.ranks, k, lam, n)
    table = nearest_neighbors(dataset.points, int(degrees.max()))
    mask = np.arange(table.k)[None, :] < degrees[:, None]
    src = np.broadcast_to(np.arange(n)[:, None], mask.shape)[mask]
    meta = GraphMeta(builder=GraphBuilder.RMD, k=k, lam=lam, sigma=weight.sigma, weight=weight.kind)
    profile = DegreeProfile(degrees=degrees, k=k, lam=lam)
    graph = _assemble(n, src, table.indices[mask], table.distances[mask], weight, meta, profile)
    logger.debug("rmd graph: n=%d k=%d lambda=%.2f edges=%d", n, k, lam, graph.n_edges)
    return graph


def build_epsilon_graph(dataset: Dataset, eps: float, weight: Optional[WeightScheme] = None) -> Graph:
    """Link every pair at distance <= eps; isolated nodes are allowed"""
    weight = weight or WeightScheme.unit()
    if not eps > 0:
        raise ParameterError(f"eps must be > 0, got {eps}")
    pairs = cKDTree(dataset.points).query_pairs(eps, output_type="ndarray")
    pairs = pairs.reshape(-1, 2).astype(np.int64)
    dist = np.linalg.norm(dataset.points[pairs[:, 0]] - dataset.points[pairs[:, 1]], axis=1)
    meta = GraphMeta(builder=GraphBuilder.EPS, eps=eps, sigma=weight.sigma, weight=weight.kind)
    return _assemble(dataset.n, pairs[:, 0], pairs[:, 1], dist, weight, meta)


def build_full_rbf_graph(dataset: Dataset, sigma: float) -> Graph:
    """Complete graph with RBF weights on every pair"""
    if not sigma > 0:
        raise ParameterError(f"sigma must be > 0, got {sigma}")
    weight = WeightScheme.rbf(sigma)
    rows, cols = np.triu_indices(dataset.n, k=1)
    meta = GraphMeta(builder=GraphBuilder.FULL_RBF, sigma=sigma, weight=WeightKind.RBF)
    return Graph(n=dataset.n, rows=rows, cols=cols,
                 weights=_edge_weights(pdist(dataset.points), weight), meta=meta)


def mean_knn_distance(dataset: Dataset, k: int) -> float:
    """Average distance to the k-th nearest neighbour (the sigma/eps scale anchor)"""
    _check_k(k, dataset.n - 1)
    return float(nearest_neighbors(dataset.points, k).distances[:, k - 1].mean())


def _resolve_scale(dataset: Dataset, config: GraphConfig, absolute: Optional[float],
                   relative: Optional[float]) -> Optional[float]:
    if absolute is not None:
        return absolute
    if relative is not None:
        return relative * mean_knn_distance(dataset, config.k)
    return None


def weight_scheme(dataset: Dataset, config: GraphConfig) -> WeightScheme:
    """Edge weights of a configuration, with a relative sigma resolved against the data"""
    if config.weight != WeightKind.RBF:
        return WeightScheme.unit()
    return WeightScheme.rbf(_resolve_scale(dataset, config, config.sigma, config.sigma_scale))


def build_graph(dataset: Dataset, config: GraphConfig, ranks: Optional[RankVector] = None) -> Graph:
    """Build the graph an experiment configuration describes"""
    weight = weight_scheme(dataset, config)

    if config.method == GraphBuilder.KNN:
        return build_knn_graph(dataset, config.k, weight)
    if config.method == GraphBuilder.RMD:
        if ranks is None:
            raise ParameterError("rmd graph needs ranks")
        return build_rmd_graph(dataset, ranks, config.k, config.lam, weight)
    if config.method == GraphBuilder.EPS:
        return build_epsilon_graph(dataset, _resolve_scale(dataset, config, config.eps, config.eps_scale), weight)
    return build_full_rbf_graph(dataset, _resolve_scale(dataset, config, config.sigma, config.sigma_scale))


def adjacency_matrix(graph: Graph) -> sp.csr_matrix:
    """Symmetric sparse weight matrix"""
    rows = np.concatenate([graph.rows, graph.cols])
    cols = np.concatenate([graph.cols, graph.rows])
    data = np.concatenate([graph.weights, graph.weights])
    return sp.csr_matrix((data, (rows, cols)), shape=(graph.n, graph.n))


def graph_degrees(graph: Graph) -> np.ndarray:
    """Weighted degree of every node"""
    deg = np.zeros(graph.n)
    np.add.at(deg, graph.rows, graph.weights)
    np.add.at(deg, graph.cols, graph.weights)
    return deg


def save_graph(graph: Graph, path: str | Path) -> Path:
    """Edge list CSV plus a JSON sidecar with the construction metadata"""
    path = Path(path)
    write_csv(path, ["u", "v", "weight"], zip(graph.rows, graph.cols, graph.weights))
    sidecar = {"n": graph.n, "meta": graph.meta.model_dump(mode="json")}
    if graph.degree_profile is not None:
        sidecar["degrees"] = graph.degree_profile.degrees.tolist()
    write_json(path.with_suffix(".json"), sidecar)
    return path


def load_graph(path: str | Path) -> Graph:
    path = Path(path)
    sidecar_path = path.with_suffix(".json")
    if not sidecar_path.is_file():
        raise DatasetError(f"graph metadata sidecar not found: {sidecar_path}")
    sidecar = read_json(sidecar_path)
    header, rows = read_csv(path)
    if header[:3] != ["u", "v", "weight"]:
        raise DatasetError(f"{path}: expected header u,v,weight")
    edges = np.array([[float(c) for c in r[:3]] for r in rows]).reshape(-1, 3)
    meta = GraphMeta(**sidecar["meta"])
    profile = None
    if "degrees" in sidecar:
        profile = DegreeProfile(degrees=sidecar["degrees"], k=meta.k, lam=meta.lam)
    return Graph(n=sidecar["n"], rows=edges[:, 0].astype(np.int64), cols=edges[:, 1].astype(np.int64),
                 weights=edges[:, 2], meta=meta, degree_profile=profile)
