"""
Spectral Service - Laplacians, spectral clustering and cut metrics

Cut values count every undirected edge once.
"""
import logging
import warnings
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from joblib import Parallel, delayed
from sklearn.cluster import KMeans

from app.core.config import get_settings
from app.core.exceptions import ClusteringError, DatasetError, DegenerateCutError, ParameterError
from app.schemas.schemas import CutReport, Dataset, Graph, Hyperplane, Partition
from app.services.graph_service import adjacency_matrix, graph_degrees
from app.utils.io import read_csv, write_csv
from app.utils.seeding import child_seeds, make_rng

logger = logging.getLogger(__name__)

KMEANS_RESTARTS = 10
KMEANS_MAX_ITER = 100
MAX_DENSE_NODES = 5000


def _inv_sqrt(deg: np.ndarray) -> np.ndarray:
    out = np.zeros_like(deg, dtype=float)
    positive = deg > 0
    out[positive] = 1.0 / np.sqrt(deg[positive])
    return out


def laplacian(graph: Graph, normalized: bool = False) -> np.ndarray:
    """
    Dense graph Laplacian

    Unnormalized: L = D - W. Normalized: L = I - D^-1/2 W D^-1/2, where
    isolated nodes keep an identity row.
    """
    if graph.n > MAX_DENSE_NODES:
        raise ParameterError(f"dense eigensolver limited to n <= {MAX_DENSE_NODES}, got {graph.n}")
    W = adjacency_matrix(graph).toarray()
    deg = W.sum(axis=1)
    if not normalized:
        return np.diag(deg) - W
    scale = _inv_sqrt(deg)
    L = np.eye(graph.n) - scale[:, None] * W * scale[None, :]
    return 0.5 * (L + L.T)


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    """First clearly nonzero coordinate of every eigenvector is positive"""
    vecs = vecs.copy()
    for j in range(vecs.shape[1]):
        col = vecs[:, j]
        tol = 1e-10 * max(np.abs(col).max(), 1e-300)
        nonzero = np.flatnonzero(np.abs(col) > tol)
        if nonzero.size and col[nonzero[0]] < 0:
            vecs[:, j] = -col
    return vecs


def smallest_eigenpairs(L: np.ndarray, count: int) -> tuple[np.ndarray, np.ndarray]:
    """The `count` smallest eigenpairs of a symmetric matrix, ascending"""
    vals, vecs = scipy.linalg.eigh(L, subset_by_index=[0, count - 1])
    return vals, _fix_signs(vecs)


def canonical_labels(assignment: np.ndarray) -> np.ndarray:
    """Renumber clusters by first appearance so node 0 is always in cluster 0"""
    _, first = np.unique(assignment, return_index=True)
    order = np.argsort(first)
    mapping = np.empty(order.size, dtype=np.int64)
    mapping[order] = np.arange(order.size)
    ids = np.unique(assignment)
    return mapping[np.searchsorted(ids, assignment)]


def fiedler_vector(graph: Graph, normalized: bool = False) -> np.ndarray:
    """
    Nontrivial direction of the two smallest eigenvectors

    The trivial eigenvector (constant, or D^1/2 1 when normalized) is
    projected out so disconnected graphs still yield a separating vector.
    """
    L = laplacian(graph, normalized)
    _, vecs = smallest_eigenpairs(L, 2)
    deg = graph_degrees(graph)
    trivial = np.sqrt(deg) if (normalized and deg.sum() > 0) else np.ones(graph.n)
    trivial = trivial / np.linalg.norm(trivial)
    residual = vecs - np.outer(trivial, trivial @ vecs)
    norms = np.linalg.norm(residual, axis=0)
    fiedler = residual[:, 1] if norms[1] > norms[0] + 1e-12 else residual[:, 0]
    if normalized:
        fiedler = fiedler * _inv_sqrt(deg)
    return fiedler


def fiedler_split(graph: Graph, normalized: bool = False) -> tuple[Partition, float]:
    """
    Best threshold of the Fiedler vector

    Scans the n-1 splits of the nodes sorted by Fiedler value and keeps the
    one with the smallest RatioCut (NCut when normalized); ties keep the
    smaller first side.

    Returns:
        (partition, objective value of the chosen split)
    """
    n = graph.n
    if n < 2:
        raise ParameterError("need at least two nodes")
    order = np.argsort(fiedler_vector(graph, normalized), kind="stable")
    A = adjacency_matrix(graph)[order][:, order]
    deg = np.asarray(A.sum(axis=1)).ravel()
    earlier = np.asarray(sp.tril(A, k=-1).sum(axis=1)).ravel()
    cuts = np.maximum(np.cumsum(deg - 2.0 * earlier)[: n - 1], 0.0)
    sizes = np.arange(1, n)

    with np.errstate(divide="ignore", invalid="ignore"):
        if normalized:
            vol = np.cumsum(deg)[: n - 1]
            total = deg.sum()
            objective = cuts / vol + cuts / (total - vol)
        else:
            objective = cuts / sizes + cuts / (n - sizes)
    objective = np.where(np.isnan(objective), np.inf, objective)
    split = int(np.argmin(objective))

    assignment = np.ones(n, dtype=np.int64)
    assignment[order[: split + 1]] = 0
    return Partition(assignment=canonical_labels(assignment), K=2), float(objective[split])


def _kmeans_restart(embedding: np.ndarray, K: int, seed: int) -> tuple[float, Optional[np.ndarray]]:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            km = KMeans(n_clusters=K, n_init=1, max_iter=KMEANS_MAX_ITER, random_state=seed).fit(embedding)
        except ValueError:
            return np.inf, None
    labels = km.labels_.astype(np.int64)
    if np.bincount(labels, minlength=K).min() == 0:
        return np.inf, None
    return float(km.inertia_), labels


def spectral_cluster(
    graph: Graph,
    K: int,
    normalized: bool = False,
    seed: int = 0,
    restarts: int = KMEANS_RESTARTS,
    n_jobs: Optional[int] = None,
) -> Partition:
    """
    Spectral clustering into K non-empty clusters

    K = 2 thresholds the Fiedler vector (see fiedler_split). K > 2 embeds the
    nodes with the K smallest eigenvectors (rows normalised for the
    normalized Laplacian) and keeps the best of `restarts` seeded k-means runs
    by (inertia, restart index).

    Raises:
        ParameterError: K outside [2, n]
        ClusteringError: every k-means restart left a cluster empty
    """
    if K < 2 or K > graph.n:
        raise ParameterError(f"K={K} outside [2, {graph.n}]")
    if K == 2:
        return fiedler_split(graph, normalized)[0]

    _, embedding = smallest_eigenpairs(laplacian(graph, normalized), K)
    if normalized:
        norms = np.linalg.norm(embedding, axis=1, keepdims=True)
        embedding = np.divide(embedding, norms, out=np.zeros_like(embedding), where=norms > 0)

    seeds = child_seeds(seed, restarts)
    results = Parallel(n_jobs=n_jobs or get_settings().threads)(
        delayed(_kmeans_restart)(embedding, K, s) for s in seeds
    )
    best = min(range(restarts), key=lambda i: (results[i][0], i))
    inertia, labels = results[best]
    if labels is None:
        raise ClusteringError(f"all {restarts} k-means restarts produced an empty cluster (K={K})")
    logger.debug("spectral clustering: K=%d restart=%d inertia=%.6g", K, best, inertia)
    return Partition(assignment=canonical_labels(labels), K=K)


def cut_metrics(graph: Graph, partition: Partition) -> CutReport:
    """
    Cut, RatioCut and NCut of a partition

    cut sums the weights of edges joining different clusters; RatioCut and
    NCut sum cut(C_i, rest) / |C_i| and cut(C_i, rest) / vol(C_i). For two
    clusters they reduce to cut * (1/|C| + 1/|C'|) and cut * (1/vol C + 1/vol C').

    Raises:
        ParameterError: assignment length differs from the node count
        DegenerateCutError: some cluster is empty
    """
    if partition.n != graph.n:
        raise ParameterError(f"partition has {partition.n} entries for {graph.n} nodes")
    sizes = np.bincount(partition.assignment, minlength=partition.K)
    if sizes.min() == 0:
        empty = int(np.argmin(sizes))
        raise DegenerateCutError(f"cluster {empty} is empty")

    a = partition.assignment
    crossing = a[graph.rows] != a[graph.cols]
    w = graph.weights[crossing]
    boundary = np.zeros(partition.K)
    np.add.at(boundary, a[graph.rows[crossing]], w)
    np.add.at(boundary, a[graph.cols[crossing]], w)
    volumes = np.bincount(a, weights=graph_degrees(graph), minlength=partition.K)
    ncut_terms = np.divide(boundary, volumes, out=np.zeros_like(boundary), where=volumes > 0)
    return CutReport(
        cut=float(w.sum()),
        ratio_cut=float(np.sum(boundary / sizes)),
        ncut=float(ncut_terms.sum()),
        sizes=sizes.tolist(),
        volumes=volumes.tolist(),
        boundary_cuts=boundary.tolist(),
    )


def hyperplane_partition(
    dataset: Dataset,
    normal: Sequence[float] | Hyperplane,
    offset: float = 0.0,
    seed: int = 0,
) -> Partition:
    """
    Split points by the sign of x . normal - offset

    Cluster 1 is the positive side; points exactly on the hyperplane are
    assigned by a seeded coin. An empty side yields a degenerate partition
    (Partition.is_degenerate) rather than an error.
    """
    if isinstance(normal, Hyperplane):
        normal, offset = normal.normal, normal.offset
    normal = np.asarray(normal, dtype=float)
    if normal.shape != (dataset.d,):
        raise ParameterError(f"normal has {normal.size} entries for d={dataset.d}")
    if not np.any(normal != 0):
        raise ParameterError("normal must be nonzero")
    value = dataset.points @ normal - offset
    side = (value > 0).astype(np.int64)
    on_plane = value == 0
    if on_plane.any():
        side[on_plane] = make_rng(seed).integers(0, 2, size=int(on_plane.sum()))
    return Partition(assignment=side, K=2)


def cut_ratio_stats(
    graph: Graph,
    dataset: Dataset,
    s_u: Hyperplane,
    s_b: Hyperplane,
    seed: int = 0,
) -> tuple[float, float]:
    """
    Cut-ratio q = Cut(S_U) / Cut(S_B) and unbalancedness y of the S_U split

    Raises:
        DegenerateCutError: a hyperplane leaves a side empty, or Cut(S_B) = 0
    """
    unbalanced = hyperplane_partition(dataset, s_u, seed=seed)
    balanced = hyperplane_partition(dataset, s_b, seed=seed)
    if unbalanced.is_degenerate or balanced.is_degenerate:
        raise DegenerateCutError("both hyperplanes must leave two non-empty sides")
    cut_u = cut_metrics(graph, unbalanced).cut
    cut_b = cut_metrics(graph, balanced).cut
    if cut_b == 0:
        raise DegenerateCutError("graph has no edge across the balanced hyperplane")
    y = min(unbalanced.sizes) / dataset.n
    return cut_u / cut_b, y


def write_partition(partition: Partition, path: str | Path) -> Path:
    return write_csv(path, ["index", "cluster"], enumerate(partition.assignment))


def read_partition(path: str | Path, K: Optional[int] = None) -> Partition:
    """Read an index,cluster CSV; K defaults to the largest cluster id + 1"""
    header, rows = read_csv(path)
    if header[:2] != ["index", "cluster"]:
        raise DatasetError(f"{path}: expected header index,cluster")
    try:
        pairs = sorted((int(r[0]), int(r[1])) for r in rows)
    except (ValueError, IndexError) as e:
        raise DatasetError(f"{path}: malformed partition row") from e
    if [i for i, _ in pairs] != list(range(len(pairs))):
        raise DatasetError(f"{path}: indices must be 0..n-1")
    assignment = np.array([c for _, c in pairs], dtype=np.int64)
    return Partition(assignment=assignment, K=K or int(assignment.max()) + 1)
