"""
SSL Service - Gaussian Random Field label propagation
"""
import logging
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import splu

from app.core.exceptions import DatasetError, DisconnectedGraphError, ParameterError
from app.schemas.schemas import GRFResult, Graph, LabelSet, Partition
from app.services.graph_service import adjacency_matrix
from app.utils.io import read_csv, write_csv
from app.utils.seeding import make_rng

logger = logging.getLogger(__name__)

# Label-smoothness trade-off of graph transduction via alternating minimization.
# Recorded for reference only; that algorithm is not part of this package.
GTAM_MU = 0.05

DEFAULT_N_LABELS = 20


def _check_reachable(graph: Graph, labels: LabelSet) -> None:
    """Raise for the first unlabeled node whose component holds no label"""
    _, component = connected_components(adjacency_matrix(graph), directed=False)
    labelled_components = np.unique(component[labels.indices])
    orphan = np.flatnonzero(~np.isin(component, labelled_components))
    if orphan.size:
        node = int(orphan[0])
        raise DisconnectedGraphError(f"node {node} has no path to a labelled node", node=node)


def grf_propagate(graph: Graph, labels: LabelSet) -> GRFResult:
    """
    Harmonic label propagation

    Scores are one-hot on labelled nodes; on unlabelled nodes they are the
    weighted average of the neighbours' scores, i.e. the minimiser of
    Tr(F^T L F) under the label constraints. Solved as L_uu F_u = W_ul F_l
    with one sparse LU factorisation shared by all classes.

    Returns:
        GRFResult with the n x K score matrix and the argmax prediction
        (ties go to the lower class id)

    Raises:
        ParameterError: labelled index out of range
        DisconnectedGraphError: an unlabelled node cannot reach any label
    """
    n, K = graph.n, labels.K
    if labels.indices.size and labels.indices.max() >= n:
        raise ParameterError(f"labelled index {int(labels.indices.max())} out of range for n={n}")
    _check_reachable(graph, labels)

    scores = np.zeros((n, K))
    scores[labels.indices, labels.classes] = 1.0
    free = np.setdiff1d(np.arange(n), labels.indices)
    if free.size:
        W = adjacency_matrix(graph).tocsc()
        deg = np.asarray(W.sum(axis=1)).ravel()
        W_uu = W[free][:, free]
        L_uu = (-W_uu).tolil()
        L_uu.setdiag(deg[free])
        rhs = W[free][:, labels.indices] @ scores[labels.indices]
        solver = splu(L_uu.tocsc())
        scores[free] = solver.solve(np.asarray(rhs))

    prediction = Partition(assignment=np.argmax(scores, axis=1), K=K)
    logger.debug("grf: n=%d labelled=%d K=%d", n, labels.indices.size, K)
    return GRFResult(scores=scores, prediction=prediction)


def harmonic_residual(graph: Graph, labels: LabelSet, scores: np.ndarray) -> float:
    """Largest |F(u) - weighted neighbour average| over unlabelled nodes"""
    W = adjacency_matrix(graph)
    deg = np.asarray(W.sum(axis=1)).ravel()
    free = np.setdiff1d(np.arange(graph.n), labels.indices)
    if not free.size:
        return 0.0
    average = (W[free] @ scores) / deg[free][:, None]
    return float(np.abs(scores[free] - average).max())


def draw_label_set(truth: Sequence[int], n_labels: int = DEFAULT_N_LABELS, seed: int = 0) -> LabelSet:
    """
    Draw n_labels distinct labelled nodes with at least one per class

    One node per class is drawn first, the rest uniformly from the remaining
    nodes; indices are returned sorted.
    """
    truth = np.asarray(truth, dtype=np.int64)
    K = int(truth.max()) + 1
    if n_labels < K:
        raise ParameterError(f"n_labels={n_labels} cannot cover {K} classes")
    if n_labels > truth.size:
        raise ParameterError(f"n_labels={n_labels} exceeds n={truth.size}")
    rng = make_rng(seed)
    chosen = []
    for c in range(K):
        members = np.flatnonzero(truth == c)
        if not members.size:
            raise ParameterError(f"class {c} has no members")
        chosen.append(int(rng.choice(members)))
    rest = np.setdiff1d(np.arange(truth.size), chosen)
    chosen.extend(rng.choice(rest, size=n_labels - K, replace=False).tolist())
    indices = np.sort(np.asarray(chosen, dtype=np.int64))
    return LabelSet(indices=indices, classes=truth[indices], K=K)


def write_labels(labels: LabelSet, path: str | Path) -> Path:
    return write_csv(path, ["index", "class"], zip(labels.indices, labels.classes))


def read_labels(path: str | Path, K: int | None = None) -> LabelSet:
    """Read an index,class CSV; K defaults to the largest class id + 1"""
    header, rows = read_csv(path)
    if header[:2] != ["index", "class"]:
        raise DatasetError(f"{path}: expected header index,class")
    try:
        pairs = np.array([[int(r[0]), int(r[1])] for r in rows], dtype=np.int64).reshape(-1, 2)
    except (ValueError, IndexError) as e:
        raise DatasetError(f"{path}: malformed label row") from e
    if not len(pairs):
        raise DatasetError(f"{path} holds no labels")
    return LabelSet(indices=pairs[:, 0], classes=pairs[:, 1], K=K or int(pairs[:, 1].max()) + 1)
