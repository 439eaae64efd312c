"""
Exact nearest-neighbour tables

Brute force in row blocks: distances come from scipy's cdist and the stable
argsort breaks equal distances by ascending index, so every caller sees the
same neighbour order regardless of how the work is chunked.
"""
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from app.core.exceptions import ParameterError

BLOCK_ROWS = 512


@dataclass(frozen=True)
class NeighborTable:
    """Row i lists the `k` nearest reference points of query i, closest first"""
    indices: np.ndarray
    distances: np.ndarray

    @property
    def k(self) -> int:
        return self.indices.shape[1]


def nearest_neighbors(
    queries: np.ndarray,
    k: int,
    reference: np.ndarray | None = None,
    exclude_self: bool = True,
) -> NeighborTable:
    """
    k nearest neighbours of every query row

    Args:
        queries: m x d query points
        k: neighbours per query
        reference: points to search; defaults to the queries themselves
        exclude_self: when searching the queries themselves, drop query i from
            its own list (by index, so duplicates of i are still neighbours)

    Returns:
        NeighborTable with m x k index and distance arrays
    """
    same = reference is None
    reference = queries if same else reference
    m, size = len(queries), len(reference)
    available = size - 1 if (same and exclude_self) else size
    if k < 1 or k > available:
        raise ParameterError(f"k={k} outside [1, {available}]")

    indices = np.empty((m, k), dtype=np.int64)
    distances = np.empty((m, k), dtype=float)
    for start in range(0, m, BLOCK_ROWS):
        stop = min(start + BLOCK_ROWS, m)
        block = cdist(queries[start:stop], reference)
        if same and exclude_self:
            rows = np.arange(stop - start)
            block[rows, rows + start] = np.inf
        order = np.argsort(block, axis=1, kind="stable")[:, :k]
        indices[start:stop] = order
        distances[start:stop] = np.take_along_axis(block, order, axis=1)
    return NeighborTable(indices=indices, distances=distances)


def sorted_distances(queries: np.ndarray, reference: np.ndarray, count: int) -> np.ndarray:
    """The `count` smallest distances from each query to the reference set, ascending"""
    out = np.empty((len(queries), count), dtype=float)
    for start in range(0, len(queries), BLOCK_ROWS):
        stop = min(start + BLOCK_ROWS, len(queries))
        block = cdist(queries[start:stop], reference)
        if count < block.shape[1]:
            block = np.partition(block, count - 1, axis=1)[:, :count]
        out[start:stop] = np.sort(block, axis=1)
    return out
