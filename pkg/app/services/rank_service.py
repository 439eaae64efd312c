"""
Rank Service - density ranks from nearest-neighbour statistics

R(x) is the fraction of points whose statistic G is at least G(x); smaller G
means denser surroundings, so dense points get ranks close to 1. Ranks are
averaged over B random half splits where each half is scored against the
other one.
"""
import logging
from pathlib import Path
from typing import Optional

import numpy as np
from joblib import Parallel, delayed

from app.core.config import get_settings
from app.core.exceptions import DatasetError, ParameterError
from app.schemas.schemas import Dataset, RankVector, StatVariant, StatVariantKind
from app.utils.io import read_csv, write_csv
from app.utils.neighbors import sorted_distances
from app.utils.seeding import child_seeds, make_rng

logger = logging.getLogger(__name__)

DEFAULT_RESAMPLES = 5


def neighbor_window(l: int) -> tuple[int, int]:
    """1-based first and last neighbour order averaged by avg-knn (exactly l terms)"""
    return l - (l - 1) // 2, l + l // 2


def required_refset_size(variant: StatVariant) -> int:
    """Smallest reference set the statistic can be evaluated against"""
    if variant.kind in (StatVariantKind.AVG_KNN, StatVariantKind.WEIGHTED_AVG_KNN):
        return neighbor_window(variant.l)[1]
    if variant.kind == StatVariantKind.LNN_DISTANCE:
        return variant.l
    return 1


def _statistics(queries: np.ndarray, refset: np.ndarray, variant: StatVariant) -> np.ndarray:
    """G for every query row against refset (queries are never part of refset)"""
    if variant.kind == StatVariantKind.EPS_COUNT:
        dists = sorted_distances(queries, refset, len(refset))
        return -np.sum(dists <= variant.eps, axis=1).astype(float)

    need = required_refset_size(variant)
    if len(refset) < need:
        raise ParameterError(
            f"reference set of size {len(refset)} too small for {variant.kind.value} "
            f"with l={variant.l}: need at least {need}"
        )
    dists = sorted_distances(queries, refset, need)
    if variant.kind == StatVariantKind.LNN_DISTANCE:
        return dists[:, variant.l - 1]

    lo, hi = neighbor_window(variant.l)
    window = dists[:, lo - 1:hi]
    if variant.kind == StatVariantKind.WEIGHTED_AVG_KNN:
        orders = np.arange(lo, hi + 1, dtype=float)
        window = window * (variant.l / orders) ** (1.0 / queries.shape[1])
    return window.sum(axis=1) / variant.l


def statistic_g(
    x: np.ndarray,
    refset: np.ndarray,
    variant: StatVariant,
    d: Optional[int] = None,
    exclude_index: Optional[int] = None,
) -> float:
    """
    Nearest-neighbour statistic G(x) against a reference set

    Args:
        x: query point
        refset: reference points (n_ref x d)
        variant: which statistic to evaluate
        d: dimension; inferred from x when omitted
        exclude_index: position of x inside refset, if it belongs to it

    Returns:
        avg-knn: mean of the l distances in the window around the l-th neighbour;
        weighted-avg-knn: the same with weights (l/i)^(1/d);
        lnn-distance: distance to the l-th neighbour;
        eps-count: minus the number of reference points within eps
    """
    refset = np.asarray(refset, dtype=float)
    if refset.ndim == 1:
        refset = refset.reshape(-1, 1)
    x = np.asarray(x, dtype=float).reshape(1, -1)
    if d is not None and d != x.shape[1]:
        raise ParameterError(f"dimension mismatch: d={d}, point has {x.shape[1]}")
    if exclude_index is not None:
        refset = np.delete(refset, exclude_index, axis=0)
    return float(_statistics(x, refset, variant)[0])


def _ranks_within(stat: np.ndarray) -> np.ndarray:
    """R(x) = (1/m) * #{i : G(x) <= G(x_i)} inside one half"""
    ordered = np.sort(stat)
    at_least = len(stat) - np.searchsorted(ordered, stat, side="left")
    return at_least / len(stat)


def _one_resample(points: np.ndarray, variant: StatVariant, seed: int) -> tuple[np.ndarray, np.ndarray]:
    n = len(points)
    perm = make_rng(seed).permutation(n)
    held_out = None
    if n % 2:
        held_out, perm = perm[-1], perm[:-1]
    m = len(perm) // 2
    first, second = perm[:m], perm[m:]

    ranks = np.full(n, np.nan)
    stat = np.empty(n)
    stat[first] = _statistics(points[first], points[second], variant)
    stat[second] = _statistics(points[second], points[first], variant)
    ranks[first] = _ranks_within(stat[first])
    ranks[second] = _ranks_within(stat[second])
    if held_out is not None:
        stat[held_out] = _statistics(points[[held_out]], points[first], variant)[0]
    return ranks, stat


def compute_ranks_ustat(
    dataset: Dataset,
    variant: StatVariant,
    B: int = DEFAULT_RESAMPLES,
    seed: int = 0,
    n_jobs: Optional[int] = None,
) -> RankVector:
    """
    Ranks by U-statistic resampling

    Each resample splits the data into two equal halves (odd n: one random
    point sits out), computes G for each half against the other and ranks
    within the own half. The final rank averages the B resamples; a point
    that sat out every resample gets 0.5.

    Raises:
        ParameterError: B < 1 or n too small for the statistic
    """
    if B < 1:
        raise ParameterError(f"B must be >= 1, got {B}")
    need = 2 * required_refset_size(variant)
    if dataset.n < need:
        raise ParameterError(f"n={dataset.n} too small: {variant.kind.value} with l={variant.l} needs n >= {need}")

    n_jobs = n_jobs or get_settings().threads
    seeds = child_seeds(seed, B)
    logger.info("Computing ranks: n=%d variant=%s l=%d B=%d", dataset.n, variant.kind.value, variant.l, B)
    results = Parallel(n_jobs=n_jobs)(
        delayed(_one_resample)(dataset.points, variant, s) for s in seeds
    )

    stacked = np.vstack([r for r, _ in results])
    counts = np.sum(~np.isnan(stacked), axis=0)
    totals = np.zeros(dataset.n)
    for row in stacked:
        totals += np.nan_to_num(row, nan=0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        ranks = np.where(counts > 0, totals / np.maximum(counts, 1), 0.5)
    return RankVector(ranks=ranks, statistic=results[-1][1], variant=variant, B=B, seed=seed)


def write_ranks(ranks: RankVector, path: str | Path) -> Path:
    rows = ((i, r, g) for i, (r, g) in enumerate(zip(ranks.ranks, ranks.statistic)))
    return write_csv(path, ["index", "rank", "statistic"], rows)


def read_ranks(path: str | Path, variant: StatVariant, B: int = DEFAULT_RESAMPLES, seed: int = 0) -> RankVector:
    """Read a ranks CSV (index,rank,statistic) written by write_ranks"""
    header, rows = read_csv(path)
    if header[:3] != ["index", "rank", "statistic"]:
        raise DatasetError(f"{path}: expected header index,rank,statistic")
    rows = sorted(rows, key=lambda r: int(r[0]))
    ranks = [float(r[1]) for r in rows]
    stats = [float(r[2]) for r in rows]
    return RankVector(ranks=ranks, statistic=stats, variant=variant, B=B, seed=seed)
