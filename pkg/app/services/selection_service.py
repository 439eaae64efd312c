"""
Selection Service - constrained cut minimisation over graph parameters

The objective is the cut value of the spectral partition (the total
inter-cluster weight for K > 2); a grid point is feasible when its smallest
cluster holds at least delta * n points.
"""
import logging
from typing import List, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from sklearn.decomposition import PCA

from app.core.config import get_settings
from app.core.exceptions import InfeasibleSelectionError, ParameterError, RMDGraphError
from app.schemas.schemas import (
    Dataset,
    DeltaCurve,
    DeltaPoint,
    ExperimentConfig,
    FlatSegment,
    GraphBuilder,
    GraphConfig,
    Partition,
    RankVector,
    SelectionEntry,
    SelectionResult,
    StatVariant,
    WeightKind,
    WeightScheme,
)
from app.services.graph_service import build_graph, mean_knn_distance, weight_scheme
from app.services.rank_service import DEFAULT_RESAMPLES, compute_ranks_ustat
from app.services.spectral_service import cut_metrics, spectral_cluster
from app.utils.seeding import derive_seed

logger = logging.getLogger(__name__)

DEFAULT_LAMBDA_GRID = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
DEFAULT_DELTA = 0.05
DEFAULT_K_GRID = tuple(range(20, 101, 10))
DEFAULT_SIGMA_EXPONENTS = tuple(range(-4, 5))
FLAT_REL_TOL = 0.05
FLAT_POSITION_TOL = 0.5
MIN_FLAT_RUN = 3
BASELINE_METHODS = ("knn", "full-rbf", "eps")


def _evaluate_point(
    dataset: Dataset,
    config: GraphConfig,
    params: dict,
    ranks: Optional[RankVector],
    K: int,
    normalized: bool,
    seed: int,
) -> tuple[SelectionEntry, Optional[Partition]]:
    """Build, cluster and score one grid point; failures become infeasible entries"""
    try:
        graph = build_graph(dataset, config, ranks)
        partition = spectral_cluster(graph, K, normalized=normalized, seed=seed, n_jobs=1)
        report = cut_metrics(graph, partition)
    except RMDGraphError as e:
        logger.warning("grid point %s failed: %s", params, e)
        return SelectionEntry(params=params, error=str(e)), None
    entry = SelectionEntry(
        params=params,
        cut=report.cut,
        ratio_cut=report.ratio_cut,
        min_fraction=min(report.sizes) / dataset.n,
    )
    logger.debug("grid point %s: cut=%.6g min_fraction=%.4f", params, entry.cut, entry.min_fraction)
    return entry, partition


def _evaluate_grid(
    dataset: Dataset,
    configs: Sequence[GraphConfig],
    params: Sequence[dict],
    ranks: Optional[RankVector],
    K: int,
    normalized: bool,
    seed: int,
    n_jobs: Optional[int],
) -> List[tuple[SelectionEntry, Optional[Partition]]]:
    cluster_seed = derive_seed(seed, "cluster")
    return Parallel(n_jobs=n_jobs or get_settings().threads)(
        delayed(_evaluate_point)(dataset, c, p, ranks, K, normalized, cluster_seed)
        for c, p in zip(configs, params)
    )


def _tie_key(entry: SelectionEntry) -> tuple:
    p = entry.params
    return (entry.cut, p.get("lambda", 0.0), p.get("k", 0.0), p.get("sigma", 0.0))


def select_feasible(
    evaluated: Sequence[tuple[SelectionEntry, Optional[Partition]]],
    delta: float,
    n: int,
) -> SelectionResult:
    """
    Feasible minimiser of the cut over an evaluated grid

    Ties go to the smaller lambda, then the smaller k, then the smaller sigma.

    Raises:
        InfeasibleSelectionError: no grid point meets the size constraint
    """
    trace = []
    candidates = []
    for entry, partition in evaluated:
        feasible = entry.error is None and entry.min_fraction * n >= delta * n - 1e-9
        entry = entry.model_copy(update={"feasible": feasible})
        trace.append(entry)
        if feasible:
            candidates.append((entry, partition))
    if not candidates:
        raise InfeasibleSelectionError(f"no grid point keeps every cluster above delta={delta}", trace=trace)
    best, partition = min(candidates, key=lambda c: _tie_key(c[0]))
    return SelectionResult(chosen=best.params, objective=best.cut, partition=partition, trace=trace)


def _check_delta(delta: float, K: int) -> None:
    if not 0.0 < delta < 1.0 / K:
        raise ParameterError(f"delta must lie in (0, 1/K) = (0, {1.0 / K}), got {delta}")


def _lambda_grid_points(
    dataset: Dataset,
    k: int,
    weight: WeightScheme,
    lambda_grid: Sequence[float],
    ranks: RankVector,
    K: int,
    normalized: bool,
    seed: int,
    n_jobs: Optional[int],
) -> List[tuple[SelectionEntry, Optional[Partition]]]:
    if not lambda_grid:
        raise ParameterError("lambda grid is empty")
    if any(not 0.0 <= lam <= 1.0 for lam in lambda_grid):
        raise ParameterError(f"lambda grid must lie in [0, 1], got {list(lambda_grid)}")
    configs = [
        GraphConfig(method=GraphBuilder.RMD, k=k, lam=lam, weight=weight.kind, sigma=weight.sigma)
        for lam in lambda_grid
    ]
    params = [{"lambda": float(lam)} for lam in lambda_grid]
    return _evaluate_grid(dataset, configs, params, ranks, K, normalized, seed, n_jobs)


def _ranks_for(dataset: Dataset, ranks: Optional[RankVector], l: int, B: int,
               variant: Optional[StatVariant], seed: int) -> RankVector:
    if ranks is not None:
        return ranks
    variant = variant or StatVariant(l=l)
    return compute_ranks_ustat(dataset, variant, B=B, seed=derive_seed(seed, "rank"))


def optimize_lambda(
    dataset: Dataset,
    k: int,
    l: int,
    B: int = DEFAULT_RESAMPLES,
    weight: Optional[WeightScheme] = None,
    delta: float = DEFAULT_DELTA,
    lambda_grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
    K: int = 2,
    seed: int = 0,
    normalized: bool = False,
    ranks: Optional[RankVector] = None,
    variant: Optional[StatVariant] = None,
    n_jobs: Optional[int] = None,
) -> SelectionResult:
    """
    Choose lambda minimising the cut subject to the minimum cluster size

    One rank vector is shared by every lambda; each grid point builds an RMD
    graph and clusters it. With the grid {1.0} this is k-NN clustering.

    Raises:
        ParameterError: bad delta or grid
        InfeasibleSelectionError: no lambda is feasible (carries the trace)
    """
    _check_delta(delta, K)
    weight = weight or WeightScheme.unit()
    ranks = _ranks_for(dataset, ranks, l, B, variant, seed)
    logger.info("Optimizing lambda: n=%d k=%d delta=%.3f grid=%s", dataset.n, k, delta, list(lambda_grid))
    evaluated = _lambda_grid_points(dataset, k, weight, lambda_grid, ranks, K, normalized, seed, n_jobs)
    result = select_feasible(evaluated, delta, dataset.n)
    logger.info("Selected %s with cut %.6g", result.chosen, result.objective)
    return result


def _baseline_config(method: str, k: int, sigma: float) -> GraphConfig:
    if method == "knn":
        return GraphConfig(method=GraphBuilder.KNN, k=k, weight=WeightKind.RBF, sigma=sigma)
    if method == "full-rbf":
        return GraphConfig(method=GraphBuilder.FULL_RBF, k=k, weight=WeightKind.RBF, sigma=sigma)
    if method == "eps":
        return GraphConfig(method=GraphBuilder.EPS, k=k, eps=sigma, weight=WeightKind.RBF, sigma=sigma)
    raise ParameterError(f"unknown baseline method '{method}'")


def optimize_baseline(
    dataset: Dataset,
    method: str = "knn",
    k_grid: Sequence[int] = DEFAULT_K_GRID,
    sigma_exponents: Sequence[int] = DEFAULT_SIGMA_EXPONENTS,
    delta: float = DEFAULT_DELTA,
    K: int = 2,
    seed: int = 0,
    normalized: bool = False,
    n_jobs: Optional[int] = None,
) -> SelectionResult:
    """
    Choose (k, sigma) for an RBF-weighted baseline graph

    sigma = 2^j * mean distance to the k-th neighbour. For the full RBF graph
    k only sets that scale; for the eps graph eps = sigma. A k the data cannot
    support becomes infeasible trace entries for all of its sigmas.
    """
    _check_delta(delta, K)
    if not k_grid or not sigma_exponents:
        raise ParameterError("k grid and sigma exponent grid must be non-empty")
    if method not in BASELINE_METHODS:
        raise ParameterError(f"unknown baseline method '{method}'")
    configs, params = [], []
    failed = {}
    for k in k_grid:
        try:
            scale = mean_knn_distance(dataset, k)
        except RMDGraphError as e:
            logger.warning("k=%d skipped: %s", k, e)
            for j in sigma_exponents:
                failed[len(params)] = SelectionEntry(params={"k": float(k), "j": float(j)}, error=str(e))
                params.append(None)
                configs.append(None)
            continue
        for j in sigma_exponents:
            sigma = float(2.0 ** j * scale)
            configs.append(_baseline_config(method, k, sigma))
            params.append({"k": float(k), "j": float(j), "sigma": sigma})
    logger.info("Optimizing %s baseline: %d grid points, delta=%.3f", method, len(configs), delta)
    live = [i for i in range(len(configs)) if i not in failed]
    scored = iter(_evaluate_grid(dataset, [configs[i] for i in live], [params[i] for i in live],
                                 None, K, normalized, seed, n_jobs))
    evaluated = [(failed[i], None) if i in failed else next(scored) for i in range(len(configs))]
    result = select_feasible(evaluated, delta, dataset.n)
    logger.info("Selected %s with cut %.6g", result.chosen, result.objective)
    return result


def principal_axis(dataset: Dataset) -> np.ndarray:
    """First principal direction, oriented so its largest entry is positive"""
    if dataset.d == 1:
        return np.ones(1)
    axis = PCA(n_components=1).fit(dataset.points).components_[0]
    if axis[np.argmax(np.abs(axis))] < 0:
        axis = -axis
    return axis


def boundary_position(dataset: Dataset, partition: Partition, axis: Optional[int] = None) -> float:
    """
    1-D position of a partition boundary

    Points are projected on a coordinate axis, or on the first principal axis
    when none is given. The smallest cluster (lowest id on ties) is separated
    from the rest by the threshold that misplaces the fewest points; the
    midpoint between the neighbouring projections is returned.
    """
    if partition.n != dataset.n:
        raise ParameterError(f"partition has {partition.n} entries for {dataset.n} points")
    if partition.is_degenerate:
        raise ParameterError("partition has an empty cluster")
    if axis is not None:
        if not 0 <= axis < dataset.d:
            raise ParameterError(f"axis {axis} outside 0..{dataset.d - 1}")
        proj = dataset.points[:, axis]
    else:
        proj = dataset.points @ principal_axis(dataset)

    order = np.argsort(proj, kind="stable")
    small = int(np.argmin(partition.sizes))
    is_small = partition.assignment[order] == small
    left_small = np.cumsum(is_small)[:-1]
    left_rest = np.arange(1, dataset.n) - left_small
    total_small = int(is_small.sum())
    total_rest = dataset.n - total_small
    agree = np.maximum(left_small + (total_rest - left_rest), left_rest + (total_small - left_small))
    i = int(np.argmax(agree))
    sorted_proj = proj[order]
    return float(0.5 * (sorted_proj[i] + sorted_proj[i + 1]))


def _close(a: Optional[float], b: Optional[float], tol: float, relative: bool) -> bool:
    if a is None or b is None:
        return a is None and b is None
    gap = abs(a - b)
    if relative:
        return gap <= tol * max(abs(a), abs(b))
    return gap <= tol


def detect_flat_spots(
    curve: DeltaCurve,
    rel_tol: float = FLAT_REL_TOL,
    position_tol: float = FLAT_POSITION_TOL,
) -> List[FlatSegment]:
    """
    Maximal runs of at least three consecutive feasible delta points whose
    cut changes by at most rel_tol (relative) and whose boundary position
    moves by at most position_tol between neighbours
    """
    points = curve.points
    segments = []
    start = 0
    for i in range(1, len(points) + 1):
        joined = (
            i < len(points)
            and points[i - 1].feasible
            and points[i].feasible
            and _close(points[i - 1].cut, points[i].cut, rel_tol, relative=True)
            and _close(points[i - 1].position, points[i].position, position_tol, relative=False)
        )
        if joined:
            continue
        end = i - 1
        if end - start + 1 >= MIN_FLAT_RUN and points[start].feasible:
            run = points[start:end + 1]
            positions = [p.position for p in run if p.position is not None]
            segments.append(FlatSegment(
                delta_high=run[0].delta,
                delta_low=run[-1].delta,
                start=start,
                end=end,
                cut=float(np.mean([p.cut for p in run])),
                position=float(np.mean(positions)) if positions else None,
            ))
        start = i
    return segments


def delta_sweep(
    dataset: Dataset,
    k: int,
    l: int,
    delta_grid: Sequence[float],
    B: int = DEFAULT_RESAMPLES,
    weight: Optional[WeightScheme] = None,
    lambda_grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
    K: int = 2,
    seed: int = 0,
    normalized: bool = False,
    rel_tol: float = FLAT_REL_TOL,
    position_tol: float = FLAT_POSITION_TOL,
    ranks: Optional[RankVector] = None,
    variant: Optional[StatVariant] = None,
    n_jobs: Optional[int] = None,
) -> DeltaCurve:
    """
    Constrained optimal cut as the size threshold delta is relaxed

    The lambda grid is evaluated once and re-selected for every delta, so the
    curve is non-increasing as delta decreases. Deltas with no feasible lambda
    are kept as infeasible points.
    """
    if len(delta_grid) < MIN_FLAT_RUN:
        raise ParameterError(f"delta grid needs at least {MIN_FLAT_RUN} values")
    if any(b > a for a, b in zip(delta_grid, delta_grid[1:])):
        raise ParameterError("delta grid must be sorted descending")
    for delta in delta_grid:
        _check_delta(delta, K)

    weight = weight or WeightScheme.unit()
    ranks = _ranks_for(dataset, ranks, l, B, variant, seed)
    evaluated = _lambda_grid_points(dataset, k, weight, lambda_grid, ranks, K, normalized, seed, n_jobs)

    points = []
    for delta in delta_grid:
        try:
            result = select_feasible(evaluated, delta, dataset.n)
        except InfeasibleSelectionError:
            logger.warning("delta=%.3f: no feasible lambda", delta)
            points.append(DeltaPoint(delta=delta))
            continue
        points.append(DeltaPoint(
            delta=delta,
            cut=result.objective,
            position=boundary_position(dataset, result.partition),
            lam=result.chosen["lambda"],
            feasible=True,
        ))

    cuts = [p.cut for p in points if p.feasible]
    if any(b > a + 1e-12 for a, b in zip(cuts, cuts[1:])):
        raise RMDGraphError("optimal cut increased while delta decreased")
    curve = DeltaCurve(points=points)
    segments = detect_flat_spots(curve, rel_tol, position_tol)
    logger.info("Delta sweep: %d points, %d flat segments", len(points), len(segments))
    return curve.model_copy(update={"flat_segments": segments})


def select_graph(
    dataset: Dataset,
    config: ExperimentConfig,
    seed: int,
) -> tuple[GraphConfig, Optional[RankVector], Optional[SelectionResult]]:
    """
    Graph configuration an experiment ends up using

    Runs the configured selection (none, lambda or baseline) and returns the
    chosen graph configuration together with the ranks it needs.
    """
    graph_config = config.graph
    selection = config.selection
    ranks = None
    if graph_config.method == GraphBuilder.RMD or selection.mode == "lambda":
        ranks = compute_ranks_ustat(dataset, graph_config.stat_variant(), B=graph_config.B,
                                    seed=derive_seed(seed, "rank"))

    if selection.mode == "lambda":
        result = optimize_lambda(
            dataset, graph_config.k, graph_config.neighbor_scale, B=graph_config.B,
            weight=weight_scheme(dataset, graph_config), delta=selection.delta,
            lambda_grid=selection.lambda_grid, K=config.K, seed=seed,
            normalized=config.normalized, ranks=ranks,
        )
        chosen = graph_config.model_copy(update={"method": GraphBuilder.RMD, "lam": result.chosen["lambda"]})
        return chosen, ranks, result
    if selection.mode == "baseline":
        result = optimize_baseline(
            dataset, selection.baseline_method, selection.k_grid, selection.sigma_exponents,
            delta=selection.delta, K=config.K, seed=seed, normalized=config.normalized,
        )
        chosen = _baseline_config(selection.baseline_method, int(result.chosen["k"]), result.chosen["sigma"])
        return chosen, None, result
    return graph_config, ranks, None
