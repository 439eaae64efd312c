"""
Evaluation Service - error rates, seeded trials and class-imbalance sweeps
"""
import itertools
import logging
from typing import List, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from app.core.config import get_settings
from app.core.exceptions import ParameterError, RMDGraphError
from app.schemas.schemas import (
    DataSourceConfig,
    Dataset,
    EvalReport,
    ExperimentConfig,
    GraphBuilder,
    Partition,
    TrialResult,
)
from app.services.data_service import (
    allocate_counts,
    compact_labels,
    gen_gaussian_mixture,
    gen_two_moons_gaussian,
    load_dataset,
)
from app.services.graph_service import build_graph
from app.services.selection_service import select_graph
from app.services.spectral_service import spectral_cluster
from app.services.ssl_service import draw_label_set, grf_propagate
from app.utils.seeding import child_seeds, derive_seed, make_rng

logger = logging.getLogger(__name__)

MAX_MATCHED_CLASSES = 6


def _confusion(truth: np.ndarray, pred: np.ndarray, K: int) -> np.ndarray:
    confusion = np.zeros((K, K), dtype=np.int64)
    np.add.at(confusion, (truth, pred), 1)
    return confusion


def _as_ids(values) -> np.ndarray:
    if isinstance(values, Partition):
        return values.assignment
    return np.asarray(values, dtype=np.int64).reshape(-1)


def clustering_error(pred: Partition | Sequence[int], truth: Sequence[int]) -> EvalReport:
    """
    Error rate under the best one-to-one matching of clusters to classes

    The matching is searched exhaustively. Confusion rows are true classes,
    columns predicted clusters; permutation[j] is the class cluster j maps to.

    Raises:
        ParameterError: length mismatch or more than six classes
    """
    pred_ids, truth_ids = _as_ids(pred), _as_ids(truth)
    if pred_ids.shape != truth_ids.shape:
        raise ParameterError(f"{pred_ids.size} predictions for {truth_ids.size} labels")
    K = max(int(pred_ids.max()), int(truth_ids.max())) + 1
    if isinstance(pred, Partition):
        K = max(K, pred.K)
    if K > MAX_MATCHED_CLASSES:
        raise ParameterError(f"permutation matching supports at most {MAX_MATCHED_CLASSES} classes, got {K}")

    confusion = _confusion(truth_ids, pred_ids, K)
    best, best_matched = None, -1
    for perm in itertools.permutations(range(K)):
        matched = int(sum(confusion[perm[j], j] for j in range(K)))
        if matched > best_matched:
            best, best_matched = perm, matched
    error = 1.0 - best_matched / truth_ids.size
    return EvalReport(error_rate=error, confusion=confusion.tolist(), permutation=list(best),
                      mean=error, std=0.0)


def classification_error(
    pred: Partition | Sequence[int],
    truth: Sequence[int],
    mask: Optional[Sequence[bool]] = None,
) -> EvalReport:
    """Error rate with class ids taken as they are, over the points selected by mask"""
    pred_ids, truth_ids = _as_ids(pred), _as_ids(truth)
    if pred_ids.shape != truth_ids.shape:
        raise ParameterError(f"{pred_ids.size} predictions for {truth_ids.size} labels")
    K = max(int(pred_ids.max()), int(truth_ids.max())) + 1
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        pred_ids, truth_ids = pred_ids[mask], truth_ids[mask]
    if not truth_ids.size:
        raise ParameterError("no points to evaluate")
    error = float(np.mean(pred_ids != truth_ids))
    return EvalReport(error_rate=error, confusion=_confusion(truth_ids, pred_ids, K).tolist(),
                      mean=error, std=0.0)


def subsample_by_class(dataset: Dataset, counts: Sequence[int], seed: int) -> Dataset:
    """
    Seeded subsample with counts[c] points of class c

    Points keep their original order; classes with a zero count are dropped
    and the remaining labels compacted.
    """
    if dataset.labels is None:
        raise ParameterError("subsampling by class needs labels")
    if len(counts) != dataset.n_classes:
        raise ParameterError(f"{len(counts)} counts for {dataset.n_classes} classes")
    rng = make_rng(seed)
    keep = []
    for c, count in enumerate(counts):
        members = np.flatnonzero(dataset.labels == c)
        if count < 0 or count > members.size:
            raise ParameterError(f"class {c} has {members.size} points, {count} requested")
        keep.append(rng.choice(members, size=count, replace=False))
    keep = np.sort(np.concatenate(keep))
    labels, present = compact_labels(dataset.labels[keep])
    return Dataset(
        points=dataset.points[keep],
        labels=labels,
        name=dataset.name,
        meta={**dataset.meta, "class_counts": [int(c) for c in counts], "component_ids": present},
    )


def prepare_dataset(source: DataSourceConfig, seed: int) -> Dataset:
    """Dataset of one trial: generated or loaded, then subsampled when class_counts is set"""
    if source.kind == "mixture":
        dataset = gen_gaussian_mixture(source.mixture, source.n, seed)
    elif source.kind == "two_moons":
        dataset = gen_two_moons_gaussian(source.n, source.fractions, source.noise, seed)
    else:
        dataset = load_dataset(source.path)
    if source.class_counts is not None:
        dataset = subsample_by_class(dataset, source.class_counts, derive_seed(seed, "subsample"))
    return dataset


def predict(dataset: Dataset, config: ExperimentConfig, seed: int):
    """
    Run the configured learner on one dataset

    Returns:
        (partition, label set or None, selection result or None, graph, ranks)
    """
    graph_config, ranks, selection = select_graph(dataset, config, seed)
    graph = build_graph(dataset, graph_config, ranks)
    if config.algorithm == "sc":
        partition = spectral_cluster(graph, config.K, normalized=config.normalized,
                                     seed=derive_seed(seed, "cluster"))
        return partition, None, selection, graph, ranks
    if dataset.labels is None:
        raise ParameterError("grf needs class labels to draw the labelled set")
    labels = draw_label_set(dataset.labels, config.n_labels, derive_seed(seed, "labels"))
    return grf_propagate(graph, labels).prediction, labels, selection, graph, ranks


def evaluate_prediction(dataset: Dataset, config: ExperimentConfig, partition: Partition, labels) -> EvalReport:
    """Clustering error for SC; error on the unlabelled points for GRF"""
    if dataset.labels is None:
        raise ParameterError("evaluation needs class labels")
    if config.algorithm == "sc":
        return clustering_error(partition, dataset.labels)
    mask = np.ones(dataset.n, dtype=bool)
    mask[labels.indices] = False
    return classification_error(partition, dataset.labels, mask)


def run_trial(config: ExperimentConfig, seed: int) -> TrialResult:
    """One seeded trial; domain errors are recorded instead of raised"""
    try:
        dataset = prepare_dataset(config.data, derive_seed(seed, "data"))
        partition, labels, _, _, _ = predict(dataset, config, seed)
        report = evaluate_prediction(dataset, config, partition, labels)
    except RMDGraphError as e:
        logger.warning("trial with seed %d failed: %s", seed, e)
        return TrialResult(seed=seed, error=str(e))
    return TrialResult(seed=seed, error_rate=report.error_rate, confusion=report.confusion)


def aggregate_trials(trials: List[TrialResult]) -> EvalReport:
    """Mean and std over successful trials; the first success supplies the confusion"""
    done = [t for t in trials if t.error is None]
    if not done:
        raise RMDGraphError(f"all {len(trials)} trials failed; first error: {trials[0].error}")
    rates = np.array([t.error_rate for t in done])
    mean = float(rates.mean())
    return EvalReport(error_rate=mean, confusion=done[0].confusion, trials=trials,
                      mean=mean, std=float(rates.std()))


def run_trials(
    config: ExperimentConfig,
    T: Optional[int] = None,
    seed: Optional[int] = None,
    n_jobs: Optional[int] = None,
) -> EvalReport:
    """
    T independent seeded trials of an experiment

    Each trial redraws the data (generators, class subsamples) and the
    labelled set from its own seed; failed trials are kept in the report.

    Raises:
        RMDGraphError: every trial failed
    """
    T = T or config.trials
    seed = config.seed if seed is None else seed
    if T < 1:
        raise ParameterError(f"T must be >= 1, got {T}")
    logger.info("Running %d trials of '%s' (seed %d)", T, config.name, seed)
    trials = Parallel(n_jobs=n_jobs or get_settings().threads)(
        delayed(run_trial)(config, s) for s in child_seeds(seed, T)
    )
    return aggregate_trials(trials)


def imbalance_sweep(
    config: ExperimentConfig,
    ratios: Sequence[float],
    total: int,
    T: Optional[int] = None,
    seed: Optional[int] = None,
    n_jobs: Optional[int] = None,
) -> List[tuple]:
    """
    Error rates as the class ratio of a two-class dataset varies

    Every ratio r subsamples r * total points of class 0 and the rest of
    class 1, then runs the experiment as configured ("rmd") and with a plain
    k-NN graph of the same k ("knn").

    Returns:
        rows (ratio, method, mean_error, std_error), ratios in the given order
    """
    T = T or config.trials
    seed = config.seed if seed is None else seed
    knn = config.graph.model_copy(update={"method": GraphBuilder.KNN, "lam": 1.0})
    variants = [
        ("knn", config.model_copy(update={"graph": knn, "selection": config.selection.model_copy(update={"mode": "none"})})),
        ("rmd", config),
    ]
    rows = []
    for ratio in ratios:
        if not 0.0 < ratio < 1.0:
            raise ParameterError(f"ratio must lie in (0, 1), got {ratio}")
        counts = allocate_counts(total, [ratio, 1.0 - ratio])
        data = config.data.model_copy(update={"class_counts": counts})
        for method, base in variants:
            report = run_trials(base.model_copy(update={"data": data}), T, seed, n_jobs)
            logger.info("ratio=%.3f method=%s error=%.4f", ratio, method, report.mean)
            rows.append((float(ratio), method, report.mean, report.std))
    return rows
