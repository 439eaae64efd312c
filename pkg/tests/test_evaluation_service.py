"""Tests for error rates, trials and class-imbalance sweeps"""
import numpy as np
import pytest

from app.core.exceptions import ParameterError, RMDGraphError
from app.schemas.schemas import (
    DataSourceConfig,
    ExperimentConfig,
    GraphBuilder,
    GraphConfig,
    Partition,
    TrialResult,
)
from app.services.evaluation_service import (
    aggregate_trials,
    classification_error,
    clustering_error,
    imbalance_sweep,
    prepare_dataset,
    run_trial,
    run_trials,
    subsample_by_class,
)
from app.utils.seeding import child_seeds
from tests.factories import two_cliques_dataset


def _file_config(path, **overrides):
    values = dict(
        data=DataSourceConfig(kind="file", path=str(path)),
        graph=GraphConfig(method=GraphBuilder.KNN, k=6),
    )
    values.update(overrides)
    return ExperimentConfig(**values)


def test_perfect_clustering():
    assert clustering_error([0, 0, 1, 1], [0, 0, 1, 1]).error_rate == 0.0


def test_swapped_cluster_ids():
    report = clustering_error(Partition(assignment=[1, 1, 0, 0], K=2), [0, 0, 1, 1])
    assert report.error_rate == 0.0
    assert report.permutation == [1, 0]


def test_one_misassigned_point():
    report = clustering_error([0, 0, 0, 1], [0, 0, 1, 1])
    assert report.error_rate == pytest.approx(0.25)
    assert report.confusion == [[2, 0], [1, 1]]


def test_too_many_classes_for_matching():
    ids = list(range(7))
    with pytest.raises(ParameterError):
        clustering_error(ids, ids)


def test_classification_error_on_unlabelled_points():
    mask = [False, True, True, True]
    report = classification_error([0, 1, 1, 0], [1, 1, 1, 1], mask)
    assert report.error_rate == pytest.approx(1.0 / 3.0)


def test_subsample_by_class():
    dataset = two_cliques_dataset()
    sub = subsample_by_class(dataset, [5, 15], seed=0)
    assert np.bincount(sub.labels).tolist() == [5, 15]
    assert sub.meta["class_counts"] == [5, 15]


def test_subsample_dropping_a_class_compacts_labels():
    sub = subsample_by_class(two_cliques_dataset(), [0, 4], seed=0)
    assert sub.labels.tolist() == [0, 0, 0, 0]


def test_subsample_asks_for_too_many():
    with pytest.raises(ParameterError):
        subsample_by_class(two_cliques_dataset(), [25, 5], seed=0)


def test_prepare_dataset_applies_class_counts(two_cliques_csv):
    source = DataSourceConfig(kind="file", path=str(two_cliques_csv), class_counts=[4, 8])
    assert prepare_dataset(source, seed=1).n == 12


def test_trials_on_separated_data(two_cliques_csv):
    report = run_trials(_file_config(two_cliques_csv), T=20, seed=0)
    assert report.mean == 0.0
    assert report.std == 0.0
    assert len(report.trials) == 20


def test_single_trial_report(two_cliques_csv):
    config = _file_config(two_cliques_csv)
    report = run_trials(config, T=1, seed=5)
    trial = run_trial(config, child_seeds(5, 1)[0])
    assert report.error_rate == trial.error_rate
    assert report.confusion == trial.confusion


def test_label_propagation_trials(two_cliques_csv):
    config = _file_config(two_cliques_csv, algorithm="grf", n_labels=4)
    report = run_trials(config, T=3, seed=0)
    assert report.mean == 0.0


def test_failed_trial_is_recorded(two_cliques_csv):
    config = _file_config(two_cliques_csv, graph=GraphConfig(method=GraphBuilder.KNN, k=60))
    trial = run_trial(config, seed=0)
    assert trial.error_rate is None
    assert "k=60" in trial.error


def test_aggregate_skips_failed_trials():
    trials = [
        TrialResult(seed=1, error_rate=0.1, confusion=[[9, 1], [0, 10]]),
        TrialResult(seed=2, error="boom"),
        TrialResult(seed=3, error_rate=0.3, confusion=[[7, 3], [3, 7]]),
    ]
    report = aggregate_trials(trials)
    assert report.mean == pytest.approx(0.2)
    assert report.std == pytest.approx(0.1)
    assert len(report.trials) == 3


def test_aggregate_with_no_success():
    with pytest.raises(RMDGraphError):
        aggregate_trials([TrialResult(seed=1, error="boom")])


def test_imbalance_sweep_rows(two_cliques_csv):
    config = _file_config(two_cliques_csv, graph=GraphConfig(method=GraphBuilder.RMD, k=3, lam=0.5, B=2))
    rows = imbalance_sweep(config, [0.25, 0.5], total=20, T=2, seed=0)
    assert [(r[0], r[1]) for r in rows] == [(0.25, "knn"), (0.25, "rmd"), (0.5, "knn"), (0.5, "rmd")]
    assert all(0.0 <= r[2] <= 1.0 for r in rows)


def test_imbalance_sweep_rejects_bad_ratio(two_cliques_csv):
    with pytest.raises(ParameterError):
        imbalance_sweep(_file_config(two_cliques_csv), [1.0], total=20, T=1)


def _moons_config(**graph):
    return ExperimentConfig(
        data=DataSourceConfig(kind="two_moons", n=1000, fractions=[0.45, 0.45, 0.10]),
        graph=GraphConfig(k=30, **graph),
        K=3,
    )


@pytest.mark.slow
def test_rmd_separates_moons_and_blob():
    rmd = run_trials(_moons_config(method=GraphBuilder.RMD, l=30, lam=0.5), T=20, seed=0)
    knn = run_trials(_moons_config(method=GraphBuilder.KNN), T=20, seed=0)
    done = [t for t in rmd.trials if t.error is None]
    assert sum(t.error_rate < 0.1 for t in done) >= 15
    # class 2 is the blob
    assert sum(max(t.confusion[2]) >= 60 for t in done) >= 15
    assert rmd.mean < knn.mean
