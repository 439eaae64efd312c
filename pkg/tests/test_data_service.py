"""Tests for dataset loading and the synthetic generators"""
import numpy as np
import pytest

from app.core.exceptions import DatasetError, ParameterError
from app.schemas.schemas import MixtureComponent, MixtureSpec
from app.services.data_service import (
    BLOB_CENTER,
    MOON_OFFSET,
    allocate_counts,
    fig1_mixture,
    gen_gaussian_mixture,
    gen_two_moons_gaussian,
    load_dataset,
    save_dataset,
    three_gaussian_mixture,
)


def _write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_plain_rows(tmp_path):
    dataset = load_dataset(_write(tmp_path, "0,0\n1,0\n2,0\n"))
    assert (dataset.n, dataset.d) == (3, 2)
    assert dataset.labels is None


def test_load_label_column(tmp_path):
    dataset = load_dataset(_write(tmp_path, "x0,x1,label\n0,0,0\n1,0,0\n5,5,1\n"))
    assert dataset.n_classes == 2
    assert dataset.labels.tolist() == [0, 0, 1]


def test_load_rejects_non_finite_with_row(tmp_path):
    with pytest.raises(DatasetError) as err:
        load_dataset(_write(tmp_path, "1,NaN\n"))
    assert err.value.row == 1


def test_load_rejects_ragged_row(tmp_path):
    with pytest.raises(DatasetError) as err:
        load_dataset(_write(tmp_path, "0,0\n1,0\n2\n"))
    assert err.value.row == 3


def test_load_rejects_empty_file(tmp_path):
    with pytest.raises(DatasetError):
        load_dataset(_write(tmp_path, ""))


def test_save_then_load_keeps_points_and_labels(tmp_path):
    dataset = gen_gaussian_mixture(fig1_mixture(), 50, seed=3)
    loaded = load_dataset(save_dataset(dataset, tmp_path / "mix.csv"))
    np.testing.assert_array_equal(loaded.points, dataset.points)
    np.testing.assert_array_equal(loaded.labels, dataset.labels)


def test_unbalanced_mixture_counts():
    dataset = gen_gaussian_mixture(fig1_mixture(), 1000, seed=0)
    counts = np.bincount(dataset.labels)
    # 4 standard deviations of a Binomial(1000, 0.1)
    assert abs(counts[0] - 900) < 40
    assert abs(counts[1] - 100) < 40


def test_single_component_mean():
    spec = MixtureSpec(components=[MixtureComponent(weight=1.0, mean=[0.0, 0.0], cov_diag=[1.0, 1.0])])
    dataset = gen_gaussian_mixture(spec, 10000, seed=1)
    assert np.all(np.abs(dataset.points.mean(axis=0)) < 0.05)


def test_three_component_mixture_is_labelled():
    dataset = gen_gaussian_mixture(three_gaussian_mixture(), 1100, seed=2)
    assert dataset.n_classes == 3
    assert dataset.n == 1100


def test_mixture_counts_follow_multinomial():
    spec = fig1_mixture()
    counts = np.array([np.bincount(gen_gaussian_mixture(spec, 1000, s).labels, minlength=2) for s in range(50)])
    std = np.sqrt(1000 * 0.9 * 0.1)
    assert np.all(np.abs(counts.mean(axis=0) - [900, 100]) <= 3 * std)


def test_generators_are_deterministic():
    a = gen_gaussian_mixture(fig1_mixture(), 200, seed=7)
    b = gen_gaussian_mixture(fig1_mixture(), 200, seed=7)
    np.testing.assert_array_equal(a.points, b.points)
    c = gen_two_moons_gaussian(100, [0.45, 0.45, 0.10], 0.1, seed=7)
    d = gen_two_moons_gaussian(100, [0.45, 0.45, 0.10], 0.1, seed=7)
    np.testing.assert_array_equal(c.points, d.points)


def test_two_moons_class_counts():
    dataset = gen_two_moons_gaussian(1000, [0.45, 0.45, 0.10], 0.1, seed=0)
    assert np.bincount(dataset.labels).tolist() == [450, 450, 100]
    blob = dataset.points[dataset.labels == 2]
    assert np.allclose(blob.mean(axis=0), BLOB_CENTER, atol=0.15)


def test_two_moons_without_blob():
    dataset = gen_two_moons_gaussian(20, [0.5, 0.5, 0.0], 0.05, seed=0)
    assert dataset.n_classes == 2
    assert dataset.n == 20


@pytest.mark.parametrize("offset", [MOON_OFFSET, (3.0, -1.0)])
def test_lower_moon_follows_offset(offset):
    dataset = gen_two_moons_gaussian(60, [0.5, 0.5, 0.0], 0.0, seed=0, moon_offset=offset)
    lower = dataset.points[dataset.labels == 1]
    np.testing.assert_allclose(np.linalg.norm(lower - np.asarray(offset), axis=1), 1.0)
    assert np.all(lower[:, 1] <= offset[1] + 1e-12)
    upper = dataset.points[dataset.labels == 0]
    np.testing.assert_allclose(np.linalg.norm(upper, axis=1), 1.0)
    assert dataset.meta["moon_offset"] == list(offset)


def test_two_moons_rejects_bad_fractions():
    with pytest.raises(ParameterError):
        gen_two_moons_gaussian(100, [0.5, 0.6, 0.1], 0.1, seed=0)


def test_allocate_counts_largest_remainder():
    assert allocate_counts(10, [1 / 3, 1 / 3, 1 / 3]) == [4, 3, 3]
    assert allocate_counts(1000, [0.45, 0.45, 0.10]) == [450, 450, 100]


def test_mixture_weights_must_sum_to_one():
    with pytest.raises(ValueError):
        MixtureSpec(components=[
            MixtureComponent(weight=0.5, mean=[0.0], cov_diag=[1.0]),
            MixtureComponent(weight=0.4, mean=[1.0], cov_diag=[1.0]),
        ])
