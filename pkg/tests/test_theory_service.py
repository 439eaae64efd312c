"""Tests for the closed-form rank and cut limits"""
import math

import numpy as np
import pytest

from app.core.exceptions import DegenerateCutError, ParameterError, UnsupportedDimensionError
from app.schemas.schemas import BalancePreference, DensityModel, MixtureComponent, MixtureSpec
from app.services.data_service import fig1_mixture
from app.services.theory_service import (
    analytic_p,
    balance_condition,
    balance_threshold,
    c_d,
    default_neighbors,
    limit_check,
    limit_ratiocut,
    mixture_density,
    rank_limit,
    rho,
)


def _normal(d):
    return MixtureSpec(components=[MixtureComponent(weight=1.0, mean=[0.0] * d, cov_diag=[1.0] * d)])


def test_density_of_standard_normal():
    assert mixture_density(_normal(1), [0.0]) == pytest.approx(1.0 / math.sqrt(2.0 * math.pi))
    values = mixture_density(_normal(2), np.zeros((3, 2)))
    np.testing.assert_allclose(values, 1.0 / (2.0 * math.pi))


def test_rank_limit_at_the_mode():
    assert analytic_p(DensityModel(mixture=_normal(1)), [0.0]) == pytest.approx(1.0, abs=1e-6)


def test_rank_limit_matches_tail_mass():
    assert analytic_p(_normal(1), [1.0]) == pytest.approx(0.31731, abs=1e-4)


def test_rank_limit_vanishes_in_the_tail():
    values = rank_limit(_normal(1), [[1.0], [2.0], [3.0], [4.0]])
    assert all(b < a for a, b in zip(values, values[1:]))
    assert values[-1] < 1e-3


def test_rank_limit_in_two_dimensions():
    # for a standard 2-D normal the mass of {f <= f(y)} is exp(-|y|^2 / 2)
    assert analytic_p(_normal(2), [1.0, 0.0]) == pytest.approx(math.exp(-0.5), abs=1e-3)


def test_rank_limit_of_bimodal_line():
    mix = MixtureSpec(components=[
        MixtureComponent(weight=0.5, mean=[-3.0], cov_diag=[1.0]),
        MixtureComponent(weight=0.5, mean=[3.0], cov_diag=[1.0]),
    ])
    # the valley between the modes is a low-density point
    assert analytic_p(mix, [0.0]) < 0.05
    assert analytic_p(mix, [3.0]) == pytest.approx(1.0, abs=1e-3)


def test_three_dimensions_are_unsupported():
    with pytest.raises(UnsupportedDimensionError):
        analytic_p(_normal(3), [0.0, 0.0, 0.0])


def test_rho_endpoints():
    assert rho(0.3, 1.0) == 1.0
    assert rho(1.0, 0.4) == pytest.approx(1.6)
    assert rho(0.0, 0.4) == pytest.approx(0.4)
    assert rho(0.5, 0.0) == pytest.approx(1.0)


def test_rho_rejects_out_of_range():
    with pytest.raises(ParameterError):
        rho(1.5, 0.5)
    with pytest.raises(ParameterError):
        rho(0.5, -0.1)


def test_cut_constants():
    assert c_d(1) == pytest.approx(0.25)
    assert c_d(2) == pytest.approx(4.0 / (3.0 * math.pi ** 1.5))
    assert c_d(2) == pytest.approx(0.2394, abs=1e-3)


def test_knn_limit_on_a_line():
    prediction = limit_ratiocut(_normal(1), 0, 0.0, 1.0)
    assert prediction.surface_integral == pytest.approx(1.0)
    assert prediction.mu_plus == pytest.approx(0.5)
    assert prediction.value == pytest.approx(1.0)


def test_knn_limit_in_the_plane():
    # integral of sqrt(f) along x0 = 0 for a standard normal is sqrt(2)
    prediction = limit_ratiocut(_normal(2), 0, 0.0, 1.0)
    assert prediction.surface_integral == pytest.approx(math.sqrt(2.0), rel=1e-6)
    assert prediction.value == pytest.approx(c_d(2) * math.sqrt(2.0) * 4.0, rel=1e-6)


def test_rank_modulation_lowers_the_valley_cut():
    mix = MixtureSpec(components=[
        MixtureComponent(weight=0.5, mean=[-3.0], cov_diag=[1.0]),
        MixtureComponent(weight=0.5, mean=[3.0], cov_diag=[1.0]),
    ])
    knn = limit_ratiocut(mix, 0, 0.0, 1.0)
    rmd = limit_ratiocut(mix, 0, 0.0, 0.4)
    assert rmd.value < knn.value


def test_cut_outside_the_mass_is_degenerate():
    with pytest.raises(DegenerateCutError):
        limit_ratiocut(_normal(1), 0, 100.0, 1.0)


def test_cut_axis_out_of_range():
    with pytest.raises(ParameterError):
        limit_ratiocut(_normal(2), 2, 0.0, 1.0)


def test_balance_threshold():
    assert balance_threshold(0.1) == pytest.approx(0.36)
    assert balance_condition(0.36, 0.1) == BalancePreference.TIE
    assert balance_condition(0.3, 0.1) == BalancePreference.UNBALANCED
    assert balance_condition(0.5, 0.1) == BalancePreference.BALANCED
    assert balance_condition(1.0, 0.5) == BalancePreference.TIE


def test_balance_condition_rejects_bad_y():
    with pytest.raises(ParameterError):
        balance_condition(0.3, 0.0)
    with pytest.raises(ParameterError):
        balance_condition(0.3, 0.6)


def test_default_neighbors():
    assert default_neighbors(2000) == 48
    assert default_neighbors(1) == 1


@pytest.mark.slow
def test_valley_limit_below_balanced_limit():
    mix = fig1_mixture()
    assert limit_ratiocut(mix, 0, 1.0, 0.4).value < limit_ratiocut(mix, 0, 4.0, 0.4).value


@pytest.mark.slow
def test_knn_limit_check_on_a_line():
    report = limit_check(_normal(1), 0, 0.0, 1.0, n=2000, seeds=10, seed=0)
    assert report.relative_error <= 0.35
    assert len(report.per_seed) == 10


@pytest.mark.slow
def test_rmd_limit_ratio_valley_against_balanced():
    mix = fig1_mixture()
    valley = limit_check(mix, 0, 1.0, 0.4, n=2000, seeds=10, seed=0)
    balanced = limit_check(mix, 0, 4.0, 0.4, n=2000, seeds=10, seed=0)
    assert valley.relative_error <= 0.35
    assert balanced.relative_error <= 0.35
    predicted = valley.predicted / balanced.predicted
    empirical = valley.empirical_mean / balanced.empirical_mean
    assert abs(empirical - predicted) <= 0.2 * predicted
