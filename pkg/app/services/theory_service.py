"""
Theory Service - closed-form limits of ranks and cuts on Gaussian mixtures

Everything here is evaluated from the mixture density itself and serves as an
oracle for the sample-based services.
"""
import logging
import math
from typing import Callable, List, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy import integrate, optimize, special, stats

from app.core.config import get_settings
from app.core.exceptions import DegenerateCutError, ParameterError, UnsupportedDimensionError
from app.schemas.schemas import (
    BalancePreference,
    DensityModel,
    Hyperplane,
    LimitCheckReport,
    LimitCutPrediction,
    MixtureSpec,
    StatVariant,
)
from app.services.data_service import gen_gaussian_mixture
from app.services.graph_service import build_knn_graph, build_rmd_graph
from app.services.rank_service import DEFAULT_RESAMPLES, compute_ranks_ustat
from app.services.spectral_service import cut_metrics, hyperplane_partition
from app.utils.seeding import child_seeds, derive_seed

logger = logging.getLogger(__name__)

TAIL_STDS = 8.0
ROOT_GRID = 401
QUAD_EPSABS = 1e-8
QUAD_LIMIT = 200
SURFACE_NODES = 64
TIE_TOL = 1e-12
MIN_CUT_MASS = 1e-6
MAX_ANALYTIC_DIM = 2


def _as_model(model: DensityModel | MixtureSpec) -> DensityModel:
    return model if isinstance(model, DensityModel) else DensityModel(mixture=model)


def mixture_density(model: DensityModel | MixtureSpec, x) -> np.ndarray | float:
    """f(x) for one point (returns a float) or an m x d array of points"""
    mix = _as_model(model).mixture
    pts = np.asarray(x, dtype=float)
    single = pts.ndim <= 1
    pts = pts.reshape(-1, mix.dim)
    comp = stats.norm.pdf(pts[:, None, :], loc=mix.means[None], scale=mix.stds[None]).prod(axis=2)
    values = comp @ mix.weights
    return float(values[0]) if single else values


def _section(mix: MixtureSpec, axis: int, fixed: Optional[tuple[int, float]] = None):
    """
    Weights, means and stds of the mixture seen along one axis, with the other
    coordinate (if any) frozen at a value and folded into the weights
    """
    weights = mix.weights.copy()
    if fixed is not None:
        other, value = fixed
        weights = weights * stats.norm.pdf(value, loc=mix.means[:, other], scale=mix.stds[:, other])
    return weights, mix.means[:, axis], mix.stds[:, axis]


def _bounds(means: np.ndarray, stds: np.ndarray) -> tuple[float, float]:
    return float((means - TAIL_STDS * stds).min()), float((means + TAIL_STDS * stds).max())


def _superlevel_intervals(g: Callable[[np.ndarray], np.ndarray], lo: float, hi: float) -> List[tuple[float, float]]:
    """Intervals of [lo, hi] where g > 0, with ends refined by brentq"""
    grid = np.linspace(lo, hi, ROOT_GRID)
    positive = g(grid) > 0
    intervals = []
    i = 0
    while i < len(grid):
        if not positive[i]:
            i += 1
            continue
        j = i
        while j + 1 < len(grid) and positive[j + 1]:
            j += 1
        scalar = lambda t: float(g(np.array([t]))[0])
        a = lo if i == 0 else optimize.brentq(scalar, grid[i - 1], grid[i], xtol=1e-13)
        b = hi if j == len(grid) - 1 else optimize.brentq(scalar, grid[j], grid[j + 1], xtol=1e-13)
        intervals.append((a, b))
        i = j + 1
    return intervals


def _interval_mass(weights, means, stds, intervals) -> float:
    mass = 0.0
    for a, b in intervals:
        mass += float(np.sum(weights * (stats.norm.cdf(b, means, stds) - stats.norm.cdf(a, means, stds))))
    return mass


def _section_pdf(weights, means, stds) -> Callable[[np.ndarray], np.ndarray]:
    return lambda t: stats.norm.pdf(np.asarray(t)[:, None], means, stds) @ weights


def _check_dim(d: int) -> None:
    if d > MAX_ANALYTIC_DIM:
        raise UnsupportedDimensionError(f"analytic routines support d <= {MAX_ANALYTIC_DIM}, got d={d}")


def analytic_p(model: DensityModel | MixtureSpec, y) -> float:
    """
    Limit of the density rank: the mass of {x : f(x) <= f(y)}

    Computed as 1 minus the mass where f exceeds f(y). In one dimension that
    superlevel set is a union of intervals whose mass comes from the normal
    CDFs; in two dimensions the same is done per x1 section and integrated
    with adaptive quadrature.

    Raises:
        UnsupportedDimensionError: d > 2
    """
    model = _as_model(model)
    mix = model.mixture
    _check_dim(mix.dim)
    target = mixture_density(model, y)

    if mix.dim == 1:
        w, m, s = _section(mix, 0)
        pdf = _section_pdf(w, m, s)
        mass = _interval_mass(w, m, s, _superlevel_intervals(lambda t: pdf(t) - target, *_bounds(m, s)))
    else:
        lo0, hi0 = _bounds(mix.means[:, 0], mix.stds[:, 0])
        lo1, hi1 = _bounds(mix.means[:, 1], mix.stds[:, 1])

        def section_mass(x0: float) -> float:
            w, m, s = _section(mix, 1, fixed=(0, x0))
            pdf = _section_pdf(w, m, s)
            return _interval_mass(w, m, s, _superlevel_intervals(lambda t: pdf(t) - target, lo1, hi1))

        mass, _ = integrate.quad(section_mass, lo0, hi0, epsabs=QUAD_EPSABS, limit=QUAD_LIMIT)
    return float(min(1.0, max(0.0, 1.0 - mass)))


def rank_limit(model: DensityModel | MixtureSpec, points: Sequence) -> List[float]:
    """analytic_p for each point"""
    return [analytic_p(model, y) for y in points]


def rho(p_value: float, lam: float) -> float:
    """Degree modulation lambda + 2(1 - lambda) p, which lies in [lambda, 2 - lambda]"""
    if not 0.0 <= p_value <= 1.0:
        raise ParameterError(f"p must lie in [0, 1], got {p_value}")
    if not 0.0 <= lam <= 1.0:
        raise ParameterError(f"lambda must lie in [0, 1], got {lam}")
    return lam + 2.0 * (1.0 - lam) * p_value


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2.0) / special.gamma(d / 2.0 + 1.0)


def c_d(d: int) -> float:
    """2 eta_{d-1} / ((d + 1) eta_d^(1 + 1/d)), eta_k the unit-ball volume (eta_0 = 1)"""
    if d < 1:
        raise ParameterError(f"d must be >= 1, got {d}")
    return 2.0 * unit_ball_volume(d - 1) / ((d + 1) * unit_ball_volume(d) ** (1.0 + 1.0 / d))


def _side_masses(mix: MixtureSpec, axis: int, at: float) -> tuple[float, float]:
    below = float(np.sum(mix.weights * stats.norm.cdf(at, mix.means[:, axis], mix.stds[:, axis])))
    return 1.0 - below, below


def limit_ratiocut(
    model: DensityModel | MixtureSpec,
    axis: int,
    at: float,
    lam: float,
) -> LimitCutPrediction:
    """
    Limit of the scaled RatioCut of the hyperplane {x_axis = at}

    C_d * integral over the hyperplane of f^(1-1/d) rho^(1+1/d) times
    (1/mu(C+) + 1/mu(C-)). In one dimension the integral is rho^2 at the cut
    point; in two it runs along the line with Gauss-Legendre nodes. With
    lambda = 1 rho is 1 and no rank limit is evaluated.

    Raises:
        UnsupportedDimensionError: d > 2
        ParameterError: axis out of range
        DegenerateCutError: one side carries less than 1e-6 of the mass
    """
    model = _as_model(model)
    mix = model.mixture
    d = mix.dim
    _check_dim(d)
    if not 0 <= axis < d:
        raise ParameterError(f"axis {axis} outside 0..{d - 1}")
    if not 0.0 <= lam <= 1.0:
        raise ParameterError(f"lambda must lie in [0, 1], got {lam}")
    mu_plus, mu_minus = _side_masses(mix, axis, at)
    if min(mu_plus, mu_minus) < MIN_CUT_MASS:
        raise DegenerateCutError(f"cut at {at} leaves mass {min(mu_plus, mu_minus):.3g} on one side")

    def rho_at(point: np.ndarray) -> float:
        return 1.0 if lam == 1.0 else rho(analytic_p(model, point), lam)

    if d == 1:
        surface = rho_at(np.array([at])) ** 2
    else:
        other = 1 - axis
        lo, hi = _bounds(mix.means[:, other], mix.stds[:, other])
        nodes, weights = np.polynomial.legendre.leggauss(SURFACE_NODES)
        s = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
        pts = np.empty((SURFACE_NODES, 2))
        pts[:, axis] = at
        pts[:, other] = s
        f = mixture_density(model, pts)
        r = np.array([rho_at(p) for p in pts])
        surface = 0.5 * (hi - lo) * float(np.sum(weights * np.sqrt(f) * r ** 1.5))

    const = c_d(d)
    return LimitCutPrediction(
        value=const * surface * (1.0 / mu_plus + 1.0 / mu_minus),
        surface_integral=surface,
        mu_plus=mu_plus,
        mu_minus=mu_minus,
        c_d=const,
        lam=lam,
    )


def balance_threshold(y: float) -> float:
    return 4.0 * y * (1.0 - y)


def balance_condition(q: float, y: float) -> BalancePreference:
    """
    Which split RatioCut prefers for cut-ratio q and unbalancedness y

    The unbalanced split wins iff q < 4y(1 - y); equality within 1e-12 is a tie.
    """
    if q < 0:
        raise ParameterError(f"q must be >= 0, got {q}")
    if not 0.0 < y <= 0.5:
        raise ParameterError(f"y must lie in (0, 0.5], got {y}")
    threshold = balance_threshold(y)
    if abs(q - threshold) <= TIE_TOL:
        return BalancePreference.TIE
    return BalancePreference.UNBALANCED if q < threshold else BalancePreference.BALANCED


def default_neighbors(n: int) -> int:
    """ceil(n^0.6 / 2), the neighbour scale used for the limit checks"""
    return int(math.ceil(n ** 0.6 / 2.0))


def _scaled_ratiocut(
    mixture: MixtureSpec,
    axis: int,
    at: float,
    lam: float,
    n: int,
    k: int,
    l: int,
    B: int,
    seed: int,
) -> float:
    dataset = gen_gaussian_mixture(mixture, n, derive_seed(seed, "data"))
    if lam == 1.0:
        graph = build_knn_graph(dataset, k)
    else:
        ranks = compute_ranks_ustat(dataset, StatVariant(l=l), B=B, seed=derive_seed(seed, "rank"), n_jobs=1)
        graph = build_rmd_graph(dataset, ranks, k, lam)
    cut_plane = Hyperplane.axis_aligned(axis, at, dataset.d)
    partition = hyperplane_partition(dataset, cut_plane, seed=derive_seed(seed, "cutline"))
    # the limit counts every crossing edge from both of its endpoints
    ratio_cut = 2.0 * cut_metrics(graph, partition).ratio_cut
    return ratio_cut * (n / k) ** (1.0 / dataset.d) / k


def limit_check(
    mixture: MixtureSpec,
    axis: int,
    at: float,
    lam: float,
    n: int = 2000,
    seeds: int = 10,
    seed: int = 0,
    k: Optional[int] = None,
    l: Optional[int] = None,
    B: int = DEFAULT_RESAMPLES,
    n_jobs: Optional[int] = None,
) -> LimitCheckReport:
    """
    Compare (1/k)(n/k)^(1/d) * RatioCut of a fixed hyperplane, averaged over
    seeded samples, with limit_ratiocut. RatioCut here sums over ordered node
    pairs, so each undirected crossing edge counts twice.
    """
    k = k or default_neighbors(n)
    l = l or k
    predicted = limit_ratiocut(DensityModel(mixture=mixture), axis, at, lam).value
    logger.info("Limit check: axis=%d at=%.3f lambda=%.2f n=%d k=%d seeds=%d", axis, at, lam, n, k, seeds)
    per_seed = Parallel(n_jobs=n_jobs or get_settings().threads)(
        delayed(_scaled_ratiocut)(mixture, axis, at, lam, n, k, l, B, s) for s in child_seeds(seed, seeds)
    )
    mean = float(np.mean(per_seed))
    return LimitCheckReport(
        axis=axis,
        at=at,
        lam=lam,
        n=n,
        k=k,
        predicted=predicted,
        empirical_mean=mean,
        empirical_std=float(np.std(per_seed)),
        relative_error=abs(mean - predicted) / predicted,
        per_seed=[float(v) for v in per_seed],
    )
