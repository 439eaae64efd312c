"""
Pydantic schemas for the domain types, experiment configuration and API payloads
"""
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


def _frozen_array(value: Any, dtype: Any) -> np.ndarray:
    arr = np.array(value, dtype=dtype)
    arr.setflags(write=False)
    return arr


class ArrayModel(BaseModel):
    """Immutable model that may hold numpy arrays"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


# Enums
class StatVariantKind(str, Enum):
    AVG_KNN = "avg-knn"
    WEIGHTED_AVG_KNN = "weighted-avg-knn"
    LNN_DISTANCE = "lnn-distance"
    EPS_COUNT = "eps-count"


class WeightKind(str, Enum):
    UNIT = "unit"
    RBF = "rbf"


class GraphBuilder(str, Enum):
    KNN = "knn"
    RMD = "rmd"
    EPS = "eps"
    FULL_RBF = "full-rbf"


class BalancePreference(str, Enum):
    UNBALANCED = "unbalanced-preferred"
    BALANCED = "balanced-preferred"
    TIE = "tie"


# ==================== DATA SCHEMAS ====================
class MixtureComponent(BaseModel):
    """One diagonal Gaussian component of a mixture"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    weight: float = Field(..., ge=0.0)
    mean: List[float] = Field(..., min_length=1)
    cov_diag: List[float] = Field(..., min_length=1)

    @field_validator("cov_diag")
    @classmethod
    def positive_variances(cls, v):
        if any(not np.isfinite(c) or c <= 0 for c in v):
            raise ValueError("covariance diagonal must be strictly positive")
        return v

    @model_validator(mode="after")
    def same_dimension(self):
        if len(self.mean) != len(self.cov_diag):
            raise ValueError("mean and cov_diag lengths differ")
        return self


class MixtureSpec(BaseModel):
    """Weighted sum of diagonal Gaussians"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    components: List[MixtureComponent] = Field(..., min_length=1)

    @model_validator(mode="after")
    def check_components(self):
        total = sum(c.weight for c in self.components)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"component weights sum to {total!r}, expected 1")
        dims = {len(c.mean) for c in self.components}
        if len(dims) != 1:
            raise ValueError("components have different dimensions")
        return self

    @classmethod
    def from_ratios(cls, ratios, means, cov_diags) -> "MixtureSpec":
        """Build a mixture from unnormalised weights, e.g. 2:8:1"""
        ratios = [float(r) for r in ratios]
        total = sum(ratios)
        weights = [r / total for r in ratios]
        # absorb rounding so the weights sum to 1 within 1e-12
        weights[-1] = 1.0 - sum(weights[:-1])
        return cls(components=[
            MixtureComponent(weight=w, mean=list(m), cov_diag=list(c))
            for w, m, c in zip(weights, means, cov_diags)
        ])

    @property
    def dim(self) -> int:
        return len(self.components[0].mean)

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])

    @property
    def means(self) -> np.ndarray:
        return np.array([c.mean for c in self.components], dtype=float)

    @property
    def stds(self) -> np.ndarray:
        return np.sqrt(np.array([c.cov_diag for c in self.components], dtype=float))


class Dataset(ArrayModel):
    """n points in d dimensions with optional class labels"""
    points: np.ndarray
    labels: Optional[np.ndarray] = None
    name: str = "dataset"
    meta: Dict[str, Any] = Field(default_factory=dict)

    @field_validator("points", mode="before")
    @classmethod
    def as_matrix(cls, v):
        arr = np.array(v, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        arr.setflags(write=False)
        return arr

    @field_validator("labels", mode="before")
    @classmethod
    def as_label_vector(cls, v):
        if v is None:
            return None
        arr = np.asarray(v)
        if arr.size and not np.all(np.equal(np.mod(arr, 1), 0)):
            raise ValueError("labels must be integers")
        return _frozen_array(arr, np.int64)

    @model_validator(mode="after")
    def check_shape(self):
        if self.points.ndim != 2:
            raise ValueError("points must be an n x d matrix")
        n, d = self.points.shape
        if n < 2 or d < 1:
            raise ValueError(f"need n >= 2 and d >= 1, got n={n}, d={d}")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("all coordinates must be finite")
        if self.labels is not None:
            if self.labels.shape != (n,):
                raise ValueError("labels length differs from point count")
            if self.labels.min() < 0:
                raise ValueError("labels must be non-negative")
            K = int(self.labels.max()) + 1
            missing = np.setdiff1d(np.arange(K), self.labels)
            if missing.size:
                raise ValueError(f"class ids {missing.tolist()} never occur")
        return self

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def n_classes(self) -> int:
        return 0 if self.labels is None else int(self.labels.max()) + 1


# ==================== RANK SCHEMAS ====================
class StatVariant(BaseModel):
    """Nearest-neighbour statistic G used for ranking"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: StatVariantKind = StatVariantKind.AVG_KNN
    l: int = Field(default=30, ge=1, description="Neighbour scale")
    eps: Optional[float] = None

    @model_validator(mode="after")
    def eps_for_count(self):
        if self.kind == StatVariantKind.EPS_COUNT and (self.eps is None or self.eps <= 0):
            raise ValueError("eps-count needs eps > 0")
        return self


class RankVector(ArrayModel):
    """Per-point rank R(x) averaged over B half-split resamples"""
    ranks: np.ndarray
    statistic: np.ndarray
    variant: StatVariant
    B: int = Field(..., ge=1)
    seed: int

    @field_validator("ranks", "statistic", mode="before")
    @classmethod
    def as_vector(cls, v):
        return _frozen_array(v, float).reshape(-1)

    @model_validator(mode="after")
    def same_length(self):
        if self.ranks.shape != self.statistic.shape:
            raise ValueError("ranks and statistic lengths differ")
        if np.any(self.ranks <= 0) or np.any(self.ranks > 1):
            raise ValueError("ranks must lie in (0, 1]")
        return self

    @property
    def n(self) -> int:
        return self.ranks.shape[0]


# ==================== GRAPH SCHEMAS ====================
class WeightScheme(BaseModel):
    """Edge weights: unit, or RBF with bandwidth sigma"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: WeightKind = WeightKind.UNIT
    sigma: Optional[float] = None

    @model_validator(mode="after")
    def sigma_for_rbf(self):
        if self.kind == WeightKind.RBF and (self.sigma is None or self.sigma <= 0):
            raise ValueError("rbf weights need sigma > 0")
        return self

    @classmethod
    def unit(cls) -> "WeightScheme":
        return cls(kind=WeightKind.UNIT)

    @classmethod
    def rbf(cls, sigma: float) -> "WeightScheme":
        return cls(kind=WeightKind.RBF, sigma=sigma)


class DegreeProfile(ArrayModel):
    """Pre-symmetrization RMD degrees, one per node"""
    degrees: np.ndarray
    k: int = Field(..., ge=1)
    lam: float = Field(..., ge=0.0, le=1.0)

    @field_validator("degrees", mode="before")
    @classmethod
    def as_ints(cls, v):
        return _frozen_array(v, np.int64).reshape(-1)

    @model_validator(mode="after")
    def degrees_in_range(self):
        n = self.degrees.size
        if n < 2:
            raise ValueError("degree profile needs at least two nodes")
        if self.degrees.min() < 1 or self.degrees.max() > n - 1:
            raise ValueError(f"degrees must lie in [1, {n - 1}]")
        return self


class GraphMeta(BaseModel):
    model_config = ConfigDict(frozen=True)

    builder: GraphBuilder
    k: Optional[int] = None
    lam: Optional[float] = None
    eps: Optional[float] = None
    sigma: Optional[float] = None
    weight: WeightKind = WeightKind.UNIT


class Graph(ArrayModel):
    """Undirected weighted graph; each edge stored once with rows < cols"""
    n: int = Field(..., ge=1)
    rows: np.ndarray
    cols: np.ndarray
    weights: np.ndarray
    meta: GraphMeta
    degree_profile: Optional[DegreeProfile] = None

    @field_validator("rows", "cols", mode="before")
    @classmethod
    def as_index(cls, v):
        return _frozen_array(v, np.int64).reshape(-1)

    @field_validator("weights", mode="before")
    @classmethod
    def as_weights(cls, v):
        return _frozen_array(v, float).reshape(-1)

    @model_validator(mode="after")
    def check_edges(self):
        if not (self.rows.shape == self.cols.shape == self.weights.shape):
            raise ValueError("edge arrays differ in length")
        if self.rows.size:
            if np.any(self.rows >= self.cols):
                raise ValueError("edges must satisfy u < v (no self loops)")
            if self.rows.min() < 0 or self.cols.max() >= self.n:
                raise ValueError("edge endpoint out of range")
            keys = self.rows * self.n + self.cols
            if np.unique(keys).size != keys.size:
                raise ValueError("duplicate edge")
            if np.any(~(self.weights > 0)):
                raise ValueError("edge weights must be positive")
        if self.degree_profile is not None and self.degree_profile.degrees.size != self.n:
            raise ValueError(f"degree profile has {self.degree_profile.degrees.size} entries for {self.n} nodes")
        return self

    @property
    def n_edges(self) -> int:
        return int(self.rows.size)

    def edge_set(self) -> set:
        return set(zip(self.rows.tolist(), self.cols.tolist()))


# ==================== SPECTRAL SCHEMAS ====================
class Hyperplane(BaseModel):
    """Points with x . normal > offset fall on side 1"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    normal: List[float] = Field(..., min_length=1)
    offset: float = 0.0

    @field_validator("normal")
    @classmethod
    def nonzero(cls, v):
        if not any(x != 0 for x in v):
            raise ValueError("normal must be nonzero")
        return v

    @classmethod
    def axis_aligned(cls, axis: int, at: float, d: int) -> "Hyperplane":
        normal = [0.0] * d
        normal[axis] = 1.0
        return cls(normal=normal, offset=at)


class Partition(ArrayModel):
    """Assignment of n nodes to K clusters"""
    assignment: np.ndarray
    K: int = Field(..., ge=1)

    @field_validator("assignment", mode="before")
    @classmethod
    def as_ids(cls, v):
        return _frozen_array(v, np.int64).reshape(-1)

    @model_validator(mode="after")
    def ids_in_range(self):
        if self.assignment.size and (self.assignment.min() < 0 or self.assignment.max() >= self.K):
            raise ValueError(f"cluster ids must lie in 0..{self.K - 1}")
        return self

    @property
    def n(self) -> int:
        return int(self.assignment.size)

    @property
    def sizes(self) -> List[int]:
        return np.bincount(self.assignment, minlength=self.K).tolist()

    @property
    def is_degenerate(self) -> bool:
        """True when some cluster is empty"""
        return min(self.sizes) == 0


class CutReport(BaseModel):
    """Cut, RatioCut and NCut of a partition (each undirected edge counted once)"""
    model_config = ConfigDict(frozen=True)

    cut: float = Field(..., ge=0.0)
    ratio_cut: float = Field(..., ge=0.0)
    ncut: float = Field(..., ge=0.0)
    sizes: List[int]
    volumes: List[float]
    boundary_cuts: List[float]


# ==================== SSL SCHEMAS ====================
class LabelSet(ArrayModel):
    """Labelled nodes (index, class) with at least one sample per class"""
    indices: np.ndarray
    classes: np.ndarray
    K: int = Field(..., ge=1)

    @field_validator("indices", "classes", mode="before")
    @classmethod
    def as_ints(cls, v):
        return _frozen_array(v, np.int64).reshape(-1)

    @model_validator(mode="after")
    def check_pairs(self):
        if self.indices.shape != self.classes.shape:
            raise ValueError("indices and classes lengths differ")
        if np.unique(self.indices).size != self.indices.size:
            raise ValueError("labelled indices must be distinct")
        if self.indices.size and self.indices.min() < 0:
            raise ValueError("labelled indices must be non-negative")
        if self.classes.size and (self.classes.min() < 0 or self.classes.max() >= self.K):
            raise ValueError(f"classes must lie in 0..{self.K - 1}")
        missing = np.setdiff1d(np.arange(self.K), self.classes)
        if missing.size:
            raise ValueError(f"no labelled sample for classes {missing.tolist()}")
        return self


class GRFResult(ArrayModel):
    scores: np.ndarray
    prediction: Partition


# ==================== SELECTION SCHEMAS ====================
class SelectionEntry(BaseModel):
    """One grid point of a model selection scan"""
    params: Dict[str, float]
    cut: Optional[float] = None
    ratio_cut: Optional[float] = None
    min_fraction: Optional[float] = None
    feasible: bool = False
    error: Optional[str] = None


class SelectionResult(ArrayModel):
    chosen: Dict[str, float]
    objective: float
    partition: Partition
    trace: List[SelectionEntry]


class DeltaPoint(BaseModel):
    delta: float
    cut: Optional[float] = None
    position: Optional[float] = None
    lam: Optional[float] = None
    feasible: bool = False


class FlatSegment(BaseModel):
    """A run of consecutive delta points with (nearly) constant cut and position"""
    delta_high: float
    delta_low: float
    start: int
    end: int
    cut: float
    position: Optional[float] = None


class DeltaCurve(BaseModel):
    points: List[DeltaPoint]
    flat_segments: List[FlatSegment] = []


# ==================== THEORY SCHEMAS ====================
class DensityModel(BaseModel):
    """Closed-form mixture density used as an analytic oracle"""
    model_config = ConfigDict(frozen=True)

    mixture: MixtureSpec

    @property
    def d(self) -> int:
        return self.mixture.dim


class LimitCutPrediction(BaseModel):
    value: float
    surface_integral: float
    mu_plus: float
    mu_minus: float
    c_d: float
    lam: float


class LimitCheckReport(BaseModel):
    """Empirically scaled RatioCut of a fixed hyperplane against its limit"""
    axis: int
    at: float
    lam: float
    n: int
    k: int
    predicted: float
    empirical_mean: float
    empirical_std: float
    relative_error: float
    per_seed: List[float]


# ==================== EVALUATION SCHEMAS ====================
class TrialResult(BaseModel):
    seed: int
    error_rate: Optional[float] = None
    confusion: Optional[List[List[int]]] = None
    error: Optional[str] = None


class EvalReport(BaseModel):
    error_rate: float = Field(..., ge=0.0, le=1.0)
    confusion: List[List[int]]
    permutation: Optional[List[int]] = None
    trials: List[TrialResult] = []
    mean: float
    std: float


# ==================== EXPERIMENT CONFIG SCHEMAS ====================
class DataSourceConfig(BaseModel):
    """Where the points come from: a generator or a CSV file"""
    model_config = ConfigDict(extra="forbid")

    kind: Literal["mixture", "two_moons", "file"]
    mixture: Optional[MixtureSpec] = None
    n: Optional[int] = Field(default=None, ge=2)
    fractions: Optional[List[float]] = None
    noise: float = Field(default=0.1, ge=0.0)
    path: Optional[str] = None
    class_counts: Optional[List[int]] = None

    @model_validator(mode="after")
    def check_source(self):
        if self.kind == "mixture" and (self.mixture is None or self.n is None):
            raise ValueError("mixture source needs 'mixture' and 'n'")
        if self.kind == "two_moons" and (self.n is None or self.fractions is None):
            raise ValueError("two_moons source needs 'n' and 'fractions'")
        if self.kind == "file":
            if not self.path:
                raise ValueError("file source needs 'path'")
            if not Path(self.path).is_file():
                raise ValueError(f"data file not found: {self.path}")
        return self


class GraphConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    method: GraphBuilder = GraphBuilder.KNN
    k: int = Field(default=30, ge=1)
    lam: float = Field(default=1.0, ge=0.0, le=1.0, alias="lambda")
    l: Optional[int] = Field(default=None, ge=1)
    B: int = Field(default=5, ge=1)
    variant: StatVariantKind = StatVariantKind.AVG_KNN
    variant_eps: Optional[float] = None
    eps: Optional[float] = Field(default=None, gt=0.0)
    eps_scale: Optional[float] = Field(default=None, gt=0.0)
    weight: WeightKind = WeightKind.UNIT
    sigma: Optional[float] = Field(default=None, gt=0.0)
    sigma_scale: Optional[float] = Field(default=None, gt=0.0)

    @model_validator(mode="after")
    def check_scales(self):
        if self.method == GraphBuilder.EPS and self.eps is None and self.eps_scale is None:
            raise ValueError("eps graph needs 'eps' or 'eps_scale'")
        needs_sigma = self.weight == WeightKind.RBF or self.method == GraphBuilder.FULL_RBF
        if needs_sigma and self.sigma is None and self.sigma_scale is None:
            raise ValueError("rbf weights need 'sigma' or 'sigma_scale'")
        return self

    @property
    def neighbor_scale(self) -> int:
        return self.l if self.l is not None else self.k

    def stat_variant(self) -> StatVariant:
        return StatVariant(kind=self.variant, l=self.neighbor_scale, eps=self.variant_eps)


class SelectionConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mode: Literal["none", "lambda", "baseline"] = "none"
    delta: float = Field(default=0.05, gt=0.0, lt=1.0)
    lambda_grid: List[float] = Field(default_factory=lambda: [0.0, 0.2, 0.4, 0.6, 0.8, 1.0], min_length=1)
    baseline_method: Literal["knn", "full-rbf", "eps"] = "knn"
    k_grid: List[int] = Field(default_factory=lambda: list(range(20, 101, 10)), min_length=1)
    sigma_exponents: List[int] = Field(default_factory=lambda: list(range(-4, 5)), min_length=1)


class CutlineConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    axis: int = Field(default=0, ge=0)
    positions: List[float] = Field(..., min_length=1)
    seeds: int = Field(default=20, ge=1)

    @field_validator("positions")
    @classmethod
    def ascending(cls, v):
        if any(b < a for a, b in zip(v, v[1:])):
            raise ValueError("positions must be sorted ascending")
        return v


class DeltaSweepConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    deltas: List[float] = Field(..., min_length=3)
    rel_tol: float = Field(default=0.05, ge=0.0)
    position_tol: float = Field(default=0.5, ge=0.0)

    @field_validator("deltas")
    @classmethod
    def descending(cls, v):
        if any(b > a for a, b in zip(v, v[1:])):
            raise ValueError("deltas must be sorted descending")
        return v


class ExperimentConfig(BaseModel):
    """Schema of an experiment JSON file"""
    model_config = ConfigDict(extra="forbid")

    name: str = "experiment"
    seed: int = 0
    data: DataSourceConfig
    graph: GraphConfig = Field(default_factory=GraphConfig)
    algorithm: Literal["sc", "grf"] = "sc"
    K: int = Field(default=2, ge=2)
    normalized: bool = False
    n_labels: int = Field(default=20, ge=1)
    selection: SelectionConfig = Field(default_factory=SelectionConfig)
    trials: int = Field(default=1, ge=1)
    cutline: Optional[CutlineConfig] = None
    delta_sweep: Optional[DeltaSweepConfig] = None
    output_dir: str = "runs/experiment"

    @model_validator(mode="after")
    def check_delta(self):
        if self.selection.mode != "none" and self.selection.delta >= 1.0 / self.K:
            raise ValueError(f"delta must be below 1/K = {1.0 / self.K}")
        if self.n_labels < self.K and self.algorithm == "grf":
            raise ValueError("grf needs at least one label per class")
        return self


# ==================== API SCHEMAS ====================
class RunArtifactResponse(BaseModel):
    id: int
    name: str
    path: str

    class Config:
        from_attributes = True


class RunResponse(BaseModel):
    id: int
    name: str
    config_hash: str
    seed: int
    status: str
    failed_stage: Optional[str] = None
    output_dir: str
    created_at: datetime
    artifacts: List[RunArtifactResponse] = []

    class Config:
        from_attributes = True


class BalanceRequest(BaseModel):
    q: float = Field(..., ge=0.0)
    y: float = Field(..., gt=0.0, le=0.5)


class BalanceResponse(BaseModel):
    preference: BalancePreference
    threshold: float


class RhoRequest(BaseModel):
    p: float = Field(..., ge=0.0, le=1.0)
    lam: float = Field(..., ge=0.0, le=1.0)


class RankLimitRequest(BaseModel):
    mixture: MixtureSpec
    points: List[List[float]] = Field(..., min_length=1)


class LimitRatioCutRequest(BaseModel):
    mixture: MixtureSpec
    axis: int = Field(default=0, ge=0)
    at: float
    lam: float = Field(..., ge=0.0, le=1.0)
