"""
Data Service - dataset ingestion and synthetic generators
"""
import csv
import logging
import math
from pathlib import Path
from typing import List, Sequence

import numpy as np
from pydantic import ValidationError
from sklearn.datasets import make_blobs, make_moons

from app.core.exceptions import DatasetError, ParameterError
from app.schemas.schemas import Dataset, MixtureSpec
from app.utils.io import write_csv
from app.utils.seeding import child_seeds, make_rng

logger = logging.getLogger(__name__)

LABEL_COLUMN = "label"

# Two-moons geometry: unit half circles, second moon centred at MOON_OFFSET,
# blob 2.5 units to the right of the moons' right edge (x = 2).
MOON_OFFSET = (1.0, 0.5)
# where make_moons itself puts the centre of the second moon
_SKLEARN_MOON_CENTER = (1.0, 0.5)
BLOB_CENTER = (4.5, 0.25)
BLOB_STD = 0.3


def _is_number(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def load_dataset(path: str | Path, format: str = "csv", name: str | None = None) -> Dataset:
    """
    Load a dataset from a comma separated file

    An optional header is detected when the first line holds any non-numeric
    field; a final header column named "label" holds integer class ids.

    Args:
        path: CSV file
        format: only "csv" is supported
        name: dataset tag, defaults to the file stem

    Returns:
        Dataset with labels attached iff a label column is present

    Raises:
        DatasetError: empty file, malformed row or non-finite value (with row index)
    """
    if format != "csv":
        raise DatasetError(f"unsupported format '{format}'")
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"file not found: {path}")

    with path.open(newline="", encoding="utf-8") as fh:
        raw = [row for row in csv.reader(fh) if any(cell.strip() for cell in row)]
    if not raw:
        raise DatasetError(f"{path} is empty")

    header = None
    if not all(_is_number(cell.strip()) for cell in raw[0]):
        header = [cell.strip().lower() for cell in raw[0]]
        raw = raw[1:]
    if not raw:
        raise DatasetError(f"{path} has a header but no data rows")

    width = len(header) if header else len(raw[0])
    has_labels = bool(header) and header[-1] == LABEL_COLUMN
    n_features = width - 1 if has_labels else width
    if n_features < 1:
        raise DatasetError("no feature columns")

    points = np.empty((len(raw), n_features), dtype=float)
    labels = np.empty(len(raw), dtype=np.int64) if has_labels else None
    for i, row in enumerate(raw, start=1):
        if len(row) != width:
            raise DatasetError(f"malformed row: expected {width} columns, got {len(row)}", row=i)
        try:
            values = [float(cell) for cell in row[:n_features]]
        except ValueError:
            raise DatasetError("malformed row: non-numeric feature", row=i) from None
        if not all(math.isfinite(v) for v in values):
            raise DatasetError("non-finite value", row=i)
        points[i - 1] = values
        if has_labels:
            try:
                labels[i - 1] = int(row[-1].strip())
            except ValueError:
                raise DatasetError("malformed row: label is not an integer", row=i) from None

    try:
        dataset = Dataset(points=points, labels=labels, name=name or path.stem,
                          meta={"source": str(path)})
    except ValidationError as e:
        raise DatasetError(f"invalid dataset in {path}: {e.errors()[0]['msg']}") from e
    logger.info("Loaded %s: n=%d d=%d classes=%d", path, dataset.n, dataset.d, dataset.n_classes)
    return dataset


def save_dataset(dataset: Dataset, path: str | Path) -> Path:
    """Write a dataset in the format load_dataset reads"""
    header = [f"x{j}" for j in range(dataset.d)]
    if dataset.labels is not None:
        header.append(LABEL_COLUMN)
        rows = (list(p) + [int(c)] for p, c in zip(dataset.points, dataset.labels))
    else:
        rows = (list(p) for p in dataset.points)
    return write_csv(path, header, rows)


def compact_labels(components: np.ndarray) -> tuple[np.ndarray, List[int]]:
    """Relabel drawn component ids to 0..K-1, keeping the original ids"""
    present, labels = np.unique(components, return_inverse=True)
    return labels.astype(np.int64), present.tolist()


def gen_gaussian_mixture(spec: MixtureSpec, n: int, seed: int, name: str = "gaussian_mixture") -> Dataset:
    """
    Draw n i.i.d. points from a diagonal Gaussian mixture

    The component of each point is chosen by the mixture weights, then the
    point is sampled from that component. Labels are the component indices
    (compacted if a component drew no points).
    """
    if n < 2:
        raise ParameterError(f"n must be >= 2, got {n}")
    rng = make_rng(seed)
    components = rng.choice(len(spec.components), size=n, p=spec.weights)
    noise = rng.standard_normal((n, spec.dim))
    points = spec.means[components] + noise * spec.stds[components]
    labels, present = compact_labels(components)
    return Dataset(
        points=points,
        labels=labels,
        name=name,
        meta={"generator": "gaussian_mixture", "seed": int(seed), "component_ids": present},
    )


def allocate_counts(n: int, fractions: Sequence[float]) -> List[int]:
    """Split n into integer counts by largest remainder (ties to the lower index)"""
    raw = np.asarray(fractions, dtype=float) * n
    counts = np.floor(raw + 1e-9).astype(int)
    remainder = n - int(counts.sum())
    order = np.argsort(-(raw - counts), kind="stable")
    for idx in order[:remainder]:
        counts[idx] += 1
    return counts.tolist()


def gen_two_moons_gaussian(
    n: int,
    fractions: Sequence[float],
    noise: float,
    seed: int,
    blob_std: float = BLOB_STD,
    moon_offset: Sequence[float] = MOON_OFFSET,
    name: str = "two_moons_gaussian",
) -> Dataset:
    """
    Two interleaved half circles plus a Gaussian blob to their right

    Args:
        n: total number of points
        fractions: shares of (upper moon, lower moon, blob); must sum to 1
        noise: std of the isotropic Gaussian noise added to the moons
        seed: random seed
        blob_std: std of the blob
        moon_offset: centre of the lower moon; the upper moon is centred at
            the origin

    Returns:
        Dataset labelled 0 (upper moon), 1 (lower moon), 2 (blob); classes
        with a zero share are absent
    """
    fractions = [float(f) for f in fractions]
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ParameterError(f"fractions must be three non-negative shares summing to 1, got {fractions}")
    if n < 2:
        raise ParameterError(f"n must be >= 2, got {n}")
    if len(moon_offset) != 2:
        raise ParameterError(f"moon_offset must have two coordinates, got {list(moon_offset)}")

    counts = allocate_counts(n, fractions)
    moon_seed, blob_seed = child_seeds(seed, 2)
    parts, components = [], []
    if counts[0] + counts[1] > 0:
        X, y = make_moons(n_samples=(counts[0], counts[1]), shuffle=False,
                          noise=noise, random_state=moon_seed)
        X[y == 1] += np.subtract(moon_offset, _SKLEARN_MOON_CENTER)
        parts.append(X)
        components.append(y)
    if counts[2] > 0:
        X, _ = make_blobs(n_samples=[counts[2]], centers=[BLOB_CENTER], cluster_std=blob_std,
                          shuffle=False, random_state=blob_seed)
        parts.append(X)
        components.append(np.full(counts[2], 2))

    labels, present = compact_labels(np.concatenate(components))
    return Dataset(
        points=np.vstack(parts),
        labels=labels,
        name=name,
        meta={
            "generator": "two_moons_gaussian",
            "seed": int(seed),
            "counts": counts,
            "noise": float(noise),
            "moon_offset": [float(v) for v in moon_offset],
            "blob_center": list(BLOB_CENTER),
            "blob_std": float(blob_std),
            "component_ids": present,
        },
    )


def fig1_mixture() -> MixtureSpec:
    """Unbalanced proximal two-component mixture with its density valley near x1 = 1"""
    return MixtureSpec.from_ratios(
        [0.9, 0.1],
        means=[[4.5, 0.0], [0.0, 0.0]],
        cov_diags=[[2.0, 1.0], [1.0, 1.0]],
    )


def three_gaussian_mixture() -> MixtureSpec:
    """One large and two small proximal components along the first axis (2:8:1)"""
    return MixtureSpec.from_ratios(
        [2, 8, 1],
        means=[[-0.7, 0.0], [4.5, 0.0], [9.7, 0.0]],
        cov_diags=[[1.0, 1.0], [2.0, 1.0], [0.7, 0.7]],
    )
