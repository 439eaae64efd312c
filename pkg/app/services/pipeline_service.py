"""
Pipeline Service - end-to-end experiment runs and plot-ready curves

A run writes its artifacts into the configured output directory together with
a manifest.json that records the config hash, the base seed, package versions
and, on failure, the stage that failed. Artifacts contain no timestamps, so a
rerun with the same config reproduces them byte for byte.
"""
import hashlib
import logging
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

import app
from app.core.config import get_settings
from app.core.exceptions import ParameterError, PipelineStageError, RMDGraphError
from app.schemas.schemas import (
    DataSourceConfig,
    Dataset,
    DeltaCurve,
    ExperimentConfig,
    GraphBuilder,
    GraphConfig,
    Hyperplane,
)
from app.services.data_service import save_dataset
from app.services.evaluation_service import evaluate_prediction, prepare_dataset, run_trials
from app.services.graph_service import build_graph, save_graph, weight_scheme
from app.services.rank_service import compute_ranks_ustat, write_ranks
from app.services.selection_service import delta_sweep, select_graph
from app.services.spectral_service import cut_metrics, hyperplane_partition, spectral_cluster, write_partition
from app.services.ssl_service import draw_label_set, grf_propagate, write_labels
from app.utils.io import dumps_json, write_csv, write_json
from app.utils.seeding import child_seeds, derive_seed

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
TRACKED_PACKAGES = ("numpy", "scipy", "scikit-learn", "joblib", "pydantic")


@dataclass
class PipelineResult:
    status: str
    output_dir: Path
    manifest: Dict[str, Any]
    artifacts: List[str] = field(default_factory=list)
    failed_stage: Optional[str] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def config_hash(config: ExperimentConfig) -> str:
    """sha256 of the canonical JSON form of a config"""
    canonical = dumps_json(config.model_dump(mode="json", by_alias=True))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def package_versions() -> Dict[str, str]:
    versions = {"rmdgraph": app.__version__}
    for name in TRACKED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


def _cutline_seed(
    source: Dataset | DataSourceConfig,
    graph_config: GraphConfig,
    axis: int,
    positions: Sequence[float],
    seed: int,
) -> List[tuple[float, float]]:
    """(cut, ratiocut) per position for one seed; NaN where a side is empty"""
    dataset = source if isinstance(source, Dataset) else prepare_dataset(source, derive_seed(seed, "data"))
    if not 0 <= axis < dataset.d:
        raise ParameterError(f"axis {axis} outside 0..{dataset.d - 1}")
    ranks = None
    if graph_config.method == GraphBuilder.RMD:
        ranks = compute_ranks_ustat(dataset, graph_config.stat_variant(), B=graph_config.B,
                                    seed=derive_seed(seed, "rank"), n_jobs=1)
    graph = build_graph(dataset, graph_config, ranks)
    values = []
    for at in positions:
        partition = hyperplane_partition(dataset, Hyperplane.axis_aligned(axis, at, dataset.d),
                                         seed=derive_seed(seed, "cutline"))
        if partition.is_degenerate:
            values.append((np.nan, np.nan))
            continue
        report = cut_metrics(graph, partition)
        values.append((report.cut, report.ratio_cut))
    return values


def sweep_cutline(
    source: Dataset | DataSourceConfig,
    graph_config: GraphConfig,
    axis: int,
    positions: Sequence[float],
    seeds: int = 20,
    seed: int = 0,
    n_jobs: Optional[int] = None,
) -> List[tuple]:
    """
    Cut and RatioCut of axis-aligned hyperplanes, averaged over seeds

    A data source config is redrawn for every seed; a fixed dataset only
    varies the ranks and the coin for points on the hyperplane.

    Returns:
        rows (position, cut, ratiocut); None where every seed left a side empty
    """
    if any(b < a for a, b in zip(positions, positions[1:])):
        raise ParameterError("positions must be sorted ascending")
    logger.info("Cut-line sweep: axis=%d positions=%d seeds=%d", axis, len(positions), seeds)
    per_seed = Parallel(n_jobs=n_jobs or get_settings().threads)(
        delayed(_cutline_seed)(source, graph_config, axis, positions, s) for s in child_seeds(seed, seeds)
    )
    values = np.array(per_seed, dtype=float)
    rows = []
    for i, at in enumerate(positions):
        cuts, ratio_cuts = values[:, i, 0], values[:, i, 1]
        valid = ~np.isnan(cuts)
        if not valid.any():
            rows.append((float(at), None, None))
            continue
        rows.append((float(at), float(cuts[valid].mean()), float(ratio_cuts[valid].mean())))
    return rows


def write_cutline(rows: Sequence[tuple], path: str | Path) -> Path:
    return write_csv(path, ["position", "cut", "ratiocut"], rows)


def write_delta_curve(curve: DeltaCurve, path: str | Path) -> Path:
    rows = ((p.delta, p.cut, p.position, p.lam, p.feasible) for p in curve.points)
    return write_csv(path, ["delta", "cut", "position", "lambda", "feasible"], rows)


class _Run:
    """Stage bookkeeping for one pipeline run"""

    def __init__(self, config: ExperimentConfig, output_dir: Path):
        self.config = config
        self.output_dir = output_dir
        self.artifacts: List[str] = []
        self.stage: Optional[str] = None

    def path(self, name: str) -> Path:
        self.artifacts.append(name)
        return self.output_dir / name

    def manifest(self, status: str, error: Optional[str] = None) -> Dict[str, Any]:
        return {
            "name": self.config.name,
            "config": self.config.model_dump(mode="json", by_alias=True),
            "config_hash": config_hash(self.config),
            "seed": self.config.seed,
            "versions": package_versions(),
            "status": status,
            "failed_stage": self.stage if status != "ok" else None,
            "error": error,
            "artifacts": list(self.artifacts),
        }


def _execute(run: _Run) -> None:
    config = run.config
    seed = config.seed

    run.stage = "data"
    dataset = prepare_dataset(config.data, derive_seed(seed, "data"))
    save_dataset(dataset, run.path("data.csv"))

    run.stage = "select"
    graph_config, ranks, selection = select_graph(dataset, config, seed)
    if ranks is not None:
        write_ranks(ranks, run.path("ranks.csv"))
    if selection is not None:
        write_json(run.path("selection.json"), {
            "chosen": selection.chosen,
            "objective": selection.objective,
            "trace": [entry.model_dump(mode="json") for entry in selection.trace],
        })

    run.stage = "build"
    graph = build_graph(dataset, graph_config, ranks)
    save_graph(graph, run.path("graph.csv"))
    run.artifacts.append("graph.json")

    run.stage = "learn"
    labels = None
    if config.algorithm == "sc":
        partition = spectral_cluster(graph, config.K, normalized=config.normalized,
                                     seed=derive_seed(seed, "cluster"))
        write_json(run.path("cut_report.json"), cut_metrics(graph, partition))
    else:
        if dataset.labels is None:
            raise ParameterError("grf needs class labels to draw the labelled set")
        labels = draw_label_set(dataset.labels, config.n_labels, derive_seed(seed, "labels"))
        write_labels(labels, run.path("labels.csv"))
        partition = grf_propagate(graph, labels).prediction
    write_partition(partition, run.path("partition.csv"))

    run.stage = "evaluate"
    if dataset.labels is not None:
        write_json(run.path("eval.json"), evaluate_prediction(dataset, config, partition, labels))
    if config.trials > 1:
        write_json(run.path("trials.json"), run_trials(config, config.trials, seed))

    if config.cutline is not None:
        run.stage = "cutline"
        source = config.data if config.data.kind != "file" else dataset
        rows = sweep_cutline(source, graph_config, config.cutline.axis, config.cutline.positions,
                             config.cutline.seeds, derive_seed(seed, "cutline"))
        write_cutline(rows, run.path("cutline.csv"))

    if config.delta_sweep is not None:
        run.stage = "delta_sweep"
        sweep = config.delta_sweep
        g = config.graph
        curve = delta_sweep(
            dataset, g.k, g.neighbor_scale, sweep.deltas, B=g.B, weight=weight_scheme(dataset, g),
            lambda_grid=config.selection.lambda_grid, K=config.K, seed=seed,
            normalized=config.normalized, rel_tol=sweep.rel_tol, position_tol=sweep.position_tol,
            ranks=ranks, variant=g.stat_variant(),
        )
        write_delta_curve(curve, run.path("delta_curve.csv"))
        write_json(run.path("flat_spots.json"), curve.flat_segments)


def run_pipeline(config: ExperimentConfig, output_dir: Optional[str | Path] = None) -> PipelineResult:
    """
    Run every stage an experiment config asks for

    Domain errors stop the run at the failing stage; the artifacts written so
    far stay in place and the manifest names the stage. Unexpected errors are
    recorded the same way and then re-raised.
    """
    out = Path(output_dir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    run = _Run(config, out)
    logger.info("Pipeline '%s' -> %s (seed %d)", config.name, out, config.seed)
    try:
        _execute(run)
    except RMDGraphError as e:
        failure = PipelineStageError(run.stage, e)
        logger.error("%s", failure)
        manifest = run.manifest("failed", str(e))
        write_json(out / MANIFEST, manifest)
        return PipelineResult("failed", out, manifest, list(run.artifacts), run.stage, str(e))
    except Exception as e:
        write_json(out / MANIFEST, run.manifest("failed", repr(e)))
        raise PipelineStageError(run.stage, e) from e

    manifest = run.manifest("ok")
    write_json(out / MANIFEST, manifest)
    logger.info("Pipeline '%s' finished: %d artifacts", config.name, len(run.artifacts))
    return PipelineResult("ok", out, manifest, list(run.artifacts))
