"""Tests for end-to-end runs and cut-line sweeps"""
import pytest

from app.core.exceptions import ParameterError
from app.schemas.schemas import (
    CutlineConfig,
    DataSourceConfig,
    ExperimentConfig,
    GraphBuilder,
    GraphConfig,
)
from app.services.data_service import fig1_mixture
from app.services.pipeline_service import MANIFEST, config_hash, run_pipeline, sweep_cutline
from app.utils.io import read_json


def _config(csv_path, out, **graph):
    graph = {"method": GraphBuilder.KNN, "k": 5, **graph}
    return ExperimentConfig(
        data=DataSourceConfig(kind="file", path=str(csv_path)),
        graph=GraphConfig(**graph),
        output_dir=str(out),
    )


def test_run_writes_artifacts(two_cliques_csv, tmp_path):
    result = run_pipeline(_config(two_cliques_csv, tmp_path / "run"))
    assert result.ok
    for name in ("data.csv", "graph.csv", "graph.json", "partition.csv", "cut_report.json", "eval.json"):
        assert (result.output_dir / name).is_file()
    manifest = read_json(result.output_dir / MANIFEST)
    assert manifest["status"] == "ok"
    assert manifest["failed_stage"] is None
    assert read_json(result.output_dir / "eval.json")["error_rate"] == 0.0


def test_rerun_is_byte_identical(two_cliques_csv, tmp_path):
    config = _config(two_cliques_csv, tmp_path / "a")
    first = run_pipeline(config)
    second = run_pipeline(config, tmp_path / "b")
    for name in ("partition.csv", "graph.csv", MANIFEST):
        assert (first.output_dir / name).read_bytes() == (second.output_dir / name).read_bytes()


def test_lambda_one_matches_knn(two_cliques_csv, tmp_path):
    knn = run_pipeline(_config(two_cliques_csv, tmp_path / "knn"))
    rmd = run_pipeline(_config(two_cliques_csv, tmp_path / "rmd", method=GraphBuilder.RMD, lam=1.0, B=2))
    assert (rmd.output_dir / "ranks.csv").is_file()
    assert (knn.output_dir / "partition.csv").read_bytes() == (rmd.output_dir / "partition.csv").read_bytes()


def test_failed_stage_is_recorded(two_cliques_csv, tmp_path):
    result = run_pipeline(_config(two_cliques_csv, tmp_path / "run", k=60))
    assert not result.ok
    assert result.failed_stage == "build"
    manifest = read_json(result.output_dir / MANIFEST)
    assert manifest["status"] == "failed"
    assert manifest["failed_stage"] == "build"
    assert "data.csv" in manifest["artifacts"]
    assert not (result.output_dir / "partition.csv").exists()


def test_run_with_cutline(two_cliques_csv, tmp_path):
    config = _config(two_cliques_csv, tmp_path / "run").model_copy(
        update={"cutline": CutlineConfig(axis=0, positions=[5.0], seeds=2)}
    )
    result = run_pipeline(config)
    assert result.ok
    assert "cutline.csv" in result.artifacts


def test_config_hash_tracks_content(two_cliques_csv, tmp_path):
    a = _config(two_cliques_csv, tmp_path)
    assert config_hash(a) == config_hash(_config(two_cliques_csv, tmp_path))
    assert config_hash(a) != config_hash(_config(two_cliques_csv, tmp_path, k=6))
    assert len(config_hash(a)) == 64


def test_cutline_between_separated_groups(two_cliques):
    rows = sweep_cutline(two_cliques, GraphConfig(method=GraphBuilder.KNN, k=4), 0, [5.0, 20.0], seeds=2)
    assert rows[0] == (5.0, 0.0, 0.0)
    # every point lies left of x = 20
    assert rows[1] == (20.0, None, None)


def test_cutline_inside_a_group_cuts_edges(two_cliques):
    rows = sweep_cutline(two_cliques, GraphConfig(method=GraphBuilder.KNN, k=4), 0, [0.6], seeds=1)
    assert rows[0][1] > 0.0


def test_cutline_positions_must_ascend(two_cliques):
    with pytest.raises(ParameterError):
        sweep_cutline(two_cliques, GraphConfig(k=4), 0, [5.0, 1.0], seeds=1)


def test_cutline_axis_out_of_range(two_cliques):
    with pytest.raises(ParameterError):
        sweep_cutline(two_cliques, GraphConfig(k=4), 3, [5.0], seeds=1)


def _ratiocut_argmin(rows):
    scored = [(ratio_cut, at) for at, _, ratio_cut in rows if ratio_cut is not None]
    return min(scored)[1]


@pytest.mark.slow
def test_rmd_cutline_minimum_sits_in_the_density_valley():
    source = DataSourceConfig(kind="mixture", mixture=fig1_mixture(), n=1000)
    positions = [i * 0.25 for i in range(25)]
    rmd = sweep_cutline(source, GraphConfig(method=GraphBuilder.RMD, k=30, lam=0.4, B=5), 0, positions, seeds=20)
    knn = sweep_cutline(source, GraphConfig(method=GraphBuilder.KNN, k=30), 0, positions, seeds=20)
    assert 0.5 <= _ratiocut_argmin(rmd) <= 1.5
    assert 3.0 <= _ratiocut_argmin(knn) <= 5.0
