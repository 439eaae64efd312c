"""Tests for the rmdgraph command line"""
import argparse
import importlib
import json
from pathlib import Path

import pytest

from app.cli import EXIT_DOMAIN, EXIT_OK, EXIT_USAGE, main, parse_floats, parse_ints
from app.utils.io import read_json


def test_parse_float_range():
    assert parse_floats("0:1:0.25") == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert parse_floats("0.3,0.2, 0.1") == [0.3, 0.2, 0.1]
    assert parse_ints("20:40:10") == [20, 30, 40]


def test_parse_floats_rejects_zero_step():
    with pytest.raises(argparse.ArgumentTypeError):
        parse_floats("0:1:0")


def test_cluster_chain(two_cliques_csv, tmp_path):
    graph = tmp_path / "graph.csv"
    partition = tmp_path / "partition.csv"
    report = tmp_path / "eval.json"
    assert main(["build", "--in", str(two_cliques_csv), "--k", "5", "--out", str(graph)]) == EXIT_OK
    assert main(["cluster", "--graph", str(graph), "--out", str(partition)]) == EXIT_OK
    assert (tmp_path / "partition.json").is_file()
    assert main(["eval", "--pred", str(partition), "--truth", str(two_cliques_csv), "--out", str(report)]) == EXIT_OK
    assert read_json(report)["error_rate"] == 0.0


def test_generate_rank_and_build_rmd(tmp_path):
    data = tmp_path / "data.csv"
    ranks = tmp_path / "ranks.csv"
    graph = tmp_path / "graph.csv"
    assert main(["gen", "--mixture", "fig1", "--n", "60", "--seed", "1", "--out", str(data)]) == EXIT_OK
    assert main(["rank", "--in", str(data), "--l", "5", "--B", "2", "--out", str(ranks)]) == EXIT_OK
    args = ["build", "--in", str(data), "--method", "rmd", "--k", "5", "--lambda", "0.5",
            "--l", "5", "--B", "2", "--ranks", str(ranks), "--out", str(graph)]
    assert main(args) == EXIT_OK
    assert (tmp_path / "graph.json").is_file()


def test_neighbour_count_too_large(two_cliques_csv, tmp_path):
    args = ["build", "--in", str(two_cliques_csv), "--k", "100", "--out", str(tmp_path / "g.csv")]
    assert main(args) == EXIT_DOMAIN


def test_run_from_config(two_cliques_csv, tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({
        "data": {"kind": "file", "path": str(two_cliques_csv)},
        "graph": {"method": "knn", "k": 5},
    }))
    out = tmp_path / "run"
    assert main(["run", "--config", str(config), "--out-dir", str(out)]) == EXIT_OK
    assert read_json(out / "manifest.json")["status"] == "ok"


def test_failed_run_exits_with_domain_error(two_cliques_csv, tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({
        "data": {"kind": "file", "path": str(two_cliques_csv)},
        "graph": {"k": 100},
    }))
    assert main(["run", "--config", str(config), "--out-dir", str(tmp_path / "run")]) == EXIT_DOMAIN


def test_malformed_config(tmp_path):
    config = tmp_path / "config.json"
    config.write_text("{not json")
    assert main(["trials", "--config", str(config)]) == EXIT_USAGE


def test_config_with_unknown_field(two_cliques_csv, tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"data": {"kind": "file", "path": str(two_cliques_csv)}, "colour": "red"}))
    assert main(["trials", "--config", str(config)]) == EXIT_USAGE


def test_missing_config(tmp_path):
    assert main(["run", "--config", str(tmp_path / "absent.json")]) == EXIT_USAGE


def test_missing_required_argument():
    with pytest.raises(SystemExit) as err:
        main(["build", "--k", "5"])
    assert err.value.code == 2


def test_limit_check_rejects_unknown_mixture():
    assert main(["limit-check", "--mixture", "nowhere", "--cut-at", "1.0", "--lambda", "0.4"]) == EXIT_USAGE


def test_console_script_points_at_main():
    tomllib = pytest.importorskip("tomllib")
    pyproject = tomllib.loads((Path(__file__).parents[1] / "pyproject.toml").read_text())
    module, _, attr = pyproject["project"]["scripts"]["rmdgraph"].partition(":")
    assert getattr(importlib.import_module(module), attr) is main
