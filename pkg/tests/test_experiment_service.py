"""Tests for running experiments against the run registry"""
import pytest

from app.core.database import SessionLocal, init_db
from app.core.exceptions import PipelineStageError
from app.models.models import RunStatus
from app.schemas.schemas import DataSourceConfig, ExperimentConfig, GraphConfig
from app.services import experiment_service
from app.services.experiment_service import ExperimentService


@pytest.fixture
def db():
    init_db()
    session = SessionLocal()
    yield session
    session.close()


def _config(csv_path, out, k=5):
    return ExperimentConfig(
        name="cliques",
        data=DataSourceConfig(kind="file", path=str(csv_path)),
        graph=GraphConfig(k=k),
        output_dir=str(out),
    )


def test_run_is_recorded_with_artifacts(db, two_cliques_csv, tmp_path):
    service = ExperimentService(db)
    run = service.run(_config(two_cliques_csv, tmp_path / "run"))
    assert run.status == RunStatus.OK.value
    assert "partition.csv" in {a.name for a in run.artifacts}
    assert service.get(run.id).config_hash == run.config_hash
    assert service.list(limit=1)[0].id == run.id


def test_domain_failure_is_an_outcome(db, two_cliques_csv, tmp_path):
    run = ExperimentService(db).run(_config(two_cliques_csv, tmp_path / "run", k=100))
    assert run.status == RunStatus.FAILED.value
    assert run.failed_stage == "build"


def test_crash_marks_run_failed(db, two_cliques_csv, tmp_path, monkeypatch):
    def crash(config):
        raise PipelineStageError("cluster", RuntimeError("boom"))

    monkeypatch.setattr(experiment_service, "run_pipeline", crash)
    service = ExperimentService(db)
    with pytest.raises(PipelineStageError):
        service.run(_config(two_cliques_csv, tmp_path / "run"))
    run = service.list(limit=1)[0]
    assert run.status == RunStatus.FAILED.value
    assert run.failed_stage == "cluster"
