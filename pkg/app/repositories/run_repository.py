"""
Run Repository - Data access layer for recorded pipeline runs
"""
from datetime import datetime
from typing import List, Optional

from sqlalchemy.orm import Session

from app.models.models import ExperimentRun, RunArtifact, RunStatus
from app.schemas.schemas import ExperimentConfig
from app.services.pipeline_service import PipelineResult, config_hash
from app.utils.io import dumps_json


class RunRepository:
    """Repository for managing ExperimentRun data access"""

    def __init__(self, db: Session):
        self.db = db

    def create_run(self, config: ExperimentConfig, output_dir: str) -> ExperimentRun:
        """
        Register a run before its pipeline starts

        Args:
            config: validated experiment config
            output_dir: where the artifacts go

        Returns:
            Created ExperimentRun in RUNNING state
        """
        run = ExperimentRun(
            name=config.name,
            config_hash=config_hash(config),
            seed=config.seed,
            status=RunStatus.RUNNING.value,
            output_dir=output_dir,
            config_json=dumps_json(config.model_dump(mode="json", by_alias=True)),
        )
        self.db.add(run)
        self.db.flush()
        return run

    def finish_run(self, run: ExperimentRun, result: PipelineResult) -> ExperimentRun:
        """Store the outcome and artifact list of a finished pipeline"""
        run.status = (RunStatus.OK if result.ok else RunStatus.FAILED).value
        run.failed_stage = result.failed_stage
        run.error = result.error
        run.manifest_json = dumps_json(result.manifest)
        run.finished_at = datetime.utcnow()
        for name in result.artifacts:
            run.artifacts.append(RunArtifact(name=name, path=str(result.output_dir / name)))
        self.db.flush()
        return run

    def fail_run(self, run: ExperimentRun, stage: Optional[str], error: str) -> ExperimentRun:
        run.status = RunStatus.FAILED.value
        run.failed_stage = stage
        run.error = error
        run.finished_at = datetime.utcnow()
        self.db.flush()
        return run

    def get_run(self, run_id: int) -> Optional[ExperimentRun]:
        return self.db.query(ExperimentRun).filter(ExperimentRun.id == run_id).first()

    def list_runs(self, skip: int = 0, limit: int = 50) -> List[ExperimentRun]:
        """Newest runs first"""
        return (
            self.db.query(ExperimentRun)
            .order_by(ExperimentRun.id.desc())
            .offset(skip)
            .limit(limit)
            .all()
        )

    def commit(self):
        """Commit all pending changes"""
        self.db.commit()
