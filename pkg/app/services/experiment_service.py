"""
Experiment Service - Run pipelines and keep the run registry in step
"""
import logging
from typing import List, Optional

from sqlalchemy.orm import Session

from app.core.exceptions import PipelineStageError
from app.models.models import ExperimentRun
from app.repositories.run_repository import RunRepository
from app.schemas.schemas import ExperimentConfig
from app.services.pipeline_service import run_pipeline

logger = logging.getLogger(__name__)


class ExperimentService:
    """Service for running experiment configs against a run registry session"""

    def __init__(self, db: Session):
        self.db = db
        self.repo = RunRepository(db)

    def run(self, config: ExperimentConfig) -> ExperimentRun:
        """
        Record a run, execute its pipeline and store the outcome

        A domain error inside the pipeline is part of the outcome. An
        unexpected crash marks the run failed and re-raises.

        Args:
            config: validated experiment config

        Returns:
            The recorded ExperimentRun with its artifacts
        """
        run = self.repo.create_run(config, config.output_dir)
        self.repo.commit()
        try:
            result = run_pipeline(config)
        except PipelineStageError as e:
            logger.exception("Run %d crashed in stage %s", run.id, e.stage)
            self.repo.fail_run(run, e.stage, str(e))
            self.repo.commit()
            raise
        self.repo.finish_run(run, result)
        self.repo.commit()
        self.db.refresh(run)
        return run

    def get(self, run_id: int) -> Optional[ExperimentRun]:
        return self.repo.get_run(run_id)

    def list(self, skip: int = 0, limit: int = 50) -> List[ExperimentRun]:
        return self.repo.list_runs(skip=skip, limit=limit)
