"""
Experiments router - run pipelines and browse the run registry
"""
from typing import List

from fastapi import APIRouter, Depends, HTTPException, status
from sqlalchemy.orm import Session

from app.core.database import get_db
from app.core.exceptions import PipelineStageError
from app.schemas.schemas import ExperimentConfig, RunResponse
from app.services.experiment_service import ExperimentService

router = APIRouter(prefix="/api/experiments", tags=["experiments"])


@router.post("/run", response_model=RunResponse, status_code=status.HTTP_201_CREATED)
def run_experiment(config: ExperimentConfig, db: Session = Depends(get_db)):
    """
    Run the pipeline for a config and record it.
    A run stopped by a domain error is stored with its failed stage.
    """
    try:
        return ExperimentService(db).run(config)
    except PipelineStageError as e:
        raise HTTPException(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            detail=f"Run failed unexpectedly in stage '{e.stage}'",
        )


@router.get("", response_model=List[RunResponse])
def list_experiments(skip: int = 0, limit: int = 50, db: Session = Depends(get_db)):
    """List recorded runs, newest first"""
    return ExperimentService(db).list(skip=skip, limit=limit)


@router.get("/{run_id}", response_model=RunResponse)
def get_experiment(run_id: int, db: Session = Depends(get_db)):
    """Get one recorded run"""
    run = ExperimentService(db).get(run_id)
    if not run:
        raise HTTPException(
            status_code=status.HTTP_404_NOT_FOUND,
            detail="Run not found"
        )
    return run
