"""
SQLAlchemy ORM Models - registry of pipeline runs
"""
from datetime import datetime
import enum

from sqlalchemy import Column, DateTime, ForeignKey, Integer, String, Text
from sqlalchemy.orm import relationship

from app.core.database import Base


# Enums
class RunStatus(str, enum.Enum):
    RUNNING = "running"
    OK = "ok"
    FAILED = "failed"


class ExperimentRun(Base):
    """One pipeline run launched through the API"""
    __tablename__ = "experiment_runs"

    id = Column(Integer, primary_key=True, index=True)
    name = Column(String(255), nullable=False)
    config_hash = Column(String(64), index=True, nullable=False)
    seed = Column(Integer, nullable=False)
    status = Column(String(20), default=RunStatus.RUNNING.value, nullable=False)
    failed_stage = Column(String(50), nullable=True)
    error = Column(Text, nullable=True)
    output_dir = Column(String(500), nullable=False)
    config_json = Column(Text, nullable=False)
    manifest_json = Column(Text, nullable=True)
    created_at = Column(DateTime, default=datetime.utcnow, nullable=False)
    finished_at = Column(DateTime, nullable=True)

    # Relationships
    artifacts = relationship("RunArtifact", back_populates="run", cascade="all, delete-orphan",
                             order_by="RunArtifact.id")


class RunArtifact(Base):
    """A file written by a run"""
    __tablename__ = "run_artifacts"

    id = Column(Integer, primary_key=True, index=True)
    run_id = Column(Integer, ForeignKey("experiment_runs.id", ondelete="CASCADE"), nullable=False)
    name = Column(String(255), nullable=False)
    path = Column(String(1000), nullable=False)

    # Relationships
    run = relationship("ExperimentRun", back_populates="artifacts")
