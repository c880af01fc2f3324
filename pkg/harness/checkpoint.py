"""Sweep checkpoints in a small SQLAlchemy database.

One SweepTask row per scheduled energy. A resumed sweep skips every task
already marked `done` under the same config hash.
"""
import json
import logging
import os
from datetime import datetime, timezone
from typing import Any, Dict, Optional

from sqlalchemy import Column, DateTime, Float, Integer, String, Text, create_engine
from sqlalchemy.orm import declarative_base, sessionmaker

from config.settings import current_config

logger = logging.getLogger(__name__)

Base = declarative_base()

DONE = "done"
FAILED = "failed"


class SweepTask(Base):
    __tablename__ = "sweep_tasks"

    index = Column(Integer, primary_key=True)
    config_hash = Column(String, index=True)
    energy = Column(Float)
    status = Column(String, default="pending") # pending, done, failed
    payload = Column(Text, nullable=True) # the sweep row as JSON
    error_message = Column(String, nullable=True)
    updated_at = Column(DateTime, default=lambda: datetime.now(timezone.utc))


def checkpoint_url(output_dir: str) -> str:
    if current_config.DATABASE_URL:
        return current_config.DATABASE_URL
    return f"sqlite:///{os.path.join(os.path.abspath(output_dir), current_config.CHECKPOINT_DB_NAME)}"


class Checkpoint:
    def __init__(self, url: str, config_hash: str):
        self.url = url
        self.config_hash = config_hash
        self.engine = create_engine(url)
        Base.metadata.create_all(bind=self.engine)
        self.SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=self.engine)
        self._discard_foreign()

    def _discard_foreign(self) -> None:
        db = self.SessionLocal()
        try:
            stale = db.query(SweepTask).filter(SweepTask.config_hash != self.config_hash).delete()
            db.commit()
            if stale:
                logger.warning(f"Discarded {stale} checkpointed tasks of a different configuration")
        finally:
            db.close()

    def completed(self) -> Dict[int, Dict[str, Any]]:
        """Rows of the tasks already done, by task index."""
        db = self.SessionLocal()
        try:
            tasks = db.query(SweepTask).filter(SweepTask.status == DONE).all()
            return {task.index: json.loads(task.payload) for task in tasks}
        finally:
            db.close()

    def record(self, index: int, energy: float, status: str, row: Optional[Dict[str, Any]] = None,
               error: Optional[str] = None) -> None:
        db = self.SessionLocal()
        try:
            task = db.query(SweepTask).filter(SweepTask.index == index).first()
            if task is None:
                task = SweepTask(index=index)
                db.add(task)
            task.config_hash = self.config_hash
            task.energy = energy
            task.status = status
            task.payload = json.dumps(row) if row is not None else None
            task.error_message = error
            task.updated_at = datetime.now(timezone.utc)
            db.commit()
        except Exception as e:
            db.rollback()
            logger.error(f"Could not checkpoint task {index}: {e}", exc_info=True)
            raise
        finally:
            db.close()

    def close(self) -> None:
        self.engine.dispose()
