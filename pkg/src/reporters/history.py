import logging
from pathlib import Path
from typing import Optional

import aiosqlite

from src.config import RUNS_DATABASE
from src.database import RunDatabase
from .base import BaseReporter, RunReport

logger = logging.getLogger(__name__)


class HistoryReporter(BaseReporter):
    """Record runs (and pin tuned thresholds) in the SQLite run history."""

    name = "history"

    def __init__(self, db_path: Optional[Path] = RUNS_DATABASE):
        self.db_path = db_path

    def is_configured(self) -> bool:
        return self.db_path is not None

    async def publish(self, report: RunReport) -> bool:
        if not self.is_configured():
            logger.warning(f"[{self.name}] Not configured, skipping")
            return False

        summary = report.summary()
        if not summary:
            return True

        try:
            async with RunDatabase(self.db_path) as db:
                run_id = await db.add_run(
                    report.command, report.model, summary,
                    seed=report.seed, checkpoint=report.checkpoint,
                )
                if report.command == "tune" and report.threshold and report.checkpoint:
                    t = report.threshold
                    await db.pin_threshold(
                        report.checkpoint, t.granularity, t.target_fpr,
                        t.threshold, t.achieved_fpr, t.n_clean,
                    )
                    logger.info(f"[{self.name}] Pinned threshold {t.threshold:.6g} for {report.checkpoint}")

            logger.info(f"[{self.name}] Recorded run #{run_id}")
            return True

        except (aiosqlite.Error, OSError) as e:
            logger.error(f"[{self.name}] History error: {e}")
            return False
