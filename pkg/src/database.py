import aiosqlite
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional
import json


@dataclass
class RunRecord:
    """One finished CLI run."""
    id: Optional[int]
    command: str
    model: str
    seed: Optional[int]
    checkpoint: Optional[str]
    metrics: dict
    created: datetime

    @property
    def summary(self) -> str:
        """Short one-line description for listings."""
        parts = [f"#{self.id}", self.command, self.model]
        for key in ("recall_at_fpr", "auc", "threshold"):
            if key in self.metrics:
                parts.append(f"{key}={self.metrics[key]:.4g}")
        return " ".join(parts)


class RunDatabase:
    """Async SQLite history of runs and pinned thresholds."""

    def __init__(self, db_path: Path):
        self.db_path = db_path
        self._connection: Optional[aiosqlite.Connection] = None

    async def __aenter__(self):
        await self.connect()
        return self

    async def __aexit__(self, exc_type, exc_val, exc_tb):
        await self.close()

    async def connect(self) -> None:
        """Open database connection and create tables."""
        Path(self.db_path).parent.mkdir(parents=True, exist_ok=True)
        self._connection = await aiosqlite.connect(self.db_path)
        self._connection.row_factory = aiosqlite.Row
        await self._create_tables()

    async def close(self) -> None:
        """Close database connection."""
        if self._connection:
            await self._connection.close()
            self._connection = None

    async def _create_tables(self) -> None:
        """Create database tables if they don't exist."""
        await self._connection.execute("""
            CREATE TABLE IF NOT EXISTS runs (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                command TEXT NOT NULL,
                model TEXT NOT NULL,
                seed INTEGER,
                checkpoint TEXT,
                metrics TEXT NOT NULL,
                created TIMESTAMP NOT NULL
            )
        """)

        await self._connection.execute("""
            CREATE TABLE IF NOT EXISTS thresholds (
                checkpoint TEXT NOT NULL,
                granularity TEXT NOT NULL,
                target_fpr REAL NOT NULL,
                threshold REAL NOT NULL,
                achieved_fpr REAL NOT NULL,
                n_clean INTEGER NOT NULL,
                created TIMESTAMP NOT NULL,
                UNIQUE(checkpoint, granularity)
            )
        """)

        await self._connection.execute("""
            CREATE INDEX IF NOT EXISTS idx_runs_command
            ON runs(command)
        """)

        await self._connection.commit()

    async def add_run(self, command: str, model: str, metrics: dict,
                      seed: Optional[int] = None, checkpoint: Optional[str] = None) -> int:
        """Record a run and return its id."""
        cursor = await self._connection.execute(
            """INSERT INTO runs (command, model, seed, checkpoint, metrics, created)
               VALUES (?, ?, ?, ?, ?, ?)""",
            (command, model, seed, checkpoint, json.dumps(metrics, sort_keys=True),
             datetime.now(timezone.utc).isoformat())
        )
        await self._connection.commit()
        return cursor.lastrowid

    async def pin_threshold(self, checkpoint: str, granularity: str, target_fpr: float,
                            threshold: float, achieved_fpr: float, n_clean: int) -> None:
        """Store (or replace) the tuned threshold of a checkpoint."""
        await self._connection.execute(
            """INSERT OR REPLACE INTO thresholds
               (checkpoint, granularity, target_fpr, threshold, achieved_fpr, n_clean, created)
               VALUES (?, ?, ?, ?, ?, ?, ?)""",
            (checkpoint, granularity, target_fpr, threshold, achieved_fpr, n_clean,
             datetime.now(timezone.utc).isoformat())
        )
        await self._connection.commit()

    async def get_pinned_threshold(self, checkpoint: str, granularity: str = "bag") -> Optional[float]:
        """Threshold pinned for a checkpoint, if any."""
        cursor = await self._connection.execute(
            "SELECT threshold FROM thresholds WHERE checkpoint = ? AND granularity = ?",
            (checkpoint, granularity)
        )
        row = await cursor.fetchone()
        return row["threshold"] if row else None

    async def get_recent_runs(self, limit: int = 20) -> list[RunRecord]:
        """Most recent runs first."""
        cursor = await self._connection.execute(
            "SELECT * FROM runs ORDER BY id DESC LIMIT ?",
            (limit,)
        )
        rows = await cursor.fetchall()
        return [self._row_to_run(row) for row in rows]

    async def get_stats(self) -> dict:
        """Get database statistics."""
        cursor = await self._connection.execute("SELECT COUNT(*) as total FROM runs")
        row = await cursor.fetchone()

        cursor = await self._connection.execute(
            "SELECT command, COUNT(*) as count FROM runs GROUP BY command"
        )
        by_command = {r["command"]: r["count"] for r in await cursor.fetchall()}

        cursor = await self._connection.execute("SELECT COUNT(*) as pinned FROM thresholds")
        pinned = await cursor.fetchone()

        return {
            "total_runs": row["total"] or 0,
            "by_command": by_command,
            "pinned_thresholds": pinned["pinned"] or 0,
        }

    def _row_to_run(self, row: aiosqlite.Row) -> RunRecord:
        """Convert database row to RunRecord."""
        return RunRecord(
            id=row["id"],
            command=row["command"],
            model=row["model"],
            seed=row["seed"],
            checkpoint=row["checkpoint"],
            metrics=json.loads(row["metrics"]),
            created=datetime.fromisoformat(row["created"]),
        )
