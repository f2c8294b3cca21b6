from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional
import logging

from src.evaluation import MetricsReport, ThresholdResult
from src.training import EpochLog

logger = logging.getLogger(__name__)


@dataclass
class RunReport:
    """Everything a finished subcommand hands to the reporters."""
    command: str
    model: str
    out_dir: Optional[Path] = None
    seed: Optional[int] = None
    checkpoint: Optional[str] = None
    metrics: Optional[MetricsReport] = None
    threshold: Optional[ThresholdResult] = None
    train_log: list[EpochLog] = field(default_factory=list)
    comparison: list[tuple[str, MetricsReport]] = field(default_factory=list)

    def summary(self) -> dict:
        """Flat numeric summary used for run history."""
        values: dict = {}
        if self.metrics is not None:
            values.update(
                recall_at_fpr=self.metrics.recall_at_fpr,
                auc=self.metrics.auc,
                threshold=self.metrics.threshold,
                fpr=self.metrics.fpr,
            )
        if self.threshold is not None:
            values.update(
                threshold=self.threshold.threshold,
                achieved_fpr=self.threshold.achieved_fpr,
                target_fpr=self.threshold.target_fpr,
            )
        if self.train_log:
            last = self.train_log[-1]
            values.update(epochs=last.epoch, mean_loss=last.mean_loss,
                          val_auc=max(e.val_auc for e in self.train_log))
        return values


class BaseReporter(ABC):
    """Abstract base class for run report sinks."""

    name: str = "base"

    @abstractmethod
    def is_configured(self) -> bool:
        """Check if this reporter is properly configured."""
        pass

    @abstractmethod
    async def publish(self, report: RunReport) -> bool:
        """
        Publish the outcome of a run.

        Args:
            report: Results of the finished subcommand

        Returns:
            True if the report was stored successfully
        """
        pass
