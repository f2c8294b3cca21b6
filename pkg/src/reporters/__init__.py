from typing import Optional

from .base import BaseReporter, RunReport
from .files import FileReporter
from .history import HistoryReporter

REPORTERS = [
    FileReporter(),
    HistoryReporter(),
]


async def publish_all(report: RunReport,
                      reporters: Optional[list[BaseReporter]] = None) -> dict[str, bool]:
    """Publish a run report through all configured reporters."""
    results = {}

    for reporter in reporters if reporters is not None else REPORTERS:
        if reporter.is_configured():
            results[reporter.name] = await reporter.publish(report)

    return results


__all__ = [
    "BaseReporter",
    "FileReporter",
    "HistoryReporter",
    "RunReport",
    "REPORTERS",
    "publish_all",
]
