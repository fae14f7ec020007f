"""Stable result model and summary statistics shared by the executor and the CLI."""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Sequence

from confcheck import ENGINE
from confcheck.core_model import CheckResult, ResultStatus


@dataclass
class ScanReport:
    results: list[CheckResult] = field(default_factory=list)
    engine: str = ENGINE
    started_at: str = field(
        default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds")
    )

    @property
    def summary(self) -> dict[str, int]:
        return summarize(self.results)


def summarize(results: Sequence[CheckResult]) -> dict[str, int]:
    """Counts of results per definition status; independent of result order."""
    counts = {status.value: 0 for status in ResultStatus}
    for result in results:
        counts[result.definition_status.value] += 1
    return counts


def exit_code(results: Sequence[CheckResult]) -> int:
    """0 when every definition holds, 1 when any is false, 2 when only errors remain."""
    counts = summarize(results)
    if counts["false"]:
        return 1
    if counts["error"]:
        return 2
    return 0
