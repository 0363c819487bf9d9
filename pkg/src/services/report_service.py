"""Writes run reports as byte-stable JSON and CSV files."""

import csv
import io
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from ..config.settings import settings
from ..core.exceptions import ReportIOError
from ..core.utils import format_float, round_floats
from ..models.schemas import RunReport

logger = logging.getLogger(__name__)

TERM_COLUMNS = [
    "source",
    "kind",
    "term",
    "sequence",
    "position",
    "sign",
    "value",
    "contribution",
    "standard_error",
]
COUNT_COLUMNS = ["plan_id", "outcome", "count"]
DISTRIBUTION_COLUMNS = ["plan_id", "outcome", "probability"]


class ReportService:
    """Serializes RunReports; identical reports give identical bytes."""

    def __init__(self, significant_digits: Optional[int] = None):
        self.digits = significant_digits or settings.significant_digits

    def to_json(self, report: RunReport) -> str:
        payload = round_floats(report.model_dump(mode="json"), self.digits)
        return json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    def from_json(self, text: str) -> RunReport:
        return RunReport.model_validate_json(text)

    def _cell(self, value: Any) -> Any:
        if isinstance(value, float):
            return format_float(value, self.digits)
        return value

    def to_csv(self, rows: List[Dict[str, Any]], columns: Sequence[str]) -> str:
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: self._cell(row.get(k, "")) for k in columns})
        return buffer.getvalue()

    def term_rows(self, report: RunReport) -> List[Dict[str, Any]]:
        rows: List[Dict[str, Any]] = []
        if report.correlators is not None:
            rows += [{"source": "exact", **r} for r in report.correlators.term_rows()]
        if report.estimates is not None:
            rows += [{"source": "estimate", **r} for r in report.estimates.term_rows()]
        return rows

    def emit_report(self, report: RunReport, out_dir: Optional[str] = None) -> List[Path]:
        """
        Write report.json, terms.csv, and counts.csv / distributions.csv when present.

        Args:
            report: Run report
            out_dir: Target directory; defaults to the report's configured one

        Returns:
            Paths written
        """
        directory = Path(out_dir or report.config.output_dir)
        files = {"report.json": self.to_json(report)}
        files["terms.csv"] = self.to_csv(self.term_rows(report), TERM_COLUMNS)
        if report.counts is not None:
            files["counts.csv"] = self.to_csv(report.counts.to_rows(), COUNT_COLUMNS)
        if report.distributions:
            rows = [r for d in report.distributions for r in d.to_rows()]
            files["distributions.csv"] = self.to_csv(rows, DISTRIBUTION_COLUMNS)

        written: List[Path] = []
        try:
            directory.mkdir(parents=True, exist_ok=True)
            for name, text in files.items():
                path = directory / name
                with open(path, "w", encoding="utf-8", newline="\n") as f:
                    f.write(text)
                written.append(path)
        except OSError as e:
            logger.error(f"Writing report failed: {e}", exc_info=True)
            raise ReportIOError(
                f"Cannot write report files: {e}",
                details={"directory": str(directory), "path": getattr(e, "filename", None)},
            )

        logger.info(
            f"Report written to {directory}",
            extra={"directory": str(directory), "files": [p.name for p in written]},
        )
        return written
