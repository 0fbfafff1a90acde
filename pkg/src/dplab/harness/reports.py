"""Plain-text reports: key=value lines, then an optional comma-separated table."""

from __future__ import annotations

import math
import os
import sys
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

import numpy as np


def format_value(v: Any) -> str:
    if v is None:
        return "none"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return repr(v)
    text = str(v)
    if "\n" in text:
        raise ValueError("report values must be single-line")
    return text


@dataclass
class Report:
    record: dict[str, Any]
    columns: Sequence[str] = ()
    rows: list[Sequence[Any]] = field(default_factory=list)

    def to_text(self) -> str:
        lines = [f"{k}={format_value(v)}" for k, v in self.record.items()]
        if self.columns:
            lines.append("")
            lines.append(",".join(self.columns))
            lines.extend(",".join(format_value(v) for v in row) for row in self.rows)
        return "\n".join(lines) + "\n"


def emit_report(report: Report | Mapping[str, Any], path: Optional[str | os.PathLike] = None) -> str:
    """Write the report to ``path`` (stdout when None) and return the text."""
    if not isinstance(report, Report):
        report = Report(dict(report))
    text = report.to_text()
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
    return text


def parse_report(text: str) -> Report:
    head, _, table = text.partition("\n\n")
    record = dict(line.split("=", 1) for line in head.splitlines() if line)
    lines = [ln for ln in table.splitlines() if ln]
    if not lines:
        return Report(record)
    return Report(record, lines[0].split(","), [ln.split(",") for ln in lines[1:]])
