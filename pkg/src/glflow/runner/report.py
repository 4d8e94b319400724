"""Report lines, CSV output and the human-readable summary."""

from __future__ import annotations

import csv
import io
import math
import platform
from dataclasses import dataclass, field
from pathlib import Path

STATUSES = ("PASS", "FAIL", "INFO")


def fmt(x) -> str:
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, float):
        return "nan" if math.isnan(x) else f"{x:.17g}"
    return str(x)


@dataclass
class ReportLine:
    name: str
    status: str
    measured: object = ""
    tolerance: object = ""
    detail: str = ""

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"bad status {self.status!r}")


def check(name: str, measured: float, tolerance: float, detail: str = "", below: bool = True) -> ReportLine:
    """PASS when measured <= tolerance (or >= when ``below`` is False)."""
    ok = measured <= tolerance if below else measured >= tolerance
    if isinstance(measured, float) and math.isnan(measured):
        ok = False
    return ReportLine(name, "PASS" if ok else "FAIL", measured, tolerance, detail)


@dataclass
class ExperimentReport:
    name: str
    config_hash: str
    lines: list = field(default_factory=list)
    wall_clock: float = 0.0
    failed: str = ""
    runs: list = field(default_factory=list)

    def add(self, line: ReportLine) -> ReportLine:
        self.lines.append(line)
        return line

    @property
    def all_pass(self) -> bool:
        return not self.failed and all(l.status != "FAIL" for l in self.lines)

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["run", "criterion", "status", "measured", "tolerance", "detail"])
        w.writerow([self.name, "config_sha256", "INFO", self.config_hash, "", ""])
        for l in self.lines:
            w.writerow([self.name, l.name, l.status, fmt(l.measured), fmt(l.tolerance), l.detail])
        if self.failed:
            w.writerow([self.name, "aborted", "FAIL", "", "", self.failed])
        return buf.getvalue()

    def summary_text(self) -> str:
        out = [f"{self.name}: {'PASS' if self.all_pass else 'FAIL'}",
               f"config sha256 {self.config_hash}",
               f"wall clock {self.wall_clock:.2f} s",
               f"environment {fingerprint()}"]
        if self.failed:
            out.append(f"FAILED: {self.failed}")
        for l in self.lines:
            out.append(f"  {l.status:4s} {l.name:28s} {fmt(l.measured):>24s}  tol {fmt(l.tolerance)}  {l.detail}")
        return "\n".join(out) + "\n"

    def write(self, out: Path) -> None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.csv").write_text(self.csv_text())
        (out / "summary.txt").write_text(self.summary_text())
        marker = out / "FAILED"
        if self.failed:
            marker.write_text(self.failed + "\n")
        elif marker.exists():
            marker.unlink()


def fingerprint() -> str:
    import numpy
    import scipy
    return (f"python {platform.python_version()} numpy {numpy.__version__} "
            f"scipy {scipy.__version__} {platform.machine()}")
