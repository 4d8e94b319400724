from .config import ConfigError, RunConfig
from .execute import resume, run
from .report import ExperimentReport, ReportLine
from .suites import SUITES, suite

__all__ = ["ConfigError", "ExperimentReport", "ReportLine", "RunConfig", "SUITES", "resume", "run", "suite"]
