"""
Exception hierarchy for the analysis toolkit.

Operations that validate (filtrations, JNS hypotheses) return their findings
as data; these exceptions are reserved for inputs an operation cannot work
with at all.
"""

from pathlib import Path
from typing import Optional


class CarlesonError(Exception):
    """Base class for all toolkit errors."""


class MetricError(CarlesonError):
    """Distance data does not describe a metric (or weights are invalid)."""


class DegenerateSpaceError(CarlesonError):
    """The space is too small or has zero diameter for the requested operation."""


class EstimatorError(CarlesonError):
    """A triple-sum estimate was requested over an empty point set."""


class ConfigError(CarlesonError):
    """A configuration value is out of range."""


class ParseError(CarlesonError):
    """A CSV/JSON input file is malformed."""

    def __init__(self, path: Path, line: Optional[int], message: str):
        self.path = Path(path)
        self.line = line
        self.message = message
        where = f"{self.path}:{line}" if line is not None else str(self.path)
        super().__init__(f"{where}: {message}")
