from __future__ import annotations

from typing import Optional


class PTDIError(ValueError):
    """Base class for every failure the pipeline reports to its caller."""


class ConfigError(PTDIError):
    pass


class IngestionError(PTDIError):
    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}"
            if line is not None:
                location += f":{line}"
            location += ": "
        super().__init__(f"{location}{message}")


class ScoreError(PTDIError):
    def __init__(self, message: str, record_id: Optional[str] = None):
        self.record_id = record_id
        prefix = f"record {record_id!r}: " if record_id is not None else ""
        super().__init__(f"{prefix}{message}")


class SplitError(PTDIError):
    pass


class EstimatorError(PTDIError):
    pass


class SelectionError(PTDIError):
    pass


class EvaluationError(PTDIError):
    def __init__(self, message: str, trial: Optional[int] = None):
        self.trial = trial
        prefix = f"trial {trial}: " if trial is not None else ""
        super().__init__(f"{prefix}{message}")


class PlotDataError(PTDIError):
    pass
