"""
Domain errors raised by the services layer
"""
from typing import Any, List, Optional


class RMDGraphError(Exception):
    """Base class for every error the library raises on purpose"""


class DatasetError(RMDGraphError):
    """Malformed or invalid input data"""

    def __init__(self, message: str, row: Optional[int] = None):
        self.row = row
        if row is not None:
            message = f"{message} (row {row})"
        super().__init__(message)


class ParameterError(RMDGraphError):
    """A parameter is outside its admissible range"""


class DisconnectedGraphError(RMDGraphError):
    """A node cannot be reached from any labelled node"""

    def __init__(self, message: str, node: Optional[int] = None):
        self.node = node
        super().__init__(message)


class ClusteringError(RMDGraphError):
    """Spectral clustering could not produce K non-empty clusters"""


class InfeasibleSelectionError(RMDGraphError):
    """No grid point satisfies the minimum cluster size constraint"""

    def __init__(self, message: str, trace: Optional[List[Any]] = None):
        self.trace = trace or []
        super().__init__(message)


class DegenerateCutError(RMDGraphError):
    """A cut leaves one side (nearly) empty"""


class UnsupportedDimensionError(RMDGraphError):
    """Analytic routine called outside its supported dimensions"""


class PipelineStageError(RMDGraphError):
    """A pipeline stage failed; carries the stage name"""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
