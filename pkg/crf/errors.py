"""
Exception hierarchy for the CRF toolkit
Every failure the library reports derives from CRFError
"""

from typing import Optional


class CRFError(Exception):
    """Base class for all toolkit errors"""


class PreconditionError(CRFError, ValueError):
    """An operation was called on inputs that violate its precondition"""


class ParameterError(CRFError, ValueError):
    """A numeric or structural parameter is out of its valid range"""


class DegenerateDistributionError(CRFError, ValueError):
    """A distribution has no mass (every log entry is -inf)"""


class InfeasibleInstanceError(CRFError):
    """No labeling of an instance has nonzero potential"""

    def __init__(self, message: str, instance: Optional[int] = None):
        if instance is not None:
            message = f"instance {instance}: {message}"
        super().__init__(message)
        self.instance = instance


class ModelCorruptionError(CRFError):
    """Weights and features disagree (e.g. a feature index outside the weight vector)"""


class AssignmentError(CRFError, ValueError):
    """An assignment value lies outside a variable's cardinality"""


class StructureError(CRFError):
    """The graph structure does not support the requested algorithm"""


class ZeroProbabilityError(CRFError, ValueError):
    """A probability estimate is zero where a strictly positive value is required"""


class CalibrationError(CRFError):
    """Every candidate step size diverged during SGD calibration"""


class ParallelEvaluationError(CRFError):
    """A worker failed while computing part of a batch gradient"""


class CorpusFormatError(CRFError):
    """A CoNLL or template file could not be parsed"""

    def __init__(self, message: str, line_number: Optional[int] = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class AlignmentError(CRFError):
    """Gold and predicted files do not have the same sequence/token shape"""

    def __init__(self, message: str, sequence: int, token: Optional[int] = None):
        position = f"sequence {sequence}" + (
            f", token {token}" if token is not None else ""
        )
        super().__init__(f"{position}: {message}")
        self.sequence = sequence
        self.token = token


class ModelFileError(CRFError):
    """Base class for model file load failures"""


class VersionMismatchError(ModelFileError):
    """The model file was written by an unsupported format version"""


class ChecksumError(ModelFileError):
    """The model file content does not match its checksum (or is truncated)"""


class MalformedSectionError(ModelFileError):
    """A model file section could not be parsed"""
