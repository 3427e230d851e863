class ShapeMismatchError(ValueError):
    """Raised when array dimensions do not fit the operation"""


class InvalidClassError(ValueError):
    """Raised when a class label lies outside 1..m"""


class CheckpointFormatError(ValueError):
    """Raised when a checkpoint file is corrupt or of an unknown version"""


class DatasetFormatError(ValueError):
    """Raised when an IDX, WAV or image input cannot be parsed"""


class DivergenceError(RuntimeError):
    """Raised when training produces a non-finite loss or gradient"""


class GradcheckFailure(RuntimeError):
    """Raised when a gradient oracle disagrees beyond tolerance"""

    def __init__(self, message: str, worst_case: dict):
        super().__init__(message)
        self.worst_case = worst_case
