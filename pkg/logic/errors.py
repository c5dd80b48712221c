"""
Exception hierarchy shared by the library and the command-line front end.
"""


class CSLError(Exception):
    """Base class for every error the application reports to the user"""


class DataFormatError(CSLError, ValueError):
    """Malformed dataset text; carries the 1-based line number when known"""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(CSLError, ValueError):
    """Invalid or inconsistent configuration value"""


class ShapeletLengthError(CSLError, ValueError):
    """A shapelet (or window) is longer than the series it is applied to"""


class InputPathError(CSLError, FileNotFoundError):
    """A referenced input file does not exist"""

    def __init__(self, path):
        self.path = path
        super().__init__(f"input path not found: {path}")


class TrainingError(CSLError):
    """Any error raised inside the training loop, with its position"""

    def __init__(self, message, epoch=None, step=None):
        self.epoch = epoch
        self.step = step
        super().__init__(f"epoch {epoch}, step {step}: {message}")


class GradientCheckError(CSLError):
    """Analytic and numerical gradients disagree"""


class BatchSizeError(CSLError, ValueError):
    """An operation needs more rows than the batch provides"""


class LabelError(CSLError, ValueError):
    """Labels are missing, degenerate or do not match the representations"""
