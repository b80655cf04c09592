"""Exception hierarchy shared by the library and the command-line tool."""


class DysignError(Exception):
    """Base class for all errors raised by this package."""


class DataError(DysignError):
    """Input files are missing, malformed or inconsistent."""


class ParseError(DataError):
    def __init__(self, path, line_no, message):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")


class NodeIndexError(DataError, IndexError):
    """A node id falls outside the declared node universe."""


class ValidationError(DysignError, ValueError):
    """Numeric input violates a documented precondition."""


class ConfigError(DysignError):
    """Invalid or unknown configuration values."""


class CheckpointError(DysignError):
    """A checkpoint file cannot be read or fails its integrity check."""


class DivergenceError(DysignError):
    """Training produced a non-finite loss."""

    def __init__(self, message, param_norms=None):
        self.param_norms = dict(param_norms or {})
        if self.param_norms:
            detail = ", ".join(f"{k}={v:.4g}" for k, v in self.param_norms.items())
            message = f"{message} (parameter norms: {detail})"
        super().__init__(message)
