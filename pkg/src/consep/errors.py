"""Exception hierarchy shared by every module."""


class ConsepError(Exception):
    """Base class for operational errors (CLI exit code 1)."""


class FormatError(ConsepError):
    """Unsupported or malformed file content."""


class ShapeError(ConsepError, ValueError):
    pass


class DegenerateSignalError(ConsepError, ValueError):
    """A signal has (near) zero energy where a ratio needs it."""


class CapacityError(ConsepError):
    pass


class ParseError(FormatError):
    def __init__(self, path, line_no, msg):
        super().__init__(f"{path}:{line_no}: {msg}")
        self.path = path
        self.line_no = line_no


class BackendError(ConsepError):
    """A separator or trainer invocation failed; carries captured diagnostics."""

    def __init__(self, msg, diagnostics=""):
        super().__init__(msg if not diagnostics else f"{msg}\n{diagnostics}")
        self.diagnostics = diagnostics


class ContractError(ConsepError):
    pass


class CheckpointError(ConsepError):
    pass
