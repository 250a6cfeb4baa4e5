"""Exception types shared across the package."""


class ImvadError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(ImvadError):
    """A data file does not parse under the declared format.

    Carries the offending location so loaders can point at the exact line.
    """

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}"
            if line is not None:
                loc += f":{line}"
            loc = f" [{loc}]"
        super().__init__(f"{message}{loc}")
        self.path = path
        self.line = line


class InvalidInputError(ImvadError):
    """An argument violates a documented precondition."""


class OutOfRangeError(InvalidInputError):
    """A window index does not admit a full window."""


class InvalidConfigurationError(ImvadError):
    """A configuration is internally inconsistent."""


class NumericError(ImvadError):
    """Training produced a non-finite loss; carries diagnostics."""

    def __init__(self, message, *, epoch=None, batch=None, parts=None):
        detail = []
        if epoch is not None:
            detail.append(f"epoch={epoch}")
        if batch is not None:
            detail.append(f"batch={batch}")
        if parts:
            detail.extend(f"{k}={v}" for k, v in parts.items())
        if detail:
            message = f"{message} ({', '.join(detail)})"
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.parts = dict(parts or {})
