"""Exception hierarchy shared by every stage of the pipeline."""


class QKDError(Exception):
    """Base class for all errors raised by :mod:`ebqkd`."""


class InvalidChannel(QKDError, ValueError):
    pass


class InvalidProbability(QKDError, ValueError):
    pass


class InvalidRandomWord(QKDError, ValueError):
    pass


class ConfigError(QKDError, ValueError):
    pass


class ParseError(QKDError, ValueError):
    """Malformed input file. ``line`` is 1-based and counts the header."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


class StreamOrderError(QKDError, ValueError):
    pass


class SyncFailed(QKDError):
    pass


class NoPeak(QKDError):
    pass


class EmptyBasis(QKDError):
    def __init__(self, basis):
        self.basis = basis
        super().__init__(f"no sifted bits in basis {basis}")


class DomainError(QKDError, ValueError):
    pass


class DegenerateErrorRate(QKDError, ValueError):
    pass


class InsecureRegime(QKDError):
    pass


class NoSecureBias(QKDError):
    pass


class PipelineError(QKDError):
    """A pipeline stage failed; ``stage`` names it and ``__cause__`` holds the reason."""

    def __init__(self, stage, cause):
        self.stage = stage
        super().__init__(f"stage '{stage}' failed: {cause}")
