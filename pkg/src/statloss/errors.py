"""Exception hierarchy shared across the package."""


class StatLossError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(StatLossError, ValueError):
    pass


class NotPositiveDefinite(StatLossError, ValueError):
    """Raised when a Cholesky pivot falls at or below the threshold."""


class EmptyClass(StatLossError, ValueError):
    pass


class DegenerateClass(StatLossError, ValueError):
    """A class has fewer than two samples where n_k - 1 is a divisor."""


class InvalidDims(StatLossError, ValueError):
    pass


class InvalidLabel(StatLossError, ValueError):
    pass


class DegenerateBatch(StatLossError, ValueError):
    pass


class LengthMismatch(StatLossError, ValueError):
    pass


class EmptyMatrix(StatLossError, ValueError):
    pass


class DegenerateKappa(StatLossError, ValueError):
    pass


class BatchTooSmall(StatLossError, ValueError):
    pass


class NoLabeledPixels(StatLossError, ValueError):
    pass


class InsufficientClassSamples(StatLossError, ValueError):
    def __init__(self, label, have, need):
        super().__init__(f"class {label}: have {have} samples, need more than {need}")
        self.label = label
        self.have = have
        self.need = need


class ParseError(StatLossError, ValueError):
    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
        self.path = path
        self.line = line


class RaggedRows(ParseError):
    pass


class EmptyFile(ParseError):
    pass


class ConfigError(StatLossError, ValueError):
    pass


class CheckpointError(StatLossError, ValueError):
    pass
