"""Exception hierarchy shared by all modules."""


class ConceptAlignError(Exception):
    """Base class for every error raised by this package."""


class DataError(ConceptAlignError, ValueError):
    """Input data could not be read or does not satisfy its format."""


class MagicMismatch(DataError):
    pass


class CountMismatch(DataError):
    pass


class TruncatedFile(DataError):
    pass


class MalformedLine(DataError):
    def __init__(self, lineno, message):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class RangeError(DataError):
    pass


class UnsupportedAngle(DataError):
    pass


class InsufficientClassCount(DataError):
    def __init__(self, label, available, required):
        super().__init__(
            f"class {label} has {available} samples, {required} required"
        )
        self.label = label
        self.available = available
        self.required = required


class DimensionMismatch(ConceptAlignError, ValueError):
    pass


class LengthMismatch(ConceptAlignError, ValueError):
    pass


class NonFiniteLoss(ConceptAlignError, ArithmeticError):
    """Training diverged; usually the learning rate is too large."""

    def __init__(self, message, layer=None):
        if layer is not None:
            message = f"layer {layer}: {message}"
        super().__init__(message)
        self.layer = layer


class InvalidMapping(ConceptAlignError, ValueError):
    pass


class OutOfRange(InvalidMapping):
    pass


class NonSquare(ConceptAlignError, ValueError):
    pass


class SpaceTooLarge(ConceptAlignError, ValueError):
    pass


class EmptyTrainingSet(ConceptAlignError, ValueError):
    pass


class RankDeficient(ConceptAlignError, ValueError):
    pass


class ConfigError(ConceptAlignError, ValueError):
    pass
