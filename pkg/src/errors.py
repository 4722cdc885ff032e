"""Exception hierarchy shared by every service"""

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class ActGraphError(Exception):
    """Base class for data and model errors (CLI exit code 2)"""

    exit_code = EXIT_DATA


class FormatError(ActGraphError):
    pass


class BadMagic(FormatError):
    def __init__(self, expected: bytes, found: bytes):
        super().__init__(f"bad magic: expected {expected!r}, found {found!r}")
        self.expected = expected
        self.found = found


class TruncatedPayload(FormatError):
    pass


class ShapeMismatch(FormatError):
    pass


class CountMismatch(FormatError):
    pass


class UnsupportedVersion(FormatError):
    def __init__(self, version):
        super().__init__(f"unsupported format version {version}")
        self.version = version


class ModelFormatError(FormatError):
    pass


class NonFiniteData(ActGraphError):
    pass


class ModelSpecError(ActGraphError):
    pass


class TrainingDiverged(ActGraphError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")
        self.epoch = epoch
        self.loss = loss


class DimensionMismatch(ActGraphError):
    pass


class EmptyClassError(ActGraphError):
    pass


class SingleClassError(ActGraphError):
    pass


class MalformedProbabilities(ActGraphError):
    pass


class UnknownClassError(ActGraphError):
    pass


class UndefinedRAUC(ActGraphError):
    pass


class NonImageInput(ActGraphError):
    pass


class StageError(ActGraphError):
    """Wraps an error raised inside one experiment stage"""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


class ConfigError(ActGraphError):
    pass
