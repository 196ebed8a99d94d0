"""Exception hierarchy. The CLI maps each class onto a fixed exit code."""


class TcamError(Exception):
    exit_code = 1


class FormatError(TcamError):
    """A file or container is not in the expected format."""

    exit_code = 3


class DecodeError(FormatError):
    def __init__(self, message, bit_offset=None):
        if bit_offset is not None:
            message = f"{message} (at bit {bit_offset})"
        super().__init__(message)
        self.bit_offset = bit_offset


class ConsistencyError(TcamError):
    """Reference / change map / RoI stream do not agree."""

    exit_code = 4

    def __init__(self, message, mcb=None):
        if mcb is not None:
            message = f"{message} (first inconsistent MCB x={mcb[0]} y={mcb[1]})"
        super().__init__(message)
        self.mcb = mcb


class ModelError(TcamError):
    """Distortion model is not invertible or the fit is degenerate."""

    exit_code = 5


class DegenerateInputError(TcamError):
    exit_code = 6


class ConfigError(TcamError):
    exit_code = 7

    def __init__(self, message, pointer=""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer
