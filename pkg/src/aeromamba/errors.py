"""Exception hierarchy shared by all modules.

CLI exit-code mapping: ArgumentError -> 2, I/O and format errors -> 3,
ContractError / NumericError -> 4.
"""


class ArgumentError(ValueError):
    """A caller-supplied value violates an operation's precondition."""


class ContractError(RuntimeError):
    """An internal contract was violated (mismatched shapes, misuse of a
    stateful object, missing saved activations, ...)."""


class NumericError(ArithmeticError):
    """A non-finite value appeared where a finite one is required."""

    def __init__(self, message, component=None):
        if component is not None:
            message = f"{component}: {message}"
        super().__init__(message)
        self.component = component


class AudioFormatError(IOError):
    """Malformed audio container; carries the byte offset of the problem."""

    def __init__(self, message, byte_offset=None):
        if byte_offset is not None:
            message = f"{message} (at byte offset {byte_offset})"
        super().__init__(message)
        self.byte_offset = byte_offset


class UnsupportedFormatError(IOError):
    """Structurally valid audio file using a codec we do not decode."""

    def __init__(self, message, codec_tag=None):
        super().__init__(message)
        self.codec_tag = codec_tag
