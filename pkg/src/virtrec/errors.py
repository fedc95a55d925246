"""Exception types shared across the analysis passes."""


class VirtrecError(Exception):
    """Base class for all analyzer errors."""


class UnsupportedFormat(VirtrecError):
    """The file is neither a parseable ELF64 nor PE32+ container."""


class MalformedContainer(VirtrecError):
    """Header structures are truncated or internally inconsistent."""


class WordSizeMismatch(VirtrecError):
    """The container's file class disagrees with the requested word size."""


class OutOfBounds(VirtrecError):
    """A word read fell outside every mapped section."""


class Misaligned(VirtrecError):
    """A word read was not aligned to the image word size."""


class GrammarError(VirtrecError):
    """A textual disassembly line failed the documented grammar (strict mode)."""

    def __init__(self, line_no: int, text: str):
        super().__init__(f"line {line_no}: unparseable instruction {text!r}")
        self.line_no = line_no


class NoPrimaryFound(VirtrecError):
    """A VTT contains no entry whose sub-VTable has offset-to-top zero."""


class ParseError(VirtrecError):
    """Ground-truth input could not be parsed."""
