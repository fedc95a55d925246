"""Immutable addressed byte store over a loaded binary.

Sections are classified once at load time; all later passes work through
word reads and section-kind queries on this object and never touch the
file again.
"""

from __future__ import annotations

import bisect
import enum
import struct
from dataclasses import dataclass, field
from pathlib import Path

from .errors import MalformedContainer, Misaligned, OutOfBounds, UnsupportedFormat

# Section names that are mapped read-only but hold unwind/linker metadata,
# never program data structures; the vtable passes skip them.
METADATA_SECTIONS = (
    ".eh_frame",
    ".eh_frame_hdr",
    ".gcc_except_table",
    ".note",
    ".interp",
    ".dynsym",
    ".dynstr",
    ".gnu.hash",
    ".hash",
    ".gnu.version",
    ".rela",
    ".rel.",
)


class Abi(enum.Enum):
    ITANIUM = "itanium"
    MSVC = "msvc"


class SectionKind(enum.Enum):
    TEXT = "text"
    READ_ONLY_DATA = "rodata"
    DATA = "data"
    GOT_LIKE = "got"
    EXTERN = "extern"
    OTHER = "other"


DATA_KINDS = (SectionKind.READ_ONLY_DATA, SectionKind.DATA, SectionKind.GOT_LIKE)


@dataclass(frozen=True)
class Section:
    name: str
    base: int
    size: int
    kind: SectionKind
    data: bytes

    def __post_init__(self):
        assert len(self.data) == self.size, "section bytes must match size"

    @property
    def end(self) -> int:
        return self.base + self.size

    def contains(self, addr: int) -> bool:
        return self.base <= addr < self.end


@dataclass(frozen=True)
class BinaryImage:
    sections: tuple[Section, ...]
    word_size: int = 8
    abi: Abi = Abi.ITANIUM
    entry_functions: frozenset[int] = field(default_factory=frozenset)
    pure_virtual_addr: int | None = None
    got_map: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        bases = [s.base for s in self.sections]
        assert bases == sorted(bases), "sections must be sorted by base"
        for prev, cur in zip(self.sections, self.sections[1:]):
            assert prev.end <= cur.base, "sections must not overlap"
        object.__setattr__(self, "_bases", bases)

    def section_at(self, addr: int) -> Section | None:
        idx = bisect.bisect_right(self._bases, addr) - 1
        if idx < 0:
            return None
        sec = self.sections[idx]
        return sec if sec.contains(addr) else None

    def classify(self, addr: int) -> SectionKind | None:
        sec = self.section_at(addr)
        return sec.kind if sec is not None else None

    def read_word(self, addr: int, *, signed: bool = False) -> int:
        if addr % self.word_size:
            raise Misaligned(f"address {addr:#x} not {self.word_size}-byte aligned")
        sec = self.section_at(addr)
        if sec is None or addr + self.word_size > sec.end:
            raise OutOfBounds(f"no {self.word_size}-byte word mapped at {addr:#x}")
        off = addr - sec.base
        fmt = ("<q" if signed else "<Q") if self.word_size == 8 else ("<i" if signed else "<I")
        return struct.unpack_from(fmt, sec.data, off)[0]

    def try_read_word(self, addr: int, *, signed: bool = False) -> int | None:
        try:
            return self.read_word(addr, signed=signed)
        except (OutOfBounds, Misaligned):
            return None

    def resolve_got(self, addr: int) -> int:
        """One level of GOT indirection; already-resolved addresses pass through."""
        return self.got_map.get(addr, addr)

    def is_function_start(self, addr: int) -> bool:
        if addr in self.entry_functions:
            return True
        return self.pure_virtual_addr is not None and addr == self.pure_virtual_addr

    def in_data(self, addr: int) -> bool:
        return self.classify(addr) in DATA_KINDS

    def scannable_data_sections(self) -> list[Section]:
        """Read-only data sections that may hold vtables/VTTs (metadata skipped)."""
        out = []
        for sec in self.sections:
            if sec.kind is not SectionKind.READ_ONLY_DATA:
                continue
            if any(sec.name.startswith(p) for p in METADATA_SECTIONS):
                continue
            out.append(sec)
        return out

    def text_sections(self) -> list[Section]:
        return [s for s in self.sections if s.kind is SectionKind.TEXT]

    def dump_sections(self) -> str:
        """One section per line: name, base hex, size, kind."""
        lines = [
            f"{s.name} {s.base:#x} {s.size} {s.kind.value}" for s in self.sections
        ]
        return "\n".join(lines) + ("\n" if lines else "")


# Prologue byte patterns used when no symbol table survives: endbr64 and the
# classic frame setup. Both anchor -O0/-O2 GCC and MSVC-style functions.
_PROLOGUES = (b"\xf3\x0f\x1e\xfa", b"\x55\x48\x89\xe5")


def derive_function_set(sections: list[Section]) -> frozenset[int]:
    """Fallback function starts for stripped binaries: prologue patterns
    plus direct call targets that land inside a text section."""
    starts: set[int] = set()
    spans = [(s.base, s.end) for s in sections]

    def in_text(addr: int) -> bool:
        return any(lo <= addr < hi for lo, hi in spans)

    for sec in sections:
        endbr, frame = _PROLOGUES
        pos = sec.data.find(endbr)
        while pos != -1:
            starts.add(sec.base + pos)
            pos = sec.data.find(endbr, pos + 1)
        pos = sec.data.find(frame)
        while pos != -1:
            # skip the frame setup that directly follows an endbr64: that
            # function start is already recorded four bytes earlier
            if pos < 4 or sec.data[pos - 4 : pos] != endbr:
                starts.add(sec.base + pos)
            pos = sec.data.find(frame, pos + 1)
        pos = sec.data.find(b"\xe8")
        while pos != -1:
            if pos + 5 <= sec.size:
                rel = struct.unpack_from("<i", sec.data, pos + 1)[0]
                target = sec.base + pos + 5 + rel
                if in_text(target):
                    starts.add(target)
            pos = sec.data.find(b"\xe8", pos + 1)
    return frozenset(starts)


def load(path: str | Path, abi: Abi | str = Abi.ITANIUM, word_size: int = 8) -> BinaryImage:
    """Load an ELF64 (Itanium) or PE32+ (MSVC) file into a BinaryImage."""
    if isinstance(abi, str):
        abi = Abi(abi)
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise MalformedContainer(f"{path}: {len(raw)} bytes is too short for any header")
    if raw[:4] == b"\x7fELF":
        from . import elf

        return elf.load_elf(raw, abi, word_size)
    if raw[:2] == b"MZ":
        from . import pe

        return pe.load_pe(raw, abi, word_size)
    raise UnsupportedFormat(f"{path}: neither ELF nor PE (magic {raw[:4]!r})")
