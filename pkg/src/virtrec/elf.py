"""Minimal ELF64 reader: section table, symbols, GOT relocations.

Only what the analysis needs is parsed; no relocation application beyond
building the GOT slot map.
"""

from __future__ import annotations

import struct

from .errors import MalformedContainer, WordSizeMismatch
from .image import Abi, BinaryImage, Section, SectionKind, derive_function_set

SHT_NOBITS = 8
SHT_SYMTAB = 2
SHT_DYNSYM = 11
SHT_RELA = 4

SHF_WRITE = 0x1
SHF_ALLOC = 0x2
SHF_EXECINSTR = 0x4
SHF_TLS = 0x400

STT_FUNC = 2
SHN_UNDEF = 0

R_X86_64_GLOB_DAT = 6
R_X86_64_JUMP_SLOT = 7
R_X86_64_RELATIVE = 8

PURE_VIRTUAL_NAMES = (b"__cxa_pure_virtual", b"_purecall")


class _Shdr:
    __slots__ = ("name_off", "type", "flags", "addr", "offset", "size", "link", "entsize", "name")

    def __init__(self, data: bytes, off: int):
        (
            self.name_off,
            self.type,
            self.flags,
            self.addr,
            self.offset,
            self.size,
            self.link,
            _info,
            _align,
            self.entsize,
        ) = struct.unpack_from("<IIQQQQIIQQ", data, off)
        self.name = ""


def _classify(shdr: _Shdr) -> SectionKind | None:
    if not shdr.flags & SHF_ALLOC:
        return None
    if shdr.flags & SHF_TLS:
        # TLS template sections can overlap the regular address space
        return None
    if shdr.flags & SHF_EXECINSTR:
        return SectionKind.TEXT
    if shdr.name in (".got", ".got.plt"):
        return SectionKind.GOT_LIKE
    if not shdr.flags & SHF_WRITE:
        return SectionKind.READ_ONLY_DATA
    # RELRO data is writable only until the loader seals it; for analysis
    # purposes it is read-only data and it is where PIC vtables live.
    if shdr.name.startswith(".data.rel.ro"):
        return SectionKind.READ_ONLY_DATA
    return SectionKind.DATA


def _section_bytes(raw: bytes, shdr: _Shdr) -> bytes:
    if shdr.type == SHT_NOBITS:
        return bytes(shdr.size)
    if shdr.offset + shdr.size > len(raw):
        raise MalformedContainer(
            f"section {shdr.name or shdr.name_off} extends past end of file"
        )
    return raw[shdr.offset : shdr.offset + shdr.size]


def _symbols(raw: bytes, shdrs: list[_Shdr], which: int):
    """Yield (name, value, type, defined) from .symtab or .dynsym."""
    for shdr in shdrs:
        if shdr.type != which:
            continue
        strtab = shdrs[shdr.link]
        names = raw[strtab.offset : strtab.offset + strtab.size]
        count = shdr.size // 24 if shdr.entsize == 0 else shdr.size // shdr.entsize
        for i in range(count):
            off = shdr.offset + i * 24
            name_off, info, _other, shndx, value, _size = struct.unpack_from(
                "<IBBHQQ", raw, off
            )
            end = names.find(b"\x00", name_off)
            name = names[name_off:end]
            yield name, value, info & 0xF, shndx != SHN_UNDEF


def _plt_stub_map(sections: list[Section]) -> dict[int, int]:
    """Map GOT slot address -> PLT stub that jumps through it (ff 25 rel32)."""
    out: dict[int, int] = {}
    for sec in sections:
        if sec.kind is not SectionKind.TEXT or not sec.name.startswith(".plt"):
            continue
        data = sec.data
        pos = data.find(b"\xff\x25")
        while pos != -1:
            if pos + 6 <= len(data):
                rel = struct.unpack_from("<i", data, pos + 2)[0]
                slot = sec.base + pos + 6 + rel
                # Credit the stub's entry point: stubs begin on 16-byte
                # boundaries (endbr64 first when CET is on).
                out.setdefault(slot, sec.base + (pos & ~0xF))
            pos = data.find(b"\xff\x25", pos + 1)
    return out


def load_elf(raw: bytes, abi: Abi, word_size: int) -> BinaryImage:
    if len(raw) < 64:
        raise MalformedContainer("ELF header truncated")
    ei_class, ei_data = raw[4], raw[5]
    if ei_data != 1:
        raise MalformedContainer("big-endian ELF not supported")
    file_word = 8 if ei_class == 2 else 4
    if file_word != word_size:
        raise WordSizeMismatch(
            f"file is ELF{'64' if file_word == 8 else '32'} but word size {word_size} requested"
        )
    if ei_class != 2:
        raise MalformedContainer("only ELF64 containers are supported")

    e_shoff, = struct.unpack_from("<Q", raw, 0x28)
    e_shentsize, e_shnum, e_shstrndx = struct.unpack_from("<HHH", raw, 0x3A)
    if e_shoff == 0 or e_shnum == 0:
        raise MalformedContainer("no section headers")
    if e_shoff + e_shnum * e_shentsize > len(raw):
        raise MalformedContainer("section header table extends past end of file")

    shdrs = [_Shdr(raw, e_shoff + i * e_shentsize) for i in range(e_shnum)]
    if e_shstrndx >= len(shdrs):
        raise MalformedContainer("bad section name string table index")
    shstr = shdrs[e_shstrndx]
    names = raw[shstr.offset : shstr.offset + shstr.size]
    for shdr in shdrs:
        end = names.find(b"\x00", shdr.name_off)
        shdr.name = names[shdr.name_off : end].decode("latin-1")

    sections = []
    for shdr in shdrs:
        kind = _classify(shdr)
        if kind is None or shdr.size == 0:
            continue
        sections.append(
            Section(shdr.name, shdr.addr, shdr.size, kind, _section_bytes(raw, shdr))
        )
    sections.sort(key=lambda s: s.base)

    entry_functions: set[int] = set()
    pure_candidates: dict[bytes, int] = {}
    und_pure: set[bytes] = set()
    sym_indices: dict[int, list[bytes]] = {}
    for table in (SHT_SYMTAB, SHT_DYNSYM):
        idx = 0
        for name, value, stype, defined in _symbols(raw, shdrs, table):
            if table == SHT_DYNSYM:
                sym_indices.setdefault(idx, []).append(name)
                idx += 1
            if stype == STT_FUNC and defined and value:
                entry_functions.add(value)
                if name in PURE_VIRTUAL_NAMES:
                    pure_candidates[name] = value
            elif name in PURE_VIRTUAL_NAMES and not defined:
                und_pure.add(name)

    got_like = [s for s in sections if s.kind is SectionKind.GOT_LIKE]
    got_map: dict[int, int] = {}
    pure_slots: set[int] = set()
    for shdr in shdrs:
        if shdr.type != SHT_RELA:
            continue
        count = shdr.size // 24
        for i in range(count):
            r_offset, r_info, r_addend = struct.unpack_from(
                "<QQq", raw, shdr.offset + i * 24
            )
            if not any(g.contains(r_offset) for g in got_like):
                continue
            rtype = r_info & 0xFFFFFFFF
            sym = r_info >> 32
            if rtype == R_X86_64_RELATIVE:
                got_map[r_offset] = r_addend
            elif rtype in (R_X86_64_GLOB_DAT, R_X86_64_JUMP_SLOT):
                names_for = sym_indices.get(sym, [])
                if any(n in und_pure for n in names_for):
                    pure_slots.add(r_offset)

    pure_virtual = None
    for name in PURE_VIRTUAL_NAMES:
        if name in pure_candidates:
            pure_virtual = pure_candidates[name]
            break
    if pure_virtual is None and pure_slots:
        stubs = _plt_stub_map(sections)
        for slot in sorted(pure_slots):
            if slot in stubs:
                pure_virtual = stubs[slot]
                break

    if not entry_functions:
        entry_functions = set(
            derive_function_set([s for s in sections if s.kind is SectionKind.TEXT])
        )

    return BinaryImage(
        sections=tuple(sections),
        word_size=word_size,
        abi=abi,
        entry_functions=frozenset(entry_functions),
        pure_virtual_addr=pure_virtual,
        got_map=got_map,
    )
