"""Minimal PE32+ reader for the MSVC lane."""

from __future__ import annotations

import struct

from .errors import MalformedContainer, WordSizeMismatch
from .image import Abi, BinaryImage, Section, SectionKind, derive_function_set

IMAGE_SCN_MEM_EXECUTE = 0x20000000
IMAGE_SCN_MEM_READ = 0x40000000
IMAGE_SCN_MEM_WRITE = 0x80000000

MACHINE_AMD64 = 0x8664
MACHINE_I386 = 0x14C


def _classify(characteristics: int) -> SectionKind:
    if characteristics & IMAGE_SCN_MEM_EXECUTE:
        return SectionKind.TEXT
    if characteristics & IMAGE_SCN_MEM_WRITE:
        return SectionKind.DATA
    if characteristics & IMAGE_SCN_MEM_READ:
        return SectionKind.READ_ONLY_DATA
    return SectionKind.OTHER


def load_pe(raw: bytes, abi: Abi, word_size: int) -> BinaryImage:
    if len(raw) < 0x40:
        raise MalformedContainer("DOS header truncated")
    (e_lfanew,) = struct.unpack_from("<I", raw, 0x3C)
    if e_lfanew + 24 > len(raw):
        raise MalformedContainer("PE header offset past end of file")
    if raw[e_lfanew : e_lfanew + 4] != b"PE\x00\x00":
        raise MalformedContainer("missing PE signature")
    machine, nsections, _, _, _, opt_size, _ = struct.unpack_from(
        "<HHIIIHH", raw, e_lfanew + 4
    )
    file_word = 8 if machine == MACHINE_AMD64 else 4 if machine == MACHINE_I386 else None
    if file_word is None:
        raise MalformedContainer(f"unsupported machine {machine:#x}")
    if file_word != word_size:
        raise WordSizeMismatch(
            f"file machine {machine:#x} implies word size {file_word}, not {word_size}"
        )

    opt_off = e_lfanew + 24
    if opt_off + opt_size > len(raw) or opt_size < 0x70:
        raise MalformedContainer("optional header truncated")
    (magic,) = struct.unpack_from("<H", raw, opt_off)
    if magic != 0x20B:
        raise MalformedContainer(f"optional header magic {magic:#x} is not PE32+")
    (image_base,) = struct.unpack_from("<Q", raw, opt_off + 24)

    sections = []
    sec_off = opt_off + opt_size
    for i in range(nsections):
        off = sec_off + i * 40
        if off + 40 > len(raw):
            raise MalformedContainer("section table truncated")
        name_raw = raw[off : off + 8].rstrip(b"\x00")
        vsize, vaddr, rawsize, rawptr = struct.unpack_from("<IIII", raw, off + 8)
        (characteristics,) = struct.unpack_from("<I", raw, off + 36)
        size = vsize if vsize else rawsize
        if size == 0:
            continue
        payload = raw[rawptr : rawptr + min(rawsize, size)]
        payload = payload + bytes(size - len(payload))
        sections.append(
            Section(
                name_raw.decode("latin-1"),
                image_base + vaddr,
                size,
                _classify(characteristics),
                payload,
            )
        )
    sections.sort(key=lambda s: s.base)

    entry_functions = derive_function_set(
        [s for s in sections if s.kind is SectionKind.TEXT]
    )
    return BinaryImage(
        sections=tuple(sections),
        word_size=word_size,
        abi=abi,
        entry_functions=entry_functions,
        pure_virtual_addr=None,
        got_map={},
    )
