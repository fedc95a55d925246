"""MSVC-ABI recovery: VB-Tables and virtual/intermediate bases.

MSVC keeps vbase offsets in a separate table (the VB-Table) referenced
from the object, with no construction vtables and no VTTs; recovery keys
off the constant first entry and ctor call-site offsets.
"""

from __future__ import annotations

from dataclasses import dataclass

from .ctors import CtorSummary, SymKind
from .disasm import MASK64, FunctionStream, OperandKind
from .image import BinaryImage
from .itanium import VTableGroup
from .recovery import EdgeKind, Evidence, InheritanceEdge, class_of_summary

DEFAULT_VBTABLE_CONSTANT = 0
DEFAULT_CAP_OFFSET = 0x100000


@dataclass(eq=False)
class VbTable:
    base: int
    entries: list[int]
    first_constant: int


def text_immediates(img: BinaryImage, instrs: dict[int, FunctionStream]) -> set[int]:
    """Immediate (and rip-resolved) references found in decoded text."""
    refs: set[int] = set()
    for stream in instrs.values():
        for ins in stream:
            for operand in (ins.src, ins.dst):
                if operand is None:
                    continue
                if operand.kind is OperandKind.IMMEDIATE:
                    refs.add(operand.imm & MASK64)
                elif operand.kind is OperandKind.MEMORY and operand.mem_base in (16, None):
                    refs.add((operand.mem_disp or 0) & MASK64)
    return refs


def get_vbtables(
    img: BinaryImage,
    instrs: dict[int, FunctionStream],
    *,
    constant: int = DEFAULT_VBTABLE_CONSTANT,
    cap_offset: int = DEFAULT_CAP_OFFSET,
) -> dict[int, VbTable]:
    """Scan text immediates for VB-Tables: the configured constant followed
    by at least one offset in (0, cap_offset)."""
    W = img.word_size
    out: dict[int, VbTable] = {}
    for ref in sorted(text_immediates(img, instrs)):
        if ref % W or not img.in_data(ref):
            continue
        first = img.try_read_word(ref, signed=True)
        if first is None or first != constant:
            continue
        entries: list[int] = []
        loc = ref + W
        while True:
            w = img.try_read_word(loc, signed=True)
            if w is not None and 0 < w < cap_offset:
                entries.append(w)
                loc += W
            else:
                break
        if entries:
            out[ref] = VbTable(ref, entries, first)
    return out


def recover_msvc_bases(
    summaries: dict[int, CtorSummary],
    ctor_funcs: set[int],
    vbtables: dict[int, VbTable],
    vtables: list[VTableGroup],
) -> tuple[set[InheritanceEdge], set[InheritanceEdge], list[str]]:
    """Virtual edge: ctor call at this+k where k is an entry of the caller's
    first initialized VB-Table. Intermediate edge: the callee initializes a
    known VB-Table pointer itself."""
    ctor_class = {
        func: group
        for func in ctor_funcs
        if (group := class_of_summary(summaries[func], vtables)) is not None
    }
    virtual_edges: set[InheritanceEdge] = set()
    intermediate_edges: set[InheritanceEdge] = set()
    errors: list[str] = []

    for func in sorted(ctor_funcs):
        summary = summaries[func]
        derived = ctor_class.get(func)
        if derived is None:
            continue
        vbt_writes = sorted(summary.vbt_writes)
        first_vbt = None
        if vbt_writes:
            first_vbt = vbtables.get(vbt_writes[0][1])
        else:
            errors.append(f"ctor {func:#x}: initializes no known VB-Table pointer")
        for record in summary.calls:
            if record.target is None or record.arg1.kind is not SymKind.THIS_PLUS:
                continue
            target_summary = summaries.get(record.target)
            base = ctor_class.get(record.target)
            if base is None or base is derived:
                continue
            if first_vbt is not None and record.arg1.k in first_vbt.entries:
                virtual_edges.add(
                    InheritanceEdge(
                        derived.id, base.id, EdgeKind.VIRTUAL, Evidence.VBASE_OFFSET_MATCH
                    )
                )
            if target_summary is not None and target_summary.vbt_writes:
                intermediate_edges.add(
                    InheritanceEdge(
                        derived.id, base.id, EdgeKind.INTERMEDIATE, Evidence.SUB_VTT_ARG
                    )
                )
    return virtual_edges, intermediate_edges, errors
