"""Constructor/destructor identification and symbolic summarization.

A single forward pass tracks how object offsets (this+k), immediates, and
the second hidden argument propagate through registers and frame slots.
Anything the lattice cannot express degrades to Unknown; it never becomes
a wrong concrete value. Constructors and destructors are not distinguished
(both initialize vptrs and both feed recovery identically).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .disasm import MASK64, FunctionStream, Op, Operand, OperandKind
from .image import Abi, BinaryImage
from .itanium import Vtt

# first/second integer argument registers per calling convention
ARG_REGS = {Abi.ITANIUM: (7, 6), Abi.MSVC: (1, 2)}  # (rdi, rsi) / (rcx, rdx)
FRAME_BASES = (4, 5)  # rsp, rbp
CALLER_SAVED = frozenset((0, 1, 2, 6, 7, 8, 9, 10, 11))


class SymKind(enum.Enum):
    THIS_PLUS = "this_plus"
    IMM = "imm"
    ARG2_PLUS = "arg2_plus"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class SymValue:
    kind: SymKind
    k: int = 0
    v: int = 0

    @staticmethod
    def this_plus(k: int) -> "SymValue":
        return SymValue(SymKind.THIS_PLUS, k=k)

    @staticmethod
    def imm(v: int) -> "SymValue":
        return SymValue(SymKind.IMM, v=v & MASK64)

    @staticmethod
    def arg2_plus(k: int) -> "SymValue":
        return SymValue(SymKind.ARG2_PLUS, k=k)

    @staticmethod
    def unknown() -> "SymValue":
        return SymValue(SymKind.UNKNOWN)

    def shifted(self, delta: int) -> "SymValue":
        if self.kind is SymKind.THIS_PLUS:
            return SymValue.this_plus(self.k + delta)
        if self.kind is SymKind.ARG2_PLUS:
            return SymValue.arg2_plus(self.k + delta)
        if self.kind is SymKind.IMM:
            return SymValue.imm(self.v + delta)
        return UNKNOWN

    def render(self) -> str:
        if self.kind is SymKind.THIS_PLUS:
            return f"this+{self.k:#x}" if self.k >= 0 else f"this-{-self.k:#x}"
        if self.kind is SymKind.ARG2_PLUS:
            return f"arg2+{self.k:#x}" if self.k >= 0 else f"arg2-{-self.k:#x}"
        if self.kind is SymKind.IMM:
            return f"{self.v:#x}"
        return "?"


UNKNOWN = SymValue.unknown()


@dataclass(frozen=True)
class CallRecord:
    site: int
    target: int | None
    arg1: SymValue
    arg2: SymValue


@dataclass
class CtorSummary:
    func: int
    vptr_writes: list[tuple[int, int]] = field(default_factory=list)
    vtt_args_seen: list[int] = field(default_factory=list)
    calls: list[CallRecord] = field(default_factory=list)
    is_special: bool = False
    partial: bool = False
    # MSVC lane: stores of known VB-Table addresses, as (object offset, table)
    vbt_writes: list[tuple[int, int]] = field(default_factory=list)


def _in_any_vtt(addr: int, vtts: list[Vtt]) -> bool:
    return any(v.base <= addr < v.end for v in vtts)


class _Tracker:
    """Register and frame-slot state for the single forward pass."""

    def __init__(self, img: BinaryImage):
        self.img = img
        arg1, arg2 = ARG_REGS[img.abi]
        self.arg1_reg = arg1
        self.arg2_reg = arg2
        self.regs: dict[int, SymValue] = {arg1: SymValue.this_plus(0), arg2: SymValue.arg2_plus(0)}
        self.slots: dict[tuple[int, int], SymValue] = {}
        self.vtt_derived: set[int] = set()
        self.vtt_slots: set[tuple[int, int]] = set()

    def reg(self, r: int | None) -> SymValue:
        if r is None:
            return UNKNOWN
        return self.regs.get(r, UNKNOWN)

    def set_reg(self, r: int, value: SymValue, *, vtt_derived: bool = False):
        self.regs[r] = value
        if vtt_derived:
            self.vtt_derived.add(r)
        else:
            self.vtt_derived.discard(r)

    def operand_value(self, op: Operand | None) -> SymValue:
        if op is None:
            return UNKNOWN
        if op.kind is OperandKind.IMMEDIATE:
            return SymValue.imm(op.imm)
        if op.kind is OperandKind.REGISTER:
            return self.reg(op.reg)
        return UNKNOWN

    def clobber_calls(self):
        for r in CALLER_SAVED:
            self.regs.pop(r, None)
            self.vtt_derived.discard(r)


def summarize(
    func: int,
    instrs: FunctionStream,
    img: BinaryImage,
    vtts: list[Vtt],
    address_points: frozenset[int] | set[int],
    vb_table_addrs: frozenset[int] | set[int] = frozenset(),
) -> CtorSummary:
    """Symbolically execute one straight-line body and record vptr writes,
    subVTT-address arguments, and every call with its hidden arguments."""
    summary = CtorSummary(func, partial=getattr(instrs, "partial", False))
    t = _Tracker(img)
    special_write = False

    for ins in instrs:
        if ins.op is Op.MOVE:
            if ins.dst is not None and ins.dst.kind is OperandKind.REGISTER:
                src_derived = (
                    ins.src is not None
                    and ins.src.kind is OperandKind.REGISTER
                    and ins.src.reg in t.vtt_derived
                )
                t.set_reg(ins.dst.reg, t.operand_value(ins.src), vtt_derived=src_derived)
        elif ins.op is Op.LOAD_EFFECTIVE:
            if ins.dst is None or ins.dst.kind is not OperandKind.REGISTER:
                continue
            if ins.src is not None and ins.src.kind is OperandKind.IMMEDIATE:
                t.set_reg(ins.dst.reg, SymValue.imm(ins.src.imm))
            elif ins.src is not None and ins.src.kind is OperandKind.MEMORY:
                base_val = t.reg(ins.src.mem_base)
                t.set_reg(ins.dst.reg, base_val.shifted(ins.src.mem_disp or 0))
            else:
                t.set_reg(ins.dst.reg, UNKNOWN)
        elif ins.op in (Op.ADD, Op.SUB):
            if ins.dst is None or ins.dst.kind is not OperandKind.REGISTER:
                continue
            sign = 1 if ins.op is Op.ADD else -1
            cur = t.reg(ins.dst.reg)
            src_val = t.operand_value(ins.src)
            if src_val.kind is SymKind.IMM:
                delta = src_val.v if src_val.v < (1 << 63) else src_val.v - (1 << 64)
                t.set_reg(ins.dst.reg, cur.shifted(sign * delta))
            elif cur.kind is SymKind.IMM and ins.op is Op.ADD:
                other = cur.v if cur.v < (1 << 63) else cur.v - (1 << 64)
                t.set_reg(ins.dst.reg, src_val.shifted(other))
            else:
                t.set_reg(ins.dst.reg, UNKNOWN)
        elif ins.op is Op.LOAD:
            if ins.dst is None or ins.dst.kind is not OperandKind.REGISTER:
                continue
            mem = ins.src
            if mem is None or mem.kind is not OperandKind.MEMORY:
                t.set_reg(ins.dst.reg, UNKNOWN)
                continue
            base = mem.mem_base
            disp = mem.mem_disp or 0
            if base == 16 or base is None:  # rip-resolved or absolute global
                target = disp & MASK64
                if target in img.got_map:
                    t.set_reg(ins.dst.reg, SymValue.imm(img.got_map[target]))
                else:
                    t.set_reg(ins.dst.reg, UNKNOWN)
                continue
            base_val = t.reg(base)
            if base_val.kind is SymKind.ARG2_PLUS:
                # value fetched out of the VTT the caller handed us
                t.set_reg(ins.dst.reg, UNKNOWN, vtt_derived=True)
            elif base in FRAME_BASES and base_val.kind is SymKind.UNKNOWN:
                slot_val = t.slots.get((base, disp), UNKNOWN)
                t.set_reg(ins.dst.reg, slot_val, vtt_derived=(base, disp) in t.vtt_slots)
            else:
                t.set_reg(ins.dst.reg, UNKNOWN)
        elif ins.op is Op.STORE:
            mem = ins.dst
            if mem is None or mem.kind is not OperandKind.MEMORY:
                continue
            base = mem.mem_base
            disp = mem.mem_disp or 0
            value = t.operand_value(ins.src)
            src_derived = (
                ins.src is not None
                and ins.src.kind is OperandKind.REGISTER
                and ins.src.reg in t.vtt_derived
            )
            base_val = t.reg(base) if base is not None else UNKNOWN
            if base_val.kind is SymKind.THIS_PLUS:
                offset = base_val.k + disp
                aligned = offset >= 0 and offset % img.word_size == 0
                if value.kind is SymKind.IMM and value.v in address_points:
                    if aligned:
                        summary.vptr_writes.append((offset, value.v))
                elif value.kind is SymKind.IMM and value.v in vb_table_addrs:
                    if aligned:
                        summary.vbt_writes.append((offset, value.v))
                elif src_derived:
                    special_write = True
            elif base in FRAME_BASES and base_val.kind is SymKind.UNKNOWN:
                t.slots[(base, disp)] = value
                if src_derived:
                    t.vtt_slots.add((base, disp))
                else:
                    t.vtt_slots.discard((base, disp))
        elif ins.op is Op.CALL:
            target = None
            if ins.src is not None and ins.src.kind is OperandKind.IMMEDIATE:
                target = ins.src.imm & MASK64
            arg1 = t.reg(t.arg1_reg)
            arg2 = t.reg(t.arg2_reg)
            if arg2.kind is SymKind.IMM and _in_any_vtt(arg2.v, vtts):
                summary.vtt_args_seen.append(arg2.v)
            summary.calls.append(CallRecord(ins.addr, target, arg1, arg2))
            t.clobber_calls()
        else:  # Op.OTHER
            if ins.dst is None:
                continue
            if ins.dst.kind is OperandKind.REGISTER:
                t.set_reg(ins.dst.reg, UNKNOWN)
            elif ins.dst.kind is OperandKind.MEMORY and ins.dst.mem_base in FRAME_BASES:
                t.slots.pop((ins.dst.mem_base, ins.dst.mem_disp or 0), None)
                t.vtt_slots.discard((ins.dst.mem_base, ins.dst.mem_disp or 0))

    summary.is_special = special_write and not summary.vptr_writes
    return summary


def identify_ctors(
    instrs: dict[int, FunctionStream],
    img: BinaryImage,
    vtts: list[Vtt],
    address_points: frozenset[int] | set[int],
    vb_table_addrs: frozenset[int] | set[int] = frozenset(),
) -> dict[int, CtorSummary]:
    """Functions that initialize at least one vptr from an immediate that
    is a known address point (regular or construction)."""
    out: dict[int, CtorSummary] = {}
    for func in sorted(instrs):
        summary = summarize(func, instrs[func], img, vtts, address_points, vb_table_addrs)
        if summary.vptr_writes:
            out[func] = summary
    return out
