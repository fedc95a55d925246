"""x86-64 subset decoder and textual-disassembly ingestion.

The built-in decoder covers the instruction vocabulary that constructor
bodies use at the studied optimization levels (mov/lea/add/sub/call/ret/
push/pop/jmp plus enough length knowledge to step over everything else).
Anything outside the subset becomes op=Other with a correct length where
the length is decodable; otherwise the linear sweep stops and the function
is marked partially decoded.

Width-blindness is deliberate: 32-bit forms decode to the same operations
as their 64-bit forms. Pointers only ever travel through full-width moves
in the supported compilers, so tracking cannot pick up a wrong value.
"""

from __future__ import annotations

import enum
import re
import struct
from dataclasses import dataclass

from .errors import GrammarError
from .image import BinaryImage, Section

MASK64 = (1 << 64) - 1

REG_NAMES = [
    "rax", "rcx", "rdx", "rbx", "rsp", "rbp", "rsi", "rdi",
    "r8", "r9", "r10", "r11", "r12", "r13", "r14", "r15",
]
RIP = 16
REG_IDS = {name: i for i, name in enumerate(REG_NAMES)}
REG_IDS["rip"] = RIP



class Op(enum.Enum):
    MOVE = "move"
    LOAD_EFFECTIVE = "lea"
    ADD = "add"
    SUB = "sub"
    CALL = "call"
    STORE = "store"
    LOAD = "load"
    OTHER = "other"


class OperandKind(enum.Enum):
    REGISTER = "reg"
    IMMEDIATE = "imm"
    MEMORY = "mem"


@dataclass(frozen=True)
class Operand:
    kind: OperandKind
    reg: int | None = None
    imm: int | None = None
    mem_base: int | None = None
    mem_disp: int | None = None

    @staticmethod
    def register(reg: int) -> "Operand":
        return Operand(OperandKind.REGISTER, reg=reg)

    @staticmethod
    def immediate(value: int) -> "Operand":
        return Operand(OperandKind.IMMEDIATE, imm=value)

    @staticmethod
    def memory(base: int | None, disp: int) -> "Operand":
        return Operand(OperandKind.MEMORY, mem_base=base, mem_disp=disp)

    def render(self) -> str:
        if self.kind is OperandKind.REGISTER:
            return "rip" if self.reg == RIP else REG_NAMES[self.reg]
        if self.kind is OperandKind.IMMEDIATE:
            v = self.imm
            return f"-{-v:#x}" if v < 0 else f"{v:#x}"
        base = "" if self.mem_base is None else ("rip" if self.mem_base == RIP else REG_NAMES[self.mem_base])
        d = self.mem_disp or 0
        if not base:
            return f"[{d:#x}]"
        if d == 0:
            return f"[{base}]"
        return f"[{base}+{d:#x}]" if d > 0 else f"[{base}-{-d:#x}]"


@dataclass(frozen=True)
class NormInstr:
    addr: int
    op: Op
    dst: Operand | None
    src: Operand | None
    raw_len: int


class FunctionStream(list):
    """Instruction list for one function; `partial` marks a decode stall."""

    def __init__(self, items=(), partial: bool = False):
        super().__init__(items)
        self.partial = partial


# ---------------------------------------------------------------------------
# length/semantic decoding


class _Stall(Exception):
    pass


_NO_MODRM_SIMPLE = {
    0x90, 0xC3, 0xC9, 0xCC, 0xF4, 0x98, 0x99, 0xF5, 0xFC, 0xFD, 0xC2,
}
# one-byte ALU opcode families 00-3B: (op & 7) in 0..3 take modrm
_ALU_NO_WRITE = {0x38, 0x39, 0x3A, 0x3B, 0x84, 0x85}
_TWO_BYTE_MODRM = {
    0x10, 0x11, 0x12, 0x13, 0x14, 0x15, 0x16, 0x17, 0x28, 0x29, 0x2A, 0x2B,
    0x2E, 0x2F, 0x1E, 0x1F, 0x40, 0x41, 0x42, 0x43, 0x44, 0x45, 0x46, 0x47,
    0x48, 0x49, 0x4A, 0x4B, 0x4C, 0x4D, 0x4E, 0x4F, 0x51, 0x54, 0x57, 0x58,
    0x59, 0x5C, 0x5E, 0x6E, 0x6F, 0x7E, 0x7F, 0x90, 0x91, 0x92, 0x93, 0x94,
    0x95, 0x96, 0x97, 0x98, 0x99, 0x9A, 0x9B, 0x9C, 0x9D, 0x9E, 0x9F, 0xAF,
    0xB0, 0xB1, 0xB6, 0xB7, 0xBE, 0xBF, 0xC0, 0xC1, 0xD6, 0xEF,
}
_TWO_BYTE_NONE = {0x05, 0x0B, 0x31, 0xA2, 0x77}


def _read(data: bytes, pos: int, n: int) -> bytes:
    if pos + n > len(data):
        raise _Stall()
    return data[pos : pos + n]


def _modrm_len(data: bytes, pos: int) -> tuple[int, int, int, int | None, int | None]:
    """Parse modrm(+sib+disp); returns (length, mod, reg, base, disp).

    base/disp describe the memory operand when mod != 3 (base None means
    RIP-relative or absolute; disp carries the raw displacement)."""
    modrm = _read(data, pos, 1)[0]
    mod, reg, rm = modrm >> 6, (modrm >> 3) & 7, modrm & 7
    length = 1
    base: int | None = rm
    disp = 0
    if mod == 3:
        return length, mod, reg, rm, None
    if rm == 4:  # SIB
        sib = _read(data, pos + length, 1)[0]
        length += 1
        sib_base = sib & 7
        sib_index = (sib >> 3) & 7
        if sib_index != 4:
            base = -1  # scaled index: too complex to track, length still right
        elif mod == 0 and sib_base == 5:
            base = None  # absolute disp32
        else:
            base = sib_base
        if mod == 0 and sib_base == 5:
            disp = struct.unpack("<i", _read(data, pos + length, 4))[0]
            length += 4
    elif mod == 0 and rm == 5:
        base = RIP
        disp = struct.unpack("<i", _read(data, pos + length, 4))[0]
        length += 4
    if mod == 1:
        disp = struct.unpack("<b", _read(data, pos + length, 1))[0]
        length += 1
    elif mod == 2:
        disp = struct.unpack("<i", _read(data, pos + length, 4))[0]
        length += 4
    return length, mod, reg, base, disp


@dataclass
class _Decoded:
    instr: NormInstr
    flow: str  # "fall" | "stop" | "jmp"
    jmp_target: int | None = None


def _decode_one(data: bytes, offset: int, addr: int) -> _Decoded:
    """Decode a single instruction at data[offset] (virtual address addr)."""
    pos = offset
    rex = 0
    # prefixes
    while True:
        b = _read(data, pos, 1)[0]
        if 0x40 <= b <= 0x4F:
            rex = b
            pos += 1
        elif b in (0x66, 0x67, 0xF2, 0xF3, 0x2E, 0x3E, 0x26, 0x36, 0x64, 0x65):
            pos += 1
        else:
            break
    rex_w = bool(rex & 8)
    rex_r = (rex & 4) << 1
    rex_b = (rex & 1) << 3
    op = _read(data, pos, 1)[0]
    pos += 1

    def fin(kind: Op, dst, src, flow="fall", target=None) -> _Decoded:
        return _Decoded(
            NormInstr(addr, kind, dst, src, pos - offset), flow, target
        )

    def mem_or_reg(mod, base, disp, rip_next) -> Operand | None:
        if mod == 3:
            return Operand.register(base + rex_b)
        if base == RIP:
            return Operand.memory(RIP, rip_next + disp)
        if base is None:
            return Operand.memory(None, disp)
        if base == -1:
            return None
        return Operand.memory(base + rex_b, disp)

    # --- no-modrm space
    if op in _NO_MODRM_SIMPLE:
        if op == 0xC2:
            pos += 2
        stop = op in (0xC3, 0xC2, 0xCC, 0xF4)
        return fin(Op.OTHER, None, None, "stop" if stop else "fall")
    if 0x50 <= op <= 0x57:  # push: reads its register only
        return fin(Op.OTHER, None, None)
    if 0x58 <= op <= 0x5F:  # pop: clobbers its register
        return fin(Op.OTHER, Operand.register(op - 0x58 + rex_b), None)
    if 0x91 <= op <= 0x97:
        return fin(Op.OTHER, Operand.register(op - 0x90 + rex_b), None)
    if 0xB0 <= op <= 0xB7:
        pos += 1
        return fin(Op.OTHER, None, None)
    if 0xB8 <= op <= 0xBF:
        reg = op - 0xB8 + rex_b
        if rex_w:
            imm = struct.unpack("<Q", _read(data, pos, 8))[0]
            pos += 8
        else:
            imm = struct.unpack("<I", _read(data, pos, 4))[0]
            pos += 4
        return fin(Op.MOVE, Operand.register(reg), Operand.immediate(imm))
    if op == 0xE8:
        rel = struct.unpack("<i", _read(data, pos, 4))[0]
        pos += 4
        return fin(Op.CALL, None, Operand.immediate((addr + (pos - offset) + rel) & MASK64))
    if op == 0xE9:
        rel = struct.unpack("<i", _read(data, pos, 4))[0]
        pos += 4
        return fin(Op.OTHER, None, None, "jmp", (addr + (pos - offset) + rel) & MASK64)
    if op == 0xEB:
        rel = struct.unpack("<b", _read(data, pos, 1))[0]
        pos += 1
        return fin(Op.OTHER, None, None, "jmp", (addr + (pos - offset) + rel) & MASK64)
    if 0x70 <= op <= 0x7F:
        pos += 1
        return fin(Op.OTHER, None, None)
    if op in (0xA8,):
        pos += 1
        return fin(Op.OTHER, None, None)
    if op in (0xA9, 0x68):
        pos += 4
        return fin(Op.OTHER, None, None)
    if op == 0x6A:
        pos += 1
        return fin(Op.OTHER, None, None)
    if op < 0x40 and (op & 7) in (4, 5):  # ALU al/eax, imm forms
        pos += 1 if (op & 7) == 4 else 4
        return fin(Op.OTHER, None if (op & 0x38) == 0x38 else Operand.register(0), None)
    if op in (0x84, 0x85):  # test r/m, r: reads only
        mlen, _, _, _, _ = _modrm_len(data, pos)
        pos += mlen
        return fin(Op.OTHER, None, None)

    # --- two-byte space
    if op == 0x0F:
        op2 = _read(data, pos, 1)[0]
        pos += 1
        if op2 in _TWO_BYTE_NONE:
            return fin(Op.OTHER, None, None)
        if 0x80 <= op2 <= 0x8F:
            pos += 4
            return fin(Op.OTHER, None, None)
        if op2 in _TWO_BYTE_MODRM:
            mlen, mod, reg, base, disp = _modrm_len(data, pos)
            pos += mlen
            dst = None
            if op2 in (0xB6, 0xB7, 0xBE, 0xBF, 0xAF, 0x6E, 0x7E):
                dst = Operand.register(reg + rex_r)
            return fin(Op.OTHER, dst, None)
        raise _Stall()

    # --- modrm ALU/mov space
    if op < 0x40 and (op & 7) <= 3 and (op & ~0x38) in (0x00, 0x01, 0x02, 0x03, 0x08, 0x09, 0x0A, 0x0B):
        mlen, mod, reg, base, disp = _modrm_len(data, pos)
        rip_next = addr + (pos - offset) + mlen
        pos += mlen
        rm_op = mem_or_reg(mod, base, disp, rip_next)
        reg_op = Operand.register(reg + rex_r)
        direction_rm_dst = (op & 2) == 0
        dst, src = (rm_op, reg_op) if direction_rm_dst else (reg_op, rm_op)
        family = op & 0x38
        if op in _ALU_NO_WRITE:
            return fin(Op.OTHER, None, None)
        if family == 0x00 and mod == 3:  # add r, r
            return fin(Op.ADD, dst, src)
        if family == 0x28 and mod == 3:  # sub r, r
            return fin(Op.SUB, dst, src)
        return fin(Op.OTHER, dst, None)

    if op in (0x88, 0x89, 0x8A, 0x8B):
        mlen, mod, reg, base, disp = _modrm_len(data, pos)
        rip_next = addr + (pos - offset) + mlen
        pos += mlen
        rm_op = mem_or_reg(mod, base, disp, rip_next)
        reg_op = Operand.register(reg + rex_r)
        to_rm = op in (0x88, 0x89)
        if rm_op is None:
            return fin(Op.OTHER, None if to_rm else reg_op, None)
        if mod == 3:
            dst, src = (rm_op, reg_op) if to_rm else (reg_op, rm_op)
            return fin(Op.MOVE, dst, src)
        if to_rm:
            return fin(Op.STORE, rm_op, reg_op)
        return fin(Op.LOAD, reg_op, rm_op)

    if op == 0x8D:  # lea
        mlen, mod, reg, base, disp = _modrm_len(data, pos)
        rip_next = addr + (pos - offset) + mlen
        pos += mlen
        dst = Operand.register(reg + rex_r)
        if mod == 3:
            return fin(Op.OTHER, dst, None)
        if base == RIP:
            return fin(Op.LOAD_EFFECTIVE, dst, Operand.immediate((rip_next + disp) & MASK64))
        if base is None:
            return fin(Op.LOAD_EFFECTIVE, dst, Operand.immediate(disp & MASK64))
        if base == -1:
            return fin(Op.OTHER, dst, None)
        return fin(Op.LOAD_EFFECTIVE, dst, Operand.memory(base + rex_b, disp))

    if op in (0x80, 0x81, 0x83, 0xC0, 0xC1, 0xC6, 0xC7, 0x69, 0x6B, 0x63):
        mlen, mod, reg, base, disp = _modrm_len(data, pos)
        rip_next_base = addr + (pos - offset) + mlen
        imm_size = {
            0x80: 1, 0x81: 4, 0x83: 1, 0xC0: 1, 0xC1: 1,
            0xC6: 1, 0xC7: 4, 0x69: 4, 0x6B: 1, 0x63: 0,
        }[op]
        rip_next = rip_next_base + imm_size
        pos += mlen
        rm_op = mem_or_reg(mod, base, disp, rip_next)
        imm = 0
        if imm_size == 1:
            imm = struct.unpack("<b", _read(data, pos, 1))[0]
            pos += 1
        elif imm_size == 4:
            imm = struct.unpack("<i", _read(data, pos, 4))[0]
            pos += 4
        if op in (0x81, 0x83) and rm_op is not None:
            if reg == 0 and rm_op.kind is OperandKind.REGISTER:
                return fin(Op.ADD, rm_op, Operand.immediate(imm))
            if reg == 5 and rm_op.kind is OperandKind.REGISTER:
                return fin(Op.SUB, rm_op, Operand.immediate(imm))
            if reg == 7:  # cmp: no write
                return fin(Op.OTHER, None, None)
            return fin(Op.OTHER, rm_op, None)
        if op == 0xC7 and rm_op is not None:
            if mod == 3:
                return fin(Op.MOVE, rm_op, Operand.immediate(imm))
            return fin(Op.STORE, rm_op, Operand.immediate(imm))
        if op == 0xC6 and rm_op is not None and rm_op.kind is OperandKind.MEMORY:
            return fin(Op.STORE, rm_op, Operand.immediate(imm))
        if op in (0x69, 0x6B, 0x63):
            return fin(Op.OTHER, Operand.register(reg + rex_r), None)
        if op == 0x80 and reg == 7:
            return fin(Op.OTHER, None, None)
        return fin(Op.OTHER, rm_op, None)

    if op in (0x86, 0x87):
        mlen, mod, reg, base, disp = _modrm_len(data, pos)
        pos += mlen
        rm_op = mem_or_reg(mod, base, disp, addr + (pos - offset))
        return fin(Op.OTHER, rm_op, None)

    if op in (0xF6, 0xF7):
        mlen, mod, reg, base, disp = _modrm_len(data, pos)
        pos += mlen
        if reg in (0, 1):  # test r/m, imm
            pos += 1 if op == 0xF6 else 4
            return fin(Op.OTHER, None, None)
        rm_op = mem_or_reg(mod, base, disp, addr + (pos - offset))
        return fin(Op.OTHER, rm_op, None)

    if op == 0xFE:
        mlen, mod, reg, base, disp = _modrm_len(data, pos)
        pos += mlen
        return fin(Op.OTHER, mem_or_reg(mod, base, disp, addr + (pos - offset)), None)

    if op == 0xFF:
        mlen, mod, reg, base, disp = _modrm_len(data, pos)
        rip_next = addr + (pos - offset) + mlen
        pos += mlen
        rm_op = mem_or_reg(mod, base, disp, rip_next)
        if reg == 2 or reg == 3:  # indirect call
            return fin(Op.CALL, None, rm_op if rm_op is not None else Operand.memory(None, 0))
        if reg in (4, 5):  # indirect jmp: leaves the function
            return fin(Op.OTHER, None, None, "stop")
        if reg == 6:  # push r/m
            return fin(Op.OTHER, None, None)
        return fin(Op.OTHER, rm_op, None)

    if op == 0x8F:
        mlen, mod, reg, base, disp = _modrm_len(data, pos)
        pos += mlen
        return fin(Op.OTHER, mem_or_reg(mod, base, disp, addr + (pos - offset)), None)

    raise _Stall()


_SWEEP_CAP = 0x20000


def decode_function(img: BinaryImage, start: int) -> FunctionStream:
    """Linear-sweep decode from `start` until return, jump-out, or stall."""
    sec = img.section_at(start)
    if sec is None:
        return FunctionStream([], partial=True)
    data = sec.data
    offset = start - sec.base
    out = FunctionStream()
    limit = min(len(data), offset + _SWEEP_CAP)
    while offset < limit:
        addr = sec.base + offset
        try:
            decoded = _decode_one(data, offset, addr)
        except _Stall:
            out.partial = True
            break
        out.append(decoded.instr)
        offset += decoded.instr.raw_len
        if decoded.flow == "stop":
            break
        if decoded.flow == "jmp":
            target = decoded.jmp_target
            # forward jumps stay inside the body; anything else leaves it
            if target is None or target <= addr or not sec.contains(target):
                break
    return out


def decode_image(img: BinaryImage) -> dict[int, FunctionStream]:
    """Decode every known entry function; keys sorted by address."""
    return {start: decode_function(img, start) for start in sorted(img.entry_functions)}


# ---------------------------------------------------------------------------
# textual ingestion / emission

_FN_RE = re.compile(r"^fn ([0-9a-fA-F]+)$")
_END_RE = re.compile(r"^end ([0-9a-fA-F]+)$")
_LINE_RE = re.compile(r"^([0-9a-fA-F]+):\s+(\S+)(?:\s+(.*))?$")
_MEM_RE = re.compile(r"^\[([a-z][a-z0-9]*)(?:([+-])0x([0-9a-fA-F]+))?\]$")
_MEM_ABS_RE = re.compile(r"^\[0x([0-9a-fA-F]+)\]$")
_IMM_RE = re.compile(r"^(-?)0x([0-9a-fA-F]+)$")


def _parse_operand(text: str) -> Operand | None:
    text = text.strip()
    if text in REG_IDS:
        return Operand.register(REG_IDS[text])
    m = _IMM_RE.match(text)
    if m:
        value = int(m.group(2), 16)
        return Operand.immediate(-value if m.group(1) else value)
    m = _MEM_ABS_RE.match(text)
    if m:
        return Operand.memory(None, int(m.group(1), 16))
    m = _MEM_RE.match(text)
    if m and m.group(1) in REG_IDS:
        disp = 0
        if m.group(3):
            disp = int(m.group(3), 16)
            if m.group(2) == "-":
                disp = -disp
        return Operand.memory(REG_IDS[m.group(1)], disp)
    return None


def _classify_text_op(mnemonic: str, dst: Operand | None, src: Operand | None) -> Op:
    if mnemonic == "mov":
        if dst is not None and dst.kind is OperandKind.MEMORY:
            return Op.STORE
        if src is not None and src.kind is OperandKind.MEMORY:
            return Op.LOAD
        return Op.MOVE
    return {
        "lea": Op.LOAD_EFFECTIVE,
        "add": Op.ADD,
        "sub": Op.SUB,
        "call": Op.CALL,
        "store": Op.STORE,
        "load": Op.LOAD,
    }.get(mnemonic, Op.OTHER)


def ingest_text_disasm(
    listing: str, img: BinaryImage | None = None, *, strict: bool = False
) -> dict[int, FunctionStream]:
    """Parse `fn HEXADDR` / `HEXADDR: MNEMONIC DST, SRC` listings.

    Unparseable instruction lines become op=Other; in strict mode they
    raise GrammarError with the offending line number."""
    functions: dict[int, FunctionStream] = {}
    current: FunctionStream | None = None
    pending: list[NormInstr] = []

    def flush_lengths(end_addr: int | None):
        if current is None:
            return
        for i, ins in enumerate(pending):
            if i + 1 < len(pending):
                length = pending[i + 1].addr - ins.addr
            elif end_addr is not None:
                length = end_addr - ins.addr
            else:
                length = ins.raw_len
            current.append(
                NormInstr(ins.addr, ins.op, ins.dst, ins.src, max(length, 0))
            )
        pending.clear()

    for line_no, raw_line in enumerate(listing.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        m = _FN_RE.match(line)
        if m:
            flush_lengths(None)
            current = FunctionStream()
            functions[int(m.group(1), 16)] = current
            continue
        m = _END_RE.match(line)
        if m:
            flush_lengths(int(m.group(1), 16))
            continue
        m = _LINE_RE.match(line)
        if not m:
            if strict:
                raise GrammarError(line_no, raw_line)
            continue
        if current is None:
            if strict:
                raise GrammarError(line_no, raw_line)
            continue
        addr = int(m.group(1), 16)
        mnemonic = m.group(2).lower()
        operands = []
        ok = True
        if m.group(3):
            for part in m.group(3).split(","):
                parsed = _parse_operand(part)
                if parsed is None:
                    ok = False
                    break
                operands.append(parsed)
        if not ok:
            if strict:
                raise GrammarError(line_no, raw_line)
            pending.append(NormInstr(addr, Op.OTHER, None, None, 0))
            continue
        dst = operands[0] if len(operands) > 0 else None
        src = operands[1] if len(operands) > 1 else None
        if mnemonic in ("call", "push", "jmp") and len(operands) == 1:
            dst, src = None, operands[0]
        op = _classify_text_op(mnemonic, dst, src)
        if op is Op.OTHER and mnemonic not in ("ret", "nop", "push", "pop", "jmp", "other", "endbr64", "leave"):
            if strict:
                raise GrammarError(line_no, raw_line)
        pending.append(NormInstr(addr, op, dst, src, 0))
    flush_lengths(None)
    return functions


_MNEMONICS = {
    Op.MOVE: "mov",
    Op.LOAD_EFFECTIVE: "lea",
    Op.ADD: "add",
    Op.SUB: "sub",
    Op.CALL: "call",
    Op.STORE: "mov",
    Op.LOAD: "mov",
    Op.OTHER: "other",
}


def emit_text_disasm(functions: dict[int, FunctionStream]) -> str:
    """Render decoded streams in the ingestion grammar (round-trippable)."""
    lines: list[str] = []
    for start in sorted(functions):
        stream = functions[start]
        lines.append(f"fn {start:x}")
        last_end = start
        for ins in stream:
            parts = [f"{ins.addr:x}:", _MNEMONICS[ins.op]]
            ops = [o.render() for o in (ins.dst, ins.src) if o is not None]
            if ops:
                parts.append(" " + ", ".join(ops))
                lines.append(parts[0] + " " + parts[1] + parts[2])
            else:
                lines.append(parts[0] + " " + parts[1])
            last_end = ins.addr + ins.raw_len
        lines.append(f"end {last_end:x}")
    return "\n".join(lines) + "\n"
