"""Symbolic constructor summaries: tracking, seeding, clobbering."""

import random

from craft import Asm, make_image, _R
from virtrec.ctors import SymKind, SymValue, identify_ctors, summarize
from virtrec.disasm import decode_function
from virtrec.image import Abi
from virtrec.itanium import Vtt

AP = 0x403BD8  # pretend address point
VTT_BASE = 0x403C28


def _vtts():
    return [Vtt(VTT_BASE, (AP,) * 7, owner_vptr=AP)]


def _summary(build, *, aps=(AP,), vtts=None, abi=Abi.ITANIUM, extra_rodata=b""):
    a = Asm(0x1000)
    build(a)
    a.ret()
    img = make_image(
        text=bytes(a.code),
        text_base=0x1000,
        rodata=extra_rodata or bytes(64),
        rodata_base=0x403000,
        functions={0x1000, 0x2000, 0x2100},
        abi=abi,
    )
    stream = decode_function(img, 0x1000)
    return summarize(0x1000, stream, img, vtts if vtts is not None else [], frozenset(aps))


def test_empty_body_empty_summary():
    s = _summary(lambda a: None)
    assert s.vptr_writes == []
    assert s.calls == []
    assert s.vtt_args_seen == []
    assert not s.is_special


def test_frame_slot_roundtrip_preserves_this():
    # Listing-2 lines 1-5 shape: spill arg1, reload, offset, call
    def build(a):
        a.mov_store(_R["rbp"], -8, _R["rdi"])
        a.mov_load(_R["rax"], _R["rbp"], -8)
        a.add_ri(_R["rax"], 0x20)
        a.mov_rr(_R["rdi"], _R["rax"])
        a.call(0x2000)

    s = _summary(build)
    assert len(s.calls) == 1
    assert s.calls[0].arg1 == SymValue.this_plus(0x20)
    assert s.calls[0].target == 0x2000


def test_vtt_argument_seen():
    def build(a):
        a.lea_abs(_R["rdx"], VTT_BASE + 8)
        a.mov_rr(_R["rsi"], _R["rdx"])
        a.call(0x2000)

    s = _summary(build, vtts=_vtts())
    assert s.vtt_args_seen == [VTT_BASE + 8]
    assert s.calls[0].arg2 == SymValue.imm(VTT_BASE + 8)


def test_vptr_write_records_offset_and_target():
    def build(a):
        a.lea_abs(_R["rdx"], AP)
        a.mov_load(_R["rax"], _R["rbp"], -8)  # unknown -> slot default
        a.mov_store(_R["rbp"], -8, _R["rdi"])
        a.mov_load(_R["rax"], _R["rbp"], -8)
        a.mov_store(_R["rax"], 0x10, _R["rdx"])

    s = _summary(build)
    assert s.vptr_writes == [(0x10, AP)]


def test_store_immediate_vptr():
    def build(a):
        a.mov_store_imm(_R["rdi"], 0, AP)

    s = _summary(build)
    assert s.vptr_writes == [(0, AP)]


def test_special_ctor_detection():
    # B::B(this, vtt): store from a value loaded out of the VTT argument
    def build(a):
        a.mov_store(_R["rbp"], -8, _R["rdi"])
        a.mov_store(_R["rbp"], -0x10, _R["rsi"])
        a.mov_load(_R["rax"], _R["rbp"], -0x10)
        a.mov_load(_R["rdx"], _R["rax"], 0)  # fetch vptr from the VTT
        a.mov_load(_R["rax"], _R["rbp"], -8)
        a.mov_store(_R["rax"], 0, _R["rdx"])

    s = _summary(build)
    assert s.is_special
    assert s.vptr_writes == []


def test_arg2_relative_propagation():
    # D::D(this, vtt) passes vtt+8 onward
    def build(a):
        a.mov_store(_R["rbp"], -0x10, _R["rsi"])
        a.mov_load(_R["rdx"], _R["rbp"], -0x10)
        a.add_ri(_R["rdx"], 8)
        a.mov_rr(_R["rsi"], _R["rdx"])
        a.call(0x2000)

    s = _summary(build)
    assert s.calls[0].arg2 == SymValue.arg2_plus(8)


def test_calls_clobber_caller_saved_not_frame():
    def build(a):
        a.mov_store(_R["rbp"], -8, _R["rdi"])
        a.mov_rr(_R["rbx"], _R["rdi"])  # callee-saved survives
        a.call(0x2000)
        a.mov_rr(_R["rdi"], _R["rbx"])
        a.call(0x2100)

    s = _summary(build)
    assert s.calls[0].arg1 == SymValue.this_plus(0)
    assert s.calls[1].arg1 == SymValue.this_plus(0)


def test_caller_saved_lost_after_call():
    def build(a):
        a.mov_rr(_R["rax"], _R["rdi"])
        a.call(0x2000)
        a.mov_rr(_R["rdi"], _R["rax"])  # rax no longer known
        a.call(0x2100)

    s = _summary(build)
    assert s.calls[1].arg1.kind is SymKind.UNKNOWN


def test_msvc_argument_registers():
    def build(a):
        a.lea(_R["rcx"], _R["rcx"], 0x30)
        a.call(0x2000)

    s = _summary(build, abi=Abi.MSVC)
    assert s.calls[0].arg1 == SymValue.this_plus(0x30)


def test_identify_ctors_requires_vptr_store():
    a1 = Asm(0x1000)
    a1.mov_store_imm(_R["rdi"], 0, AP)
    a1.ret()
    a2 = Asm(0x1100)
    a2.mov_store_imm(_R["rdi"], 0, 0x1234)  # not an address point
    a2.ret()
    code = bytes(a1.code) + b"\x90" * (0x100 - len(a1.code)) + bytes(a2.code)
    img = make_image(text=code, text_base=0x1000, rodata=bytes(32), rodata_base=0x403000,
                     functions={0x1000, 0x1100})
    streams = {0x1000: decode_function(img, 0x1000), 0x1100: decode_function(img, 0x1100)}
    found = identify_ctors(streams, img, [], frozenset({AP}))
    assert set(found) == {0x1000}


# ---------------------------------------------------------------------------
# randomized differential check against a concrete emulator


class ConcreteMachine:
    """Executes the same subset concretely with known this/arg2 values and
    records every call's argument registers and every store."""

    CLOBBERED = (0, 1, 2, 6, 7, 8, 9, 10, 11)

    def __init__(self, this: int, arg2: int):
        self.regs = {_R["rdi"]: this, _R["rsi"]: arg2, _R["rbp"]: 0x7FFF0000}
        self.memory: dict[int, int] = {}
        self.call_args: list[tuple[int | None, int | None]] = []
        self.stores: list[tuple[int, int]] = []

    def run(self, stream):
        from virtrec.disasm import Op, OperandKind

        for ins in stream:
            if ins.op is Op.MOVE:
                if ins.dst is None or ins.dst.kind is not OperandKind.REGISTER:
                    continue
                if ins.src.kind is OperandKind.REGISTER:
                    self.regs[ins.dst.reg] = self.regs.get(ins.src.reg)
                else:
                    self.regs[ins.dst.reg] = ins.src.imm
            elif ins.op is Op.LOAD_EFFECTIVE:
                if ins.src.kind is OperandKind.IMMEDIATE:
                    self.regs[ins.dst.reg] = ins.src.imm
                else:
                    base = self.regs.get(ins.src.mem_base)
                    self.regs[ins.dst.reg] = (
                        None if base is None else base + (ins.src.mem_disp or 0)
                    )
            elif ins.op in (Op.ADD, Op.SUB):
                sign = 1 if ins.op is Op.ADD else -1
                cur = self.regs.get(ins.dst.reg)
                if ins.src.kind is OperandKind.IMMEDIATE:
                    delta = ins.src.imm
                else:
                    delta = self.regs.get(ins.src.reg)
                self.regs[ins.dst.reg] = (
                    None if cur is None or delta is None else cur + sign * delta
                )
            elif ins.op is Op.STORE:
                base = self.regs.get(ins.dst.mem_base)
                if base is None:
                    continue
                value = (
                    ins.src.imm
                    if ins.src.kind is OperandKind.IMMEDIATE
                    else self.regs.get(ins.src.reg)
                )
                addr = base + (ins.dst.mem_disp or 0)
                self.memory[addr] = value
                if value is not None:
                    self.stores.append((addr, value))
            elif ins.op is Op.LOAD:
                base = self.regs.get(ins.src.mem_base)
                if base is None:
                    self.regs[ins.dst.reg] = None
                else:
                    self.regs[ins.dst.reg] = self.memory.get(
                        base + (ins.src.mem_disp or 0)
                    )
            elif ins.op is Op.CALL:
                self.call_args.append(
                    (self.regs.get(_R["rdi"]), self.regs.get(_R["rsi"]))
                )
                for r in self.CLOBBERED:
                    self.regs[r] = None


def test_randomized_differential_no_wrong_values():
    """Symbolic claims must agree with concrete execution: whenever the
    tracker reports this+k, arg2+k, or an immediate at a call or a vptr
    write, the concrete machine saw exactly that value. Unknown is always
    permitted (degradation, never a wrong value)."""
    rng = random.Random(99)
    THIS, ARG2 = 0x70000000, VTT_BASE
    scratch = [_R[r] for r in ("rax", "rdx", "rcx", "rbx", "r8")]

    for round_no in range(150):
        a = Asm(0x1000)
        frame_slots = [-8, -16, -24]
        for _ in range(rng.randrange(3, 18)):
            choice = rng.randrange(9)
            if choice == 0:
                a.mov_store(_R["rbp"], rng.choice(frame_slots),
                            rng.choice(scratch + [_R["rdi"], _R["rsi"]]))
            elif choice == 1:
                a.mov_load(rng.choice(scratch), _R["rbp"], rng.choice(frame_slots))
            elif choice == 2:
                a.mov_rr(rng.choice(scratch + [_R["rdi"], _R["rsi"]]),
                         rng.choice(scratch + [_R["rdi"], _R["rsi"]]))
            elif choice == 3:
                a.add_ri(rng.choice(scratch), rng.randrange(0, 0x40, 8))
            elif choice == 4:
                a.sub_ri(rng.choice(scratch), rng.randrange(0, 0x40, 8))
            elif choice == 5:
                a.mov_ri64(rng.choice(scratch), rng.choice([AP, 0x12345, 0x50000]))
            elif choice == 6:
                a.lea(rng.choice(scratch), rng.choice(scratch), rng.randrange(0, 0x40, 8))
            elif choice == 7:
                a.mov_store(rng.choice(scratch), rng.randrange(0, 0x20, 8),
                            rng.choice(scratch))
            else:
                a.call(0x2000)
        a.ret()

        img = make_image(text=bytes(a.code), text_base=0x1000, rodata=bytes(32),
                         rodata_base=0x403000, functions={0x1000, 0x2000})
        stream = decode_function(img, 0x1000)
        summary = summarize(0x1000, stream, img, _vtts(), frozenset({AP}))

        machine = ConcreteMachine(THIS, ARG2)
        machine.run(stream)

        assert len(summary.calls) == len(machine.call_args)
        for record, (c1, c2) in zip(summary.calls, machine.call_args):
            for sym, concrete in ((record.arg1, c1), (record.arg2, c2)):
                if sym.kind is SymKind.THIS_PLUS:
                    assert concrete == THIS + sym.k, f"round {round_no}"
                elif sym.kind is SymKind.ARG2_PLUS:
                    assert concrete == ARG2 + sym.k, f"round {round_no}"
                elif sym.kind is SymKind.IMM:
                    assert concrete == sym.v, f"round {round_no}"
        for offset, value in summary.vptr_writes:
            assert (THIS + offset, value) in machine.stores, f"round {round_no}"
