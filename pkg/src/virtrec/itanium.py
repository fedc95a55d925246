"""Itanium-ABI metadata recovery: VTables, VTTs, subVTTs, vbase offsets,
and the construction-to-regular vtable mapping.

Address points are validated structurally (function-pointer slot, typeinfo
slot, offset-to-top slot) and complete-object vtables are grouped by the
primary/secondary offset-to-top sign convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .disasm import MASK64, FunctionStream, OperandKind
from .errors import NoPrimaryFound
from .image import Abi, BinaryImage


@dataclass(eq=False)
class SubVTable:
    address_point: int
    offset_to_top: int
    rtti_slot: int
    fn_ptrs: tuple[int, ...]
    vbase_offsets: list[int] = field(default_factory=list)
    vcall_region_present: bool = False

    @property
    def is_primary(self) -> bool:
        return self.offset_to_top == 0


@dataclass(eq=False)
class VTableGroup:
    primary: SubVTable
    secondaries: tuple[SubVTable, ...]
    is_construction: bool = False
    orphan_standin: bool = False

    @property
    def id(self) -> int:
        return self.primary.address_point

    @property
    def subs(self) -> tuple[SubVTable, ...]:
        return (self.primary, *self.secondaries)

    @property
    def group_key(self) -> tuple[int, ...]:
        return tuple(fp for sub in self.subs for fp in sub.fn_ptrs)

    @property
    def fn_ptr_sum(self) -> int:
        return sum(self.group_key) & MASK64

    @property
    def vbase_offsets(self) -> list[int]:
        out = []
        for sub in self.subs:
            out.extend(sub.vbase_offsets)
        return out


@dataclass(eq=False)
class SubVtt:
    start: int
    primary_vptr: int
    member_vptrs: list[int]
    slot_addrs: list[int]
    is_construction: bool = False


@dataclass(eq=False)
class Vtt:
    base: int
    entries: tuple[int, ...]
    owner_vptr: int
    sub_vtts: list[SubVtt] = field(default_factory=list)

    @property
    def end(self) -> int:
        return self.base + len(self.entries) * 8

    def slot_addr(self, index: int) -> int:
        return self.base + index * 8


def validate_vptr(img: BinaryImage, addr: int) -> int | None:
    """Apply the three address-point conditions; returns the signed
    offset-to-top on success, None otherwise."""
    if addr % img.word_size:
        return None
    w = img.try_read_word(addr)
    if w is None or not img.is_function_start(w):
        return None
    above = img.try_read_word(addr - img.word_size)
    if above is None or (above != 0 and not img.in_data(above)):
        return None
    ott = img.try_read_word(addr - 2 * img.word_size, signed=True)
    if ott is None or ott > 0:
        return None
    return ott


def collect_candidates(img: BinaryImage, instrs: dict[int, FunctionStream]) -> set[int]:
    """Candidate vptr addresses: every word-aligned slot of the scannable
    read-only data plus text immediates into any data section (one GOT hop)."""
    W = img.word_size
    candidates: set[int] = set()
    for sec in img.scannable_data_sections():
        start = sec.base + (-sec.base % W)
        candidates.update(range(start, sec.end, W))
    for stream in instrs.values():
        for ins in stream:
            for operand in (ins.src, ins.dst):
                if operand is None:
                    continue
                if operand.kind is OperandKind.IMMEDIATE:
                    ref = operand.imm & MASK64
                elif operand.kind is OperandKind.MEMORY and operand.mem_base in (16, None):
                    ref = (operand.mem_disp or 0) & MASK64
                else:
                    continue
                if ref in img.got_map:
                    ref = img.resolve_got(ref)
                    if ref in img.got_map:  # deeper chains rejected
                        continue
                if img.in_data(ref) and ref % W == 0:
                    candidates.add(ref)
    return candidates


def find_vtables(img: BinaryImage, instrs: dict[int, FunctionStream]) -> list[VTableGroup]:
    """Validate candidates and group sorted vptrs into complete-object
    vtables; returns groups sorted by primary address point."""
    W = img.word_size
    msvc = img.abi is Abi.MSVC
    valid: dict[int, int] = {}
    for addr in collect_candidates(img, instrs):
        ott = validate_vptr_for_abi(img, addr, msvc)
        if ott is not None:
            valid[addr] = ott

    ordered = sorted(valid)
    next_ap = {ap: ordered[i + 1] for i, ap in enumerate(ordered[:-1])}
    groups: list[VTableGroup] = []
    current: list[tuple[int, int]] | None = None

    def close(block: list[tuple[int, int]]):
        subs = [_build_sub(img, ap, ott, next_ap.get(ap)) for ap, ott in block]
        groups.append(VTableGroup(primary=subs[0], secondaries=tuple(subs[1:])))

    for ap in ordered:
        ott = valid[ap]
        if ott == 0 or msvc:
            if current:
                close(current)
            current = [(ap, ott)]
        elif current is not None:
            current.append((ap, ott))
        # leading secondaries with no open group are dropped
    if current:
        close(current)
    return groups


def _build_sub(img: BinaryImage, ap: int, ott: int, next_ap: int | None) -> SubVTable:
    """Function pointers extend until a word fails validation or the scan
    reaches the next candidate's offset-to-top slot, whichever is earlier."""
    W = img.word_size
    rtti = img.try_read_word(ap - W) or 0
    bound = None if next_ap is None else next_ap - 2 * W
    fns: list[int] = []
    cur = ap
    while bound is None or cur < bound:
        w = img.try_read_word(cur)
        if w is None or not img.is_function_start(w):
            break
        fns.append(w)
        cur += W
    return SubVTable(ap, ott, rtti, tuple(fns))


def validate_vptr_for_abi(img: BinaryImage, addr: int, msvc: bool) -> int | None:
    """MSVC vtables lack the offset-to-top slot; the relaxed rule drops
    condition (c) and treats every vtable as primary."""
    if not msvc:
        return validate_vptr(img, addr)
    if addr % img.word_size:
        return None
    w = img.try_read_word(addr)
    if w is None or not img.is_function_start(w):
        return None
    above = img.try_read_word(addr - img.word_size)
    if above is None or (above != 0 and not img.in_data(above)):
        return None
    return 0


def find_vtts(
    img: BinaryImage,
    vtables: list[VTableGroup],
    *,
    prose_boundary: bool = True,
) -> list[Vtt]:
    """Scan read-only data for arrays of known address points (length > 1),
    splitting contiguous VTTs by the boundary rules."""
    W = img.word_size
    ap_set = {sub.address_point for g in vtables for sub in g.subs}
    vtts: list[Vtt] = []
    for sec in img.scannable_data_sections():
        addr = sec.base + (-sec.base % W)
        while addr + W <= sec.end:
            entries = _vtt_run(img, addr, ap_set, prose_boundary)
            if len(entries) > 1:
                vtts.append(Vtt(addr, tuple(entries), owner_vptr=entries[0]))
                addr += len(entries) * W
            else:
                addr += W
    return vtts


def _vtt_run(
    img: BinaryImage, base: int, ap_set: set[int], prose_boundary: bool
) -> list[int]:
    W = img.word_size
    first = img.try_read_word(base)
    if first is None or first not in ap_set:
        return []
    entries = [first]
    second: int | None = None
    in_tail = False
    addr = base + W
    while True:
        w = img.try_read_word(addr)
        if w is None or w not in ap_set:
            break
        if second is not None and second > first:
            # Classic layout (owner's vtable below its construction
            # vtables): an entry under the first target opens the next VTT.
            if w < first:
                break
            if prose_boundary:
                # Once the run has descended into the owner's trailing
                # secondary pointers (below the first construction entry),
                # any later rise above that entry belongs to the next VTT.
                if in_tail and w > second:
                    break
                if first < w < second:
                    in_tail = True
        # Descending layout (owner's vtable emitted above the construction
        # vtables, seen at higher optimization levels): no ordering rule
        # applies; the next vtable or typeinfo header ends the run.
        entries.append(w)
        if second is None:
            second = w
        addr += W
    return entries


def group_subvtts(vtt: Vtt, vtables: list[VTableGroup]) -> list[SubVtt]:
    """Partition a VTT's entries into subVTTs by offset-to-top sign; the
    subVTT holding the VTT's first entry is the regular one."""
    ap_map = {sub.address_point: sub for g in vtables for sub in g.subs}
    pairs = sorted(
        ((target, vtt.slot_addr(i)) for i, target in enumerate(vtt.entries)),
        key=lambda p: (p[0], p[1]),
    )
    subvtts: list[SubVtt] = []
    current: SubVtt | None = None
    for target, slot in pairs:
        sub = ap_map.get(target)
        if sub is None:
            continue
        if sub.offset_to_top == 0:
            current = SubVtt(slot, target, [target], [slot])
            subvtts.append(current)
        elif current is not None:
            current.member_vptrs.append(target)
            current.slot_addrs.append(slot)
            current.start = min(current.start, slot)
        # leading secondaries before any primary are skipped
    if not subvtts:
        raise NoPrimaryFound(f"VTT at {vtt.base:#x} has no primary entry")
    for sv in subvtts:
        sv.is_construction = vtt.entries[0] not in sv.member_vptrs
    subvtts.sort(key=lambda sv: sv.start)
    return subvtts


@dataclass
class VbaseExtraction:
    """Outcome of the offset walk over one subVTT."""

    primary_matches: list[int]
    per_member: dict[int, list[int]]  # member ap -> offsets recorded from it
    virtual_members: set[int]  # member aps confirmed as virtual-base subobjects

    @property
    def valid(self) -> bool:
        return len(self.primary_matches) > 0

    def group_offsets(self) -> list[int]:
        out: list[int] = []
        for ap in sorted(self.per_member):
            out.extend(self.per_member[ap])
        return out


def extract_vbase_offsets(
    img: BinaryImage, subvtt: SubVtt, vtables: list[VTableGroup]
) -> VbaseExtraction:
    """Walk candidate vbase-offset slots above each member's address point,
    keeping a value only when it matches the offset-to-top of a later member
    and its negation is an offset-to-top present in the subVTT (the duality
    every recorded offset must satisfy)."""
    W = img.word_size
    ap_map = {sub.address_point: sub for g in vtables for sub in g.subs}
    members = [ap_map[ap] for ap in subvtt.member_vptrs if ap in ap_map]
    all_otts = {m.offset_to_top for m in members}
    result = VbaseExtraction([], {}, set())
    for j, member in enumerate(members):
        cur = member.address_point - 3 * W
        recorded: list[int] = []
        for i in range(j + 1, len(members)):
            other = members[i]
            vbo = img.try_read_word(cur, signed=True)
            if vbo is None:
                break
            expected = member.offset_to_top - other.offset_to_top
            if vbo == expected and vbo > 0 and -vbo in all_otts:
                recorded.append(vbo)
                result.virtual_members.add(other.address_point)
                cur -= W
        if recorded:
            result.per_member[member.address_point] = recorded
        if j == 0:
            result.primary_matches = list(recorded)
    # vcall-offset signature: a zero-or-negative word sits above a confirmed
    # virtual base's own header; values are detected, never interpreted.
    for member in members:
        if member.address_point in result.virtual_members:
            above = img.try_read_word(member.address_point - 3 * W, signed=True)
            if above is not None and above <= 0:
                member.vcall_region_present = True
    return result


def apply_vbase_extraction(
    img: BinaryImage, vtts: list[Vtt], vtables: list[VTableGroup]
) -> tuple[list[Vtt], list[str]]:
    """Run the offset walk over every subVTT; discard VTTs with no valid
    subVTT and clear whatever they contributed. Returns surviving VTTs."""
    ap_map = {sub.address_point: sub for g in vtables for sub in g.subs}
    kept: list[Vtt] = []
    errors: list[str] = []
    for vtt in vtts:
        extractions = []
        any_valid = False
        for sv in vtt.sub_vtts:
            ext = extract_vbase_offsets(img, sv, vtables)
            extractions.append((sv, ext))
            if ext.valid:
                any_valid = True
        if not any_valid:
            errors.append(
                f"vtt {vtt.base:#x}: no subVTT confirmed a vbase offset; discarded"
            )
            continue
        for sv, ext in extractions:
            for ap, offsets in ext.per_member.items():
                sub = ap_map.get(ap)
                if sub is not None and not sub.vbase_offsets:
                    sub.vbase_offsets = list(offsets)
        kept.append(vtt)
    return kept, errors


@dataclass
class ConstructionMapping:
    to_regular: dict[VTableGroup, VTableGroup]
    orphans: list[VTableGroup]
    ambiguous: list[str]

    def regular_for(self, group: VTableGroup) -> VTableGroup:
        return self.to_regular.get(group, group)


def map_construction_to_regular(
    vtables: list[VTableGroup], vtts: list[Vtt]
) -> ConstructionMapping:
    """Bucket groups by their ordered function-pointer sequence; within a
    bucket the non-construction group is the regular vtable and every
    construction group maps to it."""
    ap_to_group = {g.id: g for g in vtables}
    for vtt in vtts:
        for sv in vtt.sub_vtts:
            group = ap_to_group.get(sv.primary_vptr)
            if group is not None and sv.is_construction:
                group.is_construction = True

    buckets: dict[tuple[int, ...], list[VTableGroup]] = {}
    for group in vtables:
        buckets.setdefault(group.group_key, []).append(group)

    mapping = ConstructionMapping({}, [], [])
    for key, members in sorted(buckets.items(), key=lambda kv: kv[1][0].id):
        regulars = [g for g in members if not g.is_construction]
        constructions = [g for g in members if g.is_construction]
        if not constructions:
            continue
        # secondary key: function-pointer sums must agree inside a bucket
        assert len({g.fn_ptr_sum for g in members}) == 1
        if len(regulars) == 1:
            for g in constructions:
                mapping.to_regular[g] = regulars[0]
        elif len(regulars) > 1:
            ids = ", ".join(f"{g.id:#x}" for g in regulars)
            mapping.ambiguous.append(
                f"bucket with fn-ptr sum {members[0].fn_ptr_sum:#x} holds "
                f"multiple regular vtables ({ids}); mapping skipped"
            )
        else:
            standin = min(constructions, key=lambda g: g.id)
            standin.orphan_standin = True
            mapping.orphans.append(standin)
            for g in constructions:
                if g is not standin:
                    mapping.to_regular[g] = standin
    return mapping
