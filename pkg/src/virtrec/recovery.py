"""Phase 2: turn constructor summaries and vtable metadata into an
inheritance graph with virtual, intermediate, and direct edges."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .ctors import CtorSummary, SymKind
from .itanium import ConstructionMapping, SubVtt, VTableGroup, Vtt


class EdgeKind(enum.Enum):
    VIRTUAL = "virtual"
    INTERMEDIATE = "intermediate"
    DIRECT = "direct"


class Evidence(enum.Enum):
    VBASE_OFFSET_MATCH = "vbase_offset_match"
    SUB_VTT_ARG = "subvtt_arg"
    CTOR_CALL_OFFSET = "ctor_call_offset"


_KIND_FOR_EVIDENCE = {
    Evidence.VBASE_OFFSET_MATCH: EdgeKind.VIRTUAL,
    Evidence.SUB_VTT_ARG: EdgeKind.INTERMEDIATE,
    Evidence.CTOR_CALL_OFFSET: EdgeKind.DIRECT,
}


@dataclass(frozen=True, order=True)
class InheritanceEdge:
    derived: int
    base: int
    kind: EdgeKind = field(compare=False)
    evidence: Evidence = field(compare=False)

    def __post_init__(self):
        assert _KIND_FOR_EVIDENCE[self.evidence] is self.kind


@dataclass
class ClassNode:
    id: int
    vbase_offsets: list[int]
    has_vtt: bool = False
    orphan: bool = False


@dataclass
class Hierarchy:
    nodes: dict[int, ClassNode]
    edges: list[InheritanceEdge]
    trees: list[dict]
    errors: list[str] = field(default_factory=list)


def class_of_summary(summary: CtorSummary, vtables: list[VTableGroup]) -> VTableGroup | None:
    """The class a ctor belongs to: the group whose primary address point
    it writes, preferring the write at object offset zero."""
    ap_to_group: dict[int, VTableGroup] = {}
    primaries = set()
    for g in vtables:
        for sub in g.subs:
            ap_to_group[sub.address_point] = g
        primaries.add(g.primary.address_point)
    best: tuple[int, VTableGroup] | None = None
    for offset, ap in summary.vptr_writes:
        group = ap_to_group.get(ap)
        if group is None:
            continue
        if ap in primaries and (best is None or offset < best[0]):
            best = (offset, group)
    if best is not None:
        return best[1]
    for offset, ap in sorted(summary.vptr_writes):
        group = ap_to_group.get(ap)
        if group is not None:
            return group
    return None


def _classes(summaries: dict[int, CtorSummary], vtables: list[VTableGroup]) -> dict[int, VTableGroup]:
    return {
        func: group
        for func, summary in summaries.items()
        if (group := class_of_summary(summary, vtables)) is not None
    }


def recover_virtual_bases(
    summaries: dict[int, CtorSummary],
    vtables: list[VTableGroup],
) -> tuple[set[InheritanceEdge], list[str]]:
    """A call at this+k where k is one of the caller's vbase offsets and the
    target is itself an identified ctor marks a virtual base."""
    ctor_class = _classes(summaries, vtables)
    edges: set[InheritanceEdge] = set()
    errors: list[str] = []
    for func, summary in sorted(summaries.items()):
        derived = ctor_class.get(func)
        if derived is None:
            continue
        vbase_offsets = set(derived.vbase_offsets)
        if not vbase_offsets:
            continue
        for record in summary.calls:
            if record.arg1.kind is not SymKind.THIS_PLUS:
                continue
            if record.arg1.k not in vbase_offsets:
                continue
            if record.target is None:
                errors.append(
                    f"ctor {func:#x}: indirect call at {record.site:#x} with "
                    f"vbase-matching offset {record.arg1.k:#x} skipped"
                )
                continue
            base = ctor_class.get(record.target)
            if base is None or base is derived:
                continue
            edges.add(
                InheritanceEdge(
                    derived.id, base.id, EdgeKind.VIRTUAL, Evidence.VBASE_OFFSET_MATCH
                )
            )
    return edges, errors


def _subvtt_at(vtts: list[Vtt], addr: int) -> tuple[Vtt, SubVtt] | None:
    for vtt in vtts:
        if not (vtt.base <= addr < vtt.end):
            continue
        for sv in vtt.sub_vtts:
            if addr in sv.slot_addrs:
                return vtt, sv
        # address inside the VTT but not on a grouped slot: credit the
        # subVTT whose slot span covers it
        for sv in vtt.sub_vtts:
            if sv.slot_addrs and min(sv.slot_addrs) <= addr <= max(sv.slot_addrs):
                return vtt, sv
    return None


def recover_intermediate_bases(
    summaries: dict[int, CtorSummary],
    vtts: list[Vtt],
    cmap: ConstructionMapping,
    vtables: list[VTableGroup],
    *,
    max_depth: int = 8,
) -> tuple[set[InheritanceEdge], list[str]]:
    """Resolve every subVTT address handed to a special constructor. The
    edge's derived side is the owner of the VTT the address points into,
    which also credits the nested subVTTs a special constructor forwards
    out of its own VTT argument."""
    ap_to_group = {sub.address_point: g for g in vtables for sub in g.subs}
    edges: set[InheritanceEdge] = set()
    errors: list[str] = []

    def emit(addr: int):
        resolved = _subvtt_at(vtts, addr)
        if resolved is None:
            return
        vtt, sv = resolved
        owner = ap_to_group.get(vtt.owner_vptr)
        cv_group = ap_to_group.get(sv.primary_vptr)
        if owner is None or cv_group is None:
            return
        if not sv.is_construction:
            return
        base = cmap.regular_for(cv_group)
        if base.orphan_standin:
            message = (
                f"intermediate base of {owner.id:#x} resolved to orphan "
                f"construction vtable {base.id:#x} (no regular vtable present)"
            )
            if message not in errors:
                errors.append(message)
        if base is owner:
            return
        edges.add(
            InheritanceEdge(owner.id, base.id, EdgeKind.INTERMEDIATE, Evidence.SUB_VTT_ARG)
        )

    # direct evidence: immediates into a VTT seen in identified ctors
    worklist: list[tuple[int, int, int]] = []
    seen: set[tuple[int, int]] = set()
    for func, summary in sorted(summaries.items()):
        for addr in summary.vtt_args_seen:
            emit(addr)
        for record in summary.calls:
            if (
                record.arg2.kind is SymKind.IMM
                and record.target is not None
                and _subvtt_at(vtts, record.arg2.v) is not None
            ):
                worklist.append((record.target, record.arg2.v, 0))

    # nested evidence: special ctors forward their VTT argument plus a
    # constant to the next level's special ctors
    while worklist:
        func, base_addr, depth = worklist.pop()
        if depth >= max_depth or (func, base_addr) in seen:
            continue
        seen.add((func, base_addr))
        summary = summaries.get(func)
        if summary is None:
            continue
        for record in summary.calls:
            if record.arg2.kind is SymKind.ARG2_PLUS:
                concrete = base_addr + record.arg2.k
                if _subvtt_at(vtts, concrete) is not None:
                    emit(concrete)
                    if record.target is not None:
                        worklist.append((record.target, concrete, depth + 1))
            elif record.arg2.kind is SymKind.IMM and record.target is not None:
                if _subvtt_at(vtts, record.arg2.v) is not None:
                    worklist.append((record.target, record.arg2.v, depth + 1))
    return edges, errors


def recover_direct_bases(
    summaries: dict[int, CtorSummary],
    vtables: list[VTableGroup],
) -> set[InheritanceEdge]:
    """Ctor calls at this+0 or at a secondary subobject offset that is not
    a vbase offset mark plain (non-virtual) bases."""
    ctor_class = _classes(summaries, vtables)
    edges: set[InheritanceEdge] = set()
    for func, summary in sorted(summaries.items()):
        derived = ctor_class.get(func)
        if derived is None:
            continue
        vbase_offsets = set(derived.vbase_offsets)
        secondary_offsets = {-sub.offset_to_top for sub in derived.secondaries}
        for record in summary.calls:
            if record.arg1.kind is not SymKind.THIS_PLUS or record.target is None:
                continue
            k = record.arg1.k
            if k in vbase_offsets:
                continue
            if k != 0 and k not in secondary_offsets:
                continue
            base = ctor_class.get(record.target)
            if base is None or base is derived:
                continue
            edges.add(
                InheritanceEdge(derived.id, base.id, EdgeKind.DIRECT, Evidence.CTOR_CALL_OFFSET)
            )
    return edges


_PRIORITY = {EdgeKind.VIRTUAL: 0, EdgeKind.INTERMEDIATE: 1, EdgeKind.DIRECT: 2}


def build_tree(
    vtables: list[VTableGroup],
    vtts: list[Vtt],
    edge_sets: list[set[InheritanceEdge]],
) -> Hierarchy:
    """Merge edges (kind priority Virtual > Intermediate > Direct), build
    class nodes, and identify virtual-inheritance trees as connected
    components containing at least one Virtual edge."""
    ap_to_group = {g.id: g for g in vtables}
    vtt_owners = {v.owner_vptr for v in vtts}

    nodes: dict[int, ClassNode] = {}
    for g in sorted(vtables, key=lambda g: g.id):
        if g.is_construction and not g.orphan_standin:
            continue
        nodes[g.id] = ClassNode(
            id=g.id,
            vbase_offsets=g.vbase_offsets,
            has_vtt=g.primary.address_point in vtt_owners,
            orphan=g.orphan_standin,
        )

    best: dict[tuple[int, int], InheritanceEdge] = {}
    for edge_set in edge_sets:
        for edge in edge_set:
            key = (edge.derived, edge.base)
            kept = best.get(key)
            if kept is None or _PRIORITY[edge.kind] < _PRIORITY[kept.kind]:
                best[key] = edge
    edges = sorted(best.values())

    errors: list[str] = []
    for edge in edges:
        for endpoint in (edge.derived, edge.base):
            if endpoint not in nodes:
                group = ap_to_group.get(endpoint)
                nodes[endpoint] = ClassNode(
                    id=endpoint,
                    vbase_offsets=group.vbase_offsets if group else [],
                    has_vtt=endpoint in vtt_owners,
                    orphan=bool(group and group.is_construction),
                )

    cycle = _find_cycle_edges(nodes, edges)
    if cycle:
        errors.extend(
            f"cycle through edge {e.derived:#x} -> {e.base:#x} (kept, flagged)"
            for e in cycle
        )

    trees = _virtual_trees(nodes, edges)
    return Hierarchy(nodes=nodes, edges=edges, trees=trees, errors=errors)


def _find_cycle_edges(
    nodes: dict[int, ClassNode], edges: list[InheritanceEdge]
) -> list[InheritanceEdge]:
    adjacency: dict[int, list[InheritanceEdge]] = {}
    for edge in edges:
        adjacency.setdefault(edge.derived, []).append(edge)
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {n: WHITE for n in nodes}
    offenders: list[InheritanceEdge] = []

    def visit(n: int):
        color[n] = GRAY
        for edge in adjacency.get(n, ()):  # derived -> base direction
            m = edge.base
            if color.get(m, WHITE) == GRAY:
                offenders.append(edge)
            elif color.get(m, WHITE) == WHITE:
                visit(m)
        color[n] = BLACK

    for n in sorted(nodes):
        if color[n] == WHITE:
            visit(n)
    return offenders


def _virtual_trees(
    nodes: dict[int, ClassNode], edges: list[InheritanceEdge]
) -> list[dict]:
    parent = {n: n for n in nodes}

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a: int, b: int):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    for edge in edges:
        if edge.derived in parent and edge.base in parent:
            union(edge.derived, edge.base)

    components: dict[int, list[int]] = {}
    for n in nodes:
        components.setdefault(find(n), []).append(n)

    trees = []
    for root in sorted(components):
        members = sorted(components[root])
        member_set = set(members)
        component_edges = [e for e in edges if e.derived in member_set]
        virtual_edges = [e for e in component_edges if e.kind is EdgeKind.VIRTUAL]
        if not virtual_edges:
            continue
        virtual_bases = sorted({e.base for e in virtual_edges})
        trees.append(
            {
                "members": members,
                "n_members": len(members),
                "n_edges": len(component_edges),
                "virtual_bases": virtual_bases,
            }
        )
    return trees
