"""Dependency-ordered analysis pipeline and report serialization.

Passes run strictly in data order: image -> instruction streams ->
vtables -> VTTs -> subVTTs -> vbase offsets -> mapping -> ctor summaries
-> base recovery -> hierarchy -> surface. Partial failures land in the
report's errors object instead of aborting the scan.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from . import ctors as ctors_mod
from . import image as image_mod
from . import itanium, msvc, recovery, surface
from .config import AnalysisConfig
from .ctors import CtorSummary
from .disasm import FunctionStream, decode_function, decode_image, ingest_text_disasm
from .errors import NoPrimaryFound
from .image import Abi, BinaryImage
from .itanium import ConstructionMapping, VTableGroup, Vtt
from .recovery import Hierarchy
from .scoring import NameMap


@dataclass
class AnalysisResult:
    path: str
    config: AnalysisConfig
    img: BinaryImage
    instrs: dict[int, FunctionStream]
    vtables: list[VTableGroup]
    vtts: list[Vtt]
    mapping: ConstructionMapping
    summaries: dict[int, CtorSummary]
    ctor_funcs: set[int]
    hierarchy: Hierarchy
    surface_report: surface.SurfaceReport
    vbtables: dict[int, msvc.VbTable] = field(default_factory=dict)
    errors: dict[str, list[str]] = field(default_factory=dict)


def _load_streams(img: BinaryImage, config: AnalysisConfig) -> dict[int, FunctionStream]:
    if config.disasm_mode == "text":
        listing = Path(config.disasm_text_path).read_text()
        return ingest_text_disasm(listing, img)
    return decode_image(img)


def _summarize_reachable(
    img: BinaryImage,
    instrs: dict[int, FunctionStream],
    identified: dict[int, CtorSummary],
    vtts: list[Vtt],
    address_points: frozenset[int],
    vbt_addrs: frozenset[int],
    config: AnalysisConfig,
    *,
    max_depth: int = 8,
) -> dict[int, CtorSummary]:
    """Identified ctors plus every function transitively reachable through
    their call records (covers the special ctors of intermediate bases)."""
    summaries = dict(identified)
    frontier = list(identified)
    depth = 0
    while frontier and depth < max_depth:
        next_frontier = []
        for func in frontier:
            for record in summaries[func].calls:
                target = record.target
                if target is None or target in summaries:
                    continue
                stream = instrs.get(target)
                if stream is None and config.disasm_mode == "builtin":
                    stream = decode_function(img, target)
                if stream is None:
                    continue
                summaries[target] = ctors_mod.summarize(
                    target, stream, img, vtts, address_points, vbt_addrs
                )
                next_frontier.append(target)
        frontier = next_frontier
        depth += 1
    return summaries


def run_scan(path: str | Path, config: AnalysisConfig) -> AnalysisResult:
    img = image_mod.load(path, config.abi, config.word_size)
    instrs = _load_streams(img, config)
    errors: dict[str, list[str]] = {}
    vtables = itanium.find_vtables(img, instrs)
    address_points = frozenset(sub.address_point for g in vtables for sub in g.subs)

    vtts: list[Vtt] = []
    vbtables: dict[int, msvc.VbTable] = {}
    mapping = ConstructionMapping({}, [], [])
    edge_sets: list[set[recovery.InheritanceEdge]] = []

    if img.abi is Abi.ITANIUM:
        candidates = itanium.find_vtts(
            img, vtables, prose_boundary=config.vtt_prose_boundary
        )
        grouped: list[Vtt] = []
        for vtt in candidates:
            try:
                vtt.sub_vtts = itanium.group_subvtts(vtt, vtables)
                grouped.append(vtt)
            except NoPrimaryFound as exc:
                errors.setdefault("vtts", []).append(str(exc))
        vtts, vb_errors = itanium.apply_vbase_extraction(img, grouped, vtables)
        if vb_errors:
            errors.setdefault("vbase_offsets", []).extend(vb_errors)
        mapping = itanium.map_construction_to_regular(vtables, vtts)
        if mapping.ambiguous:
            errors.setdefault("mapping", []).extend(mapping.ambiguous)

        identified = ctors_mod.identify_ctors(instrs, img, vtts, address_points)
        summaries = _summarize_reachable(
            img, instrs, identified, vtts, address_points, frozenset(), config
        )
        virtual_edges, v_errors = recovery.recover_virtual_bases(identified, vtables)
        if v_errors:
            errors.setdefault("virtual_bases", []).extend(v_errors)
        intermediate_edges, i_errors = recovery.recover_intermediate_bases(
            summaries, vtts, mapping, vtables
        )
        if i_errors:
            errors.setdefault("intermediate_bases", []).extend(i_errors)
        direct_edges = recovery.recover_direct_bases(identified, vtables)
        edge_sets = [virtual_edges, intermediate_edges, direct_edges]
        ctor_funcs = set(identified)
    else:
        vbtables = msvc.get_vbtables(
            img, instrs, constant=config.vbtable_constant, cap_offset=config.cap_offset
        )
        vbt_addrs = frozenset(vbtables)
        identified = ctors_mod.identify_ctors(instrs, img, [], address_points, vbt_addrs)
        summaries = _summarize_reachable(
            img, instrs, identified, [], address_points, vbt_addrs, config
        )
        virtual_edges, intermediate_edges, m_errors = msvc.recover_msvc_bases(
            summaries, set(identified), vbtables, vtables
        )
        if m_errors:
            errors.setdefault("msvc_bases", []).extend(m_errors)
        edge_sets = [virtual_edges, intermediate_edges]
        ctor_funcs = set(identified)

    hierarchy = recovery.build_tree(vtables, vtts, edge_sets)
    if hierarchy.errors:
        errors.setdefault("hierarchy", []).extend(hierarchy.errors)
    surface_report = surface.offset_distribution(vtables, mapping)

    return AnalysisResult(
        path=str(path),
        config=config,
        img=img,
        instrs=instrs,
        vtables=vtables,
        vtts=vtts,
        mapping=mapping,
        summaries=summaries,
        ctor_funcs=ctor_funcs,
        hierarchy=hierarchy,
        surface_report=surface_report,
        vbtables=vbtables,
        errors=errors,
    )


# --------------------------------------------------------------------------
# serialization


def _hex(value: int) -> str:
    return f"{value:#x}"


def _sub_dict(sub: itanium.SubVTable) -> dict:
    return {
        "address_point": _hex(sub.address_point),
        "offset_to_top": sub.offset_to_top,
        "rtti_slot": _hex(sub.rtti_slot),
        "fn_ptrs": [_hex(p) for p in sub.fn_ptrs],
        "vbase_offsets": list(sub.vbase_offsets),
        "vcall_region_present": sub.vcall_region_present,
    }


def _vtable_section(result: AnalysisResult) -> list[dict]:
    out = []
    for group in sorted(result.vtables, key=lambda g: g.id):
        out.append(
            {
                "id": _hex(group.id),
                "is_construction": group.is_construction,
                "orphan_standin": group.orphan_standin,
                "vbase_offsets": group.vbase_offsets,
                "fn_ptr_sum": _hex(group.fn_ptr_sum),
                "sub_vtables": [_sub_dict(s) for s in group.subs],
            }
        )
    return out


def _vtt_section(result: AnalysisResult) -> list[dict]:
    out = []
    for vtt in sorted(result.vtts, key=lambda v: v.base):
        out.append(
            {
                "base": _hex(vtt.base),
                "owner": _hex(vtt.owner_vptr),
                "entries": [_hex(e) for e in vtt.entries],
                "sub_vtts": [
                    {
                        "start": _hex(sv.start),
                        "primary": _hex(sv.primary_vptr),
                        "members": [_hex(m) for m in sv.member_vptrs],
                        "is_construction": sv.is_construction,
                    }
                    for sv in vtt.sub_vtts
                ],
            }
        )
    return out


def _mapping_section(result: AnalysisResult) -> dict:
    pairs = [
        {"construction": _hex(c.id), "regular": _hex(r.id)}
        for c, r in sorted(result.mapping.to_regular.items(), key=lambda kv: kv[0].id)
    ]
    return {
        "pairs": pairs,
        "orphans": [_hex(g.id) for g in result.mapping.orphans],
        "ambiguous": list(result.mapping.ambiguous),
    }


def _ctor_section(result: AnalysisResult) -> list[dict]:
    out = []
    for func in sorted(result.summaries):
        summary = result.summaries[func]
        if func not in result.ctor_funcs and not summary.is_special and not summary.vbt_writes:
            continue
        group = recovery.class_of_summary(summary, result.vtables)
        out.append(
            {
                "func": _hex(func),
                "class": _hex(group.id) if group else None,
                "identified": func in result.ctor_funcs,
                "is_special": summary.is_special,
                "partial": summary.partial,
                "vptr_writes": [
                    {"offset": off, "vptr": _hex(ap)} for off, ap in summary.vptr_writes
                ],
                "vbt_writes": [
                    {"offset": off, "table": _hex(t)} for off, t in summary.vbt_writes
                ],
                "vtt_args": [_hex(a) for a in summary.vtt_args_seen],
                "calls": [
                    {
                        "site": _hex(r.site),
                        "target": _hex(r.target) if r.target is not None else None,
                        "arg1": r.arg1.render(),
                        "arg2": r.arg2.render(),
                    }
                    for r in summary.calls
                ],
            }
        )
    return out


def _hierarchy_section(result: AnalysisResult) -> dict:
    h = result.hierarchy
    return {
        "nodes": [
            {
                "id": _hex(n.id),
                "vbase_offsets": list(n.vbase_offsets),
                "has_vtt": n.has_vtt,
                "orphan": n.orphan,
            }
            for n in (h.nodes[k] for k in sorted(h.nodes))
        ],
        "edges": [
            {
                "derived": _hex(e.derived),
                "base": _hex(e.base),
                "kind": e.kind.value,
                "evidence": e.evidence.value,
            }
            for e in h.edges
        ],
        "virtual_inheritance_trees": [
            {
                "members": [_hex(m) for m in t["members"]],
                "n_members": t["n_members"],
                "n_edges": t["n_edges"],
                "virtual_bases": [_hex(b) for b in t["virtual_bases"]],
            }
            for t in h.trees
        ],
    }


def _surface_section(result: AnalysisResult) -> dict:
    r = result.surface_report
    return {
        "n_construction_vtables": r.n_construction_vtables,
        "unique_vbase_offsets": list(r.unique_vbase_offsets),
        "unique_offsets_to_top": list(r.unique_offsets_to_top),
        "per_depth_prediction": {str(k): v for k, v in r.per_depth_prediction.items()},
    }


def report_dict(result: AnalysisResult) -> dict:
    report = {
        "binary": Path(result.path).name,
        "abi": result.config.abi,
        "word_size": result.config.word_size,
        "sections": [
            {"name": s.name, "base": _hex(s.base), "size": s.size, "kind": s.kind.value}
            for s in result.img.sections
        ],
        "vtables": _vtable_section(result),
        "vtts": _vtt_section(result),
        "mapping": _mapping_section(result),
        "ctors": _ctor_section(result),
        "hierarchy": _hierarchy_section(result),
        "surface": _surface_section(result),
        "errors": {k: sorted(v) for k, v in sorted(result.errors.items())},
    }
    if result.config.abi == "msvc":
        report["vbtables"] = [
            {
                "base": _hex(t.base),
                "first_constant": t.first_constant,
                "entries": list(t.entries),
            }
            for t in (result.vbtables[k] for k in sorted(result.vbtables))
        ]
    return report


def report_json(result: AnalysisResult) -> str:
    return json.dumps(report_dict(result), indent=2) + "\n"


_EDGE_STYLE = {
    recovery.EdgeKind.DIRECT: "solid",
    recovery.EdgeKind.INTERMEDIATE: "dashed",
    recovery.EdgeKind.VIRTUAL: "bold",
}


def to_dot(hierarchy: Hierarchy, name_map: NameMap | None = None) -> str:
    """DOT digraph: solid=direct, dashed=intermediate, bold=virtual."""
    lines = ["digraph hierarchy {"]
    for node_id in sorted(hierarchy.nodes):
        node = hierarchy.nodes[node_id]
        label = f"{node_id:#x}"
        if name_map is not None:
            name = name_map.resolve(node_id)
            if name:
                label = f"{name}\\n{node_id:#x}"
        attrs = [f'label="{label}"']
        if node.orphan:
            attrs.append('color="red"')
        lines.append(f'  "n{node_id:x}" [{", ".join(attrs)}];')
    for edge in hierarchy.edges:
        style = _EDGE_STYLE[edge.kind]
        lines.append(
            f'  "n{edge.derived:x}" -> "n{edge.base:x}" [style={style}];'
        )
    lines.append("}")
    return "\n".join(lines) + "\n"
