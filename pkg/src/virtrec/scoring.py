"""Ground-truth comparison: per-class matching/over-/under-estimation of
recovered virtual and intermediate bases.

Ground truth arrives either as canonical JSON or as a GCC class-hierarchy
dump (-fdump-lang-class); the comparator itself only sees the canonical
form. Name maps translate recovered class ids (primary address points)
back to source names via vtable symbol ranges from the unstripped twin.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .errors import ParseError
from .recovery import EdgeKind, Hierarchy


@dataclass
class GtClass:
    name: str
    virtual_bases: list[str] = field(default_factory=list)
    intermediate_bases: list[str] = field(default_factory=list)
    direct_bases: list[str] = field(default_factory=list)
    vptr_hint: int | None = None


@dataclass
class GroundTruth:
    classes: list[GtClass]
    removed: list[str] = field(default_factory=list)

    def by_name(self) -> dict[str, GtClass]:
        return {c.name: c for c in self.classes}


@dataclass
class ScoreCard:
    n_classes_with_virt: int = 0
    vbases_matching: int = 0
    vbases_overest: int = 0
    vbases_underest: int = 0
    ibases_matching: int = 0
    ibases_overest: int = 0
    ibases_underest: int = 0
    not_found: int = 0
    unmapped_ids: list[int] = field(default_factory=list)
    per_class: dict[str, dict] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "n_classes_with_virt": self.n_classes_with_virt,
            "vbases": {
                "matching": self.vbases_matching,
                "overest": self.vbases_overest,
                "underest": self.vbases_underest,
            },
            "ibases": {
                "matching": self.ibases_matching,
                "overest": self.ibases_overest,
                "underest": self.ibases_underest,
            },
            "not_found": self.not_found,
            "unmapped_ids": [f"{i:#x}" for i in sorted(self.unmapped_ids)],
            "per_class": self.per_class,
        }

    def human_table(self) -> str:
        head = (
            f"{'class':<24} {'GT vbases':<20} {'recovered':<20} "
            f"{'GT ibases':<20} {'recovered':<20} verdicts"
        )
        rows = [head, "-" * len(head)]
        for name in sorted(self.per_class):
            row = self.per_class[name]
            rows.append(
                f"{name:<24} {','.join(row['gt_virtual']) or '-':<20} "
                f"{','.join(row['rec_virtual']) or '-':<20} "
                f"{','.join(row['gt_intermediate']) or '-':<20} "
                f"{','.join(row['rec_intermediate']) or '-':<20} "
                f"{row['verdict_virtual']}/{row['verdict_intermediate']}"
            )
        rows.append("-" * len(head))
        rows.append(
            f"classes={self.n_classes_with_virt} "
            f"vbases m/o/u={self.vbases_matching}/{self.vbases_overest}/{self.vbases_underest} "
            f"ibases m/o/u={self.ibases_matching}/{self.ibases_overest}/{self.ibases_underest} "
            f"not_found={self.not_found}"
        )
        return "\n".join(rows) + "\n"


# --------------------------------------------------------------------------
# ground-truth parsing

_CLASS_HEADER = re.compile(r"^(?:Class|Struct) (.+)$")
_ENTRY = re.compile(r"^(\S[^(]*?) \(0x0x[0-9a-f]+\)(.*)$")


def parse_gt(text: str) -> GroundTruth:
    """Accepts canonical GT JSON or a GCC class-hierarchy dump."""
    stripped = text.lstrip()
    if not stripped:
        return GroundTruth(classes=[])
    if stripped.startswith("{"):
        return _parse_gt_json(stripped)
    return _parse_gcc_dump(text)


def _parse_gt_json(text: str) -> GroundTruth:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"ground truth JSON: {exc}") from exc
    if not isinstance(payload, dict) or "classes" not in payload:
        raise ParseError("ground truth JSON lacks a 'classes' array")
    classes = []
    for i, entry in enumerate(payload["classes"]):
        if "name" not in entry:
            raise ParseError(f"ground truth class #{i} lacks a name")
        hint = entry.get("vptr_hint")
        classes.append(
            GtClass(
                name=entry["name"],
                virtual_bases=sorted(entry.get("virtual_bases", [])),
                intermediate_bases=sorted(entry.get("intermediate_bases", [])),
                direct_bases=sorted(entry.get("direct_bases", [])),
                vptr_hint=int(hint, 16) if isinstance(hint, str) else hint,
            )
        )
    removed = sorted(payload.get("removed", []))
    names = [c.name for c in classes]
    if len(names) != len(set(names)):
        raise ParseError("duplicate class names in ground truth")
    for c in classes:
        if c.name in c.virtual_bases + c.intermediate_bases + c.direct_bases:
            raise ParseError(f"class {c.name} lists itself as a base")
    keep = [c for c in classes if c.name not in set(removed)]
    return GroundTruth(classes=keep, removed=removed)


def _parse_gcc_dump(text: str) -> GroundTruth:
    lines = text.splitlines()
    classes: list[GtClass] = []
    i = 0
    found_any = False
    while i < len(lines):
        header = _CLASS_HEADER.match(lines[i])
        if not header:
            i += 1
            continue
        found_any = True
        name = header.group(1).strip()
        i += 1
        entries: list[tuple[str, str, list[str]]] = []
        while i < len(lines) and lines[i].strip():
            line = lines[i]
            if re.match(r"^ {2,}\S", line):
                if entries and not re.match(r"^ {3}(?:size|base size)", line):
                    entries[-1][2].append(line)
                i += 1
                continue
            m = _ENTRY.match(line)
            if m:
                entries.append((m.group(1).strip(), m.group(2), []))
            i += 1
        classes.append(_digest_dump_entries(name, entries))
    if not found_any:
        raise ParseError("no class blocks found in hierarchy dump")
    classes.sort(key=lambda c: c.name)
    return GroundTruth(classes=classes)


def _digest_dump_entries(
    name: str, entries: list[tuple[str, str, list[str]]]
) -> GtClass:
    virtual: set[str] = set()
    intermediate: set[str] = set()
    direct: set[str] = set()
    for idx, (entry_name, flags, attrs) in enumerate(entries):
        if idx == 0 and entry_name == name:
            continue
        if "alternative-path" in flags:
            continue
        is_virtual = re.search(r"\bvirtual\b", flags) is not None
        if is_virtual:
            virtual.add(entry_name)
        if any("subvttidx=" in a for a in attrs):
            intermediate.add(entry_name)
        depth_one = any(re.match(r"^ {6}\S", a) for a in attrs)
        if depth_one and not is_virtual:
            direct.add(entry_name)
    return GtClass(name, sorted(virtual), sorted(intermediate), sorted(direct))


# --------------------------------------------------------------------------
# name maps

@dataclass(frozen=True)
class MapRange:
    start: int
    end: int
    name: str
    construction: bool = False
    label: str = ""


@dataclass
class NameMap:
    ranges: list[MapRange]

    @staticmethod
    def from_json(text: str) -> "NameMap":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"name map JSON: {exc}") from exc
        ranges = []
        for entry in payload.get("ranges", []):
            ranges.append(
                MapRange(
                    start=int(entry["start"], 16),
                    end=int(entry["end"], 16),
                    name=entry["name"],
                    construction=bool(entry.get("construction", False)),
                    label=entry.get("label", entry["name"]),
                )
            )
        ranges.sort(key=lambda r: r.start)
        return NameMap(ranges)

    def lookup(self, class_id: int) -> MapRange | None:
        for r in self.ranges:
            if r.start <= class_id < r.end:
                return r
        return None

    def resolve(self, class_id: int) -> str | None:
        r = self.lookup(class_id)
        return r.name if r is not None else None


# --------------------------------------------------------------------------
# scoring


def _verdict(recovered: set[str], expected: set[str]) -> str:
    if recovered == expected:
        return "matching"
    if recovered - expected:
        return "overest"
    return "underest"


def score(hierarchy: Hierarchy, gt: GroundTruth, name_map: NameMap) -> ScoreCard:
    """Per-class set comparison of recovered virtual/intermediate bases
    against ground truth, mirroring the matching/over/under scheme."""
    card = ScoreCard()
    names_present: set[str] = set()
    id_to_name: dict[int, str] = {}
    for node_id in hierarchy.nodes:
        name = name_map.resolve(node_id)
        if name is None:
            card.unmapped_ids.append(node_id)
        else:
            id_to_name[node_id] = name
            names_present.add(name)

    rec_virtual: dict[str, set[str]] = {}
    rec_intermediate: dict[str, set[str]] = {}
    for edge in hierarchy.edges:
        derived = id_to_name.get(edge.derived)
        base = id_to_name.get(edge.base)
        if derived is None or base is None:
            continue
        if edge.kind is EdgeKind.VIRTUAL:
            rec_virtual.setdefault(derived, set()).add(base)
        elif edge.kind is EdgeKind.INTERMEDIATE:
            rec_intermediate.setdefault(derived, set()).add(base)

    for cls in sorted(gt.classes, key=lambda c: c.name):
        if not cls.virtual_bases:
            continue
        card.n_classes_with_virt += 1
        if cls.name not in names_present:
            card.not_found += 1
            card.per_class[cls.name] = {
                "gt_virtual": cls.virtual_bases,
                "rec_virtual": [],
                "gt_intermediate": cls.intermediate_bases,
                "rec_intermediate": [],
                "verdict_virtual": "not_found",
                "verdict_intermediate": "not_found",
            }
            continue
        got_v = rec_virtual.get(cls.name, set())
        verdict_v = _verdict(got_v, set(cls.virtual_bases))
        setattr(card, f"vbases_{verdict_v}", getattr(card, f"vbases_{verdict_v}") + 1)
        verdict_i = "n/a"
        got_i = rec_intermediate.get(cls.name, set())
        if cls.intermediate_bases:
            verdict_i = _verdict(got_i, set(cls.intermediate_bases))
            setattr(card, f"ibases_{verdict_i}", getattr(card, f"ibases_{verdict_i}") + 1)
        card.per_class[cls.name] = {
            "gt_virtual": cls.virtual_bases,
            "rec_virtual": sorted(got_v),
            "gt_intermediate": cls.intermediate_bases,
            "rec_intermediate": sorted(got_i),
            "verdict_virtual": verdict_v,
            "verdict_intermediate": verdict_i,
        }
    return card
