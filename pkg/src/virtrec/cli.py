"""Command-line surface: detect, scan, vtables, vtts, tree, surface, diff-gt."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import AnalysisConfig
from .errors import VirtrecError
from .image import Abi
from .pipeline import report_dict, report_json, run_scan, to_dot
from .scoring import NameMap, parse_gt, score
from .surface import dump_distribution, plot_distribution


def _common_flags(sub: argparse.ArgumentParser):
    sub.add_argument("binary", help="path to the ELF64 or PE32+ file")
    sub.add_argument("--abi", choices=["itanium", "msvc"], default=None)
    sub.add_argument("--word-size", type=int, choices=[8, 4], default=None)
    sub.add_argument(
        "--disasm",
        default=None,
        help="'builtin' or 'text:<listing file>' for externally produced disassembly",
    )
    sub.add_argument("--config", default=None, help="flat key=value config file")
    sub.add_argument("--out", choices=["json", "dot", "table"], default=None)
    sub.add_argument("--map", default=None, help="name map JSON (vtable symbol ranges)")
    sub.add_argument(
        "--no-prose-boundary",
        action="store_true",
        help="disable the prose VTT boundary rule (keep only the first-entry rule)",
    )


def _build_config(args) -> AnalysisConfig:
    overrides: dict = {}
    if args.abi is not None:
        overrides["abi"] = args.abi
    if args.word_size is not None:
        overrides["word_size"] = args.word_size
    if args.disasm is not None:
        if args.disasm.startswith("text:"):
            overrides["disasm_mode"] = "text"
            overrides["disasm_text_path"] = args.disasm[len("text:"):]
        elif args.disasm == "builtin":
            overrides["disasm_mode"] = "builtin"
        else:
            raise VirtrecError(f"--disasm must be 'builtin' or 'text:<file>', not {args.disasm!r}")
    if args.no_prose_boundary:
        overrides["vtt_prose_boundary"] = False
    if args.out is not None:
        overrides["output"] = args.out
    if args.config is not None:
        return AnalysisConfig.from_file(args.config, **overrides)
    return AnalysisConfig(**overrides)


def _load_name_map(args) -> NameMap | None:
    if args.map is None:
        return None
    return NameMap.from_json(Path(args.map).read_text())


def cmd_detect(args) -> int:
    config = _build_config(args)
    result = run_scan(args.binary, config)
    if config.abi == "itanium":
        n = len(result.vtts)
        if n >= 1:
            print(f"virtual inheritance: yes ({n} VTTs)")
            return 0
    else:
        from .recovery import EdgeKind

        virtual = [e for e in result.hierarchy.edges if e.kind is EdgeKind.VIRTUAL]
        if result.vbtables and virtual:
            print(f"virtual inheritance: yes ({len(result.vbtables)} VB-Tables)")
            return 0
    print("virtual inheritance: no")
    return 1


def _print_report(report: dict, config: AnalysisConfig, keys: list[str] | None = None):
    if keys is not None:
        report = {k: report[k] for k in keys if k in report}
    print(json.dumps(report, indent=2))


def cmd_scan(args) -> int:
    config = _build_config(args)
    result = run_scan(args.binary, config)
    if config.output == "table":
        sys.stdout.write(result.img.dump_sections())
        h = result.hierarchy
        print(
            f"vtables={len(result.vtables)} vtts={len(result.vtts)} "
            f"nodes={len(h.nodes)} edges={len(h.edges)} trees={len(h.trees)}"
        )
        return 0
    if config.output == "dot":
        sys.stdout.write(to_dot(result.hierarchy, _load_name_map(args)))
        return 0
    sys.stdout.write(report_json(result))
    return 0


def cmd_vtables(args) -> int:
    config = _build_config(args)
    result = run_scan(args.binary, config)
    _print_report(report_dict(result), config, ["binary", "abi", "vtables", "mapping"])
    return 0


def cmd_vtts(args) -> int:
    config = _build_config(args)
    result = run_scan(args.binary, config)
    _print_report(report_dict(result), config, ["binary", "abi", "vtts"])
    return 0


def cmd_tree(args) -> int:
    config = _build_config(args)
    result = run_scan(args.binary, config)
    sys.stdout.write(to_dot(result.hierarchy, _load_name_map(args)))
    return 0


def cmd_surface(args) -> int:
    config = _build_config(args)
    result = run_scan(args.binary, config)
    report = report_dict(result)["surface"]
    if args.dump:
        Path(args.dump).write_text(dump_distribution(result.surface_report))
    if args.plot:
        plot_distribution(result.surface_report, args.plot)
    print(json.dumps(report, indent=2))
    return 0


def cmd_diff_gt(args) -> int:
    config = _build_config(args)
    result = run_scan(args.binary, config)
    gt = parse_gt(Path(args.gt).read_text())
    name_map = _load_name_map(args)
    if name_map is None:
        print("diff-gt requires --map", file=sys.stderr)
        return 2
    card = score(result.hierarchy, gt, name_map)
    if config.output == "table":
        sys.stdout.write(card.human_table())
    else:
        print(json.dumps(card.as_dict(), indent=2))
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="virtrec",
        description="Recover C++ virtual inheritance metadata and hierarchy from binaries",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    commands = {
        "detect": cmd_detect,
        "scan": cmd_scan,
        "vtables": cmd_vtables,
        "vtts": cmd_vtts,
        "tree": cmd_tree,
        "surface": cmd_surface,
        "diff-gt": cmd_diff_gt,
    }
    for name in commands:
        p = sub.add_parser(name)
        _common_flags(p)
        if name == "surface":
            p.add_argument("--dump", default=None, help="write two-column text dump")
            p.add_argument("--plot", default=None, help="render distribution figure (PNG)")
        if name == "diff-gt":
            p.add_argument("--gt", required=True, help="ground truth (canonical JSON or GCC dump)")

    args = parser.parse_args(argv)
    try:
        return commands[args.command](args)
    except VirtrecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
