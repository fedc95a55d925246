"""Analysis configuration: CLI flags and the flat key=value config file."""

from __future__ import annotations

import sys
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import VirtrecError
from .msvc import DEFAULT_CAP_OFFSET, DEFAULT_VBTABLE_CONSTANT


@dataclass
class AnalysisConfig:
    abi: str = "itanium"
    word_size: int = 8
    disasm_mode: str = "builtin"  # "builtin" or "text"
    disasm_text_path: str = ""
    vtt_prose_boundary: bool = True
    vbtable_constant: int = DEFAULT_VBTABLE_CONSTANT
    cap_offset: int = DEFAULT_CAP_OFFSET
    output: str = "json"  # json | dot | table

    def __post_init__(self):
        if self.abi not in ("itanium", "msvc"):
            raise VirtrecError(f"unknown abi {self.abi!r}")
        if self.word_size not in (4, 8):
            raise VirtrecError(f"word size must be 4 or 8, not {self.word_size}")
        if self.word_size == 4:
            print("warning: 32-bit word size is untested", file=sys.stderr)

    def to_file_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name}={value}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_file(path: str | Path, **overrides) -> "AnalysisConfig":
        values: dict = {}
        for raw_line in Path(path).read_text().splitlines():
            line = raw_line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise VirtrecError(f"config line without '=': {line!r}")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
        kwargs = {}
        for f in fields(AnalysisConfig):
            if f.name not in values:
                continue
            raw = values[f.name]
            if f.type in ("int", int):
                kwargs[f.name] = int(raw, 0)
            elif f.type in ("bool", bool):
                kwargs[f.name] = raw.lower() in ("1", "true", "yes", "on")
            else:
                kwargs[f.name] = raw
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
        return AnalysisConfig(**kwargs)
