"""Attack-surface analytics: construction-vtable counts, the quadratic
growth law, and the offset distributions an attacker can draw from."""

from __future__ import annotations

from dataclasses import dataclass, field

from .itanium import ConstructionMapping, VTableGroup

PREDICTION_DEPTHS = range(0, 11)


def predict_cvtables(depth: int) -> int:
    """Construction vtables a pure chain of the given depth accumulates:
    (n+1)(n+2)/2 - 1."""
    if depth < 0:
        raise ValueError("depth must be >= 0")
    return (depth + 1) * (depth + 2) // 2 - 1


@dataclass
class SurfaceReport:
    n_construction_vtables: int
    unique_vbase_offsets: list[int]
    unique_offsets_to_top: list[int]
    per_depth_prediction: dict[int, int] = field(default_factory=dict)


def offset_distribution(
    vtables: list[VTableGroup], cmap: ConstructionMapping | None = None
) -> SurfaceReport:
    """Collect vbase offsets and (secondary) offsets-to-top from
    construction groups only."""
    vbase: set[int] = set()
    otts: set[int] = set()
    n_construction = 0
    for group in vtables:
        if not group.is_construction:
            continue
        n_construction += 1
        for sub in group.subs:
            vbase.update(sub.vbase_offsets)
        for sub in group.secondaries:
            otts.add(sub.offset_to_top)
    return SurfaceReport(
        n_construction_vtables=n_construction,
        unique_vbase_offsets=sorted(vbase),
        unique_offsets_to_top=sorted(otts),
        per_depth_prediction={d: predict_cvtables(d) for d in PREDICTION_DEPTHS},
    )


def dump_distribution(report: SurfaceReport) -> str:
    """gnuplot-compatible two-column dump: index, signed value; one block
    per offset family."""
    lines = ["# vbase-offsets (index value)"]
    for i, v in enumerate(report.unique_vbase_offsets):
        lines.append(f"{i} {v}")
    lines.append("")
    lines.append("# offsets-to-top (index value)")
    for i, v in enumerate(report.unique_offsets_to_top):
        lines.append(f"{i} {v}")
    return "\n".join(lines) + "\n"


def plot_distribution(report: SurfaceReport, path: str) -> None:
    """Render the offset distribution as a two-strip scatter figure."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4.5, 5))
    for x, values, label in (
        (0, report.unique_vbase_offsets, "vbase-offset"),
        (1, report.unique_offsets_to_top, "offset-to-top"),
    ):
        ax.scatter([x] * len(values), values, marker="x", label=label)
    ax.set_xticks([0, 1], ["vbase-offset", "offset-to-top"])
    ax.set_xlim(-0.6, 1.6)
    ax.set_ylabel("byte offset")
    ax.set_title(
        f"{report.n_construction_vtables} construction vtables, "
        f"{len(report.unique_vbase_offsets)}/{len(report.unique_offsets_to_top)} unique offsets"
    )
    ax.axhline(0, linewidth=0.5, color="gray")
    ax.grid(True, axis="y", linewidth=0.3, alpha=0.5)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
