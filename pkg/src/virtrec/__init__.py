"""virtrec: recover C++ virtual inheritance from stripped binaries.

Identifies VTables, VTTs, subVTTs, virtual-base offsets, and constructors;
separates construction vtables from regular ones; and rebuilds the class
hierarchy with virtual, intermediate, and direct edges for both the
Itanium and MSVC ABIs.
"""

from .config import AnalysisConfig
from .image import Abi, BinaryImage, Section, SectionKind, load
from .pipeline import AnalysisResult, report_dict, report_json, run_scan, to_dot

__version__ = "0.1.0"

__all__ = [
    "Abi",
    "AnalysisConfig",
    "AnalysisResult",
    "BinaryImage",
    "Section",
    "SectionKind",
    "load",
    "report_dict",
    "report_json",
    "run_scan",
    "to_dot",
    "__version__",
]
