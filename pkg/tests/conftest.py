import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from virtrec import AnalysisConfig, run_scan

FIXTURES = Path(__file__).parent.parent / "fixtures"


def fixture_binary(name: str, variant: str = "") -> Path:
    path = FIXTURES / name / "bin" / f"{name}{variant}"
    if not path.exists():
        pytest.skip(f"golden binary {path} not built")
    return path


def fixture_file(name: str, filename: str) -> Path:
    path = FIXTURES / name / filename
    if not path.exists():
        pytest.skip(f"golden file {path} missing")
    return path


@pytest.fixture(scope="session")
def running_example_scan():
    return run_scan(fixture_binary("running_example"), AnalysisConfig())


@pytest.fixture(scope="session")
def chain_scans():
    return {
        n: run_scan(fixture_binary(f"chain{n}"), AnalysisConfig()) for n in (1, 2, 3)
    }


@pytest.fixture(scope="session")
def mixed_scan():
    return run_scan(fixture_binary("mixed"), AnalysisConfig())


@pytest.fixture(scope="session")
def allvirtual_scan():
    return run_scan(fixture_binary("allvirtual"), AnalysisConfig())


@pytest.fixture(scope="session")
def orphan_scan():
    return run_scan(fixture_binary("orphan_chain"), AnalysisConfig())
