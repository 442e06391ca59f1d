import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from bimq.fixture import FixtureSpec, generate_fixture
from bimq.store import Store, load_store


def pytest_runtest_logreport(report):
    """One live pass/fail line per acceptance criterion."""
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    outcome = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
    name = report.nodeid.split("::")[-1]
    print(f"[acceptance] {name}: {outcome}", file=sys.__stderr__)


@pytest.fixture(scope="session")
def hospital_doc() -> dict:
    return generate_fixture(FixtureSpec(categories=6, records=240), seed=7)


@pytest.fixture(scope="session")
def hospital_store(hospital_doc) -> Store:
    return load_store(hospital_doc)


@pytest.fixture()
def data_dir() -> Path:
    return Path(__file__).parent / "data"
