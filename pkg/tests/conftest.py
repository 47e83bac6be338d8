from __future__ import annotations

from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

FIXTURES = Path(__file__).parent / "fixtures"

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def fixtures() -> Path:
    return FIXTURES


# criterion number -> outcome of each of its checks, filled by test_acceptance
ACCEPTANCE: dict[int, list[bool]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        results = ACCEPTANCE[number]
        status = "PASS" if all(results) else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {status} ({sum(results)}/{len(results)} checks)")
