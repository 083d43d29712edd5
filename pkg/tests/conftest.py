import math

import pytest
from hypothesis import settings

from camot.geometry import CameraIntrinsics

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

# acceptance criteria report one line each at the end of the run
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def record(key: str, ok: bool, detail: str) -> None:
    ACCEPTANCE[key] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k.split()[1].rstrip("ab")), k)):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {key}: {detail}")


@pytest.fixture
def cam():
    return CameraIntrinsics(1000.0, 960.0, 540.0, 1920, 1080)


def deg(x):
    return math.radians(x)
