from pathlib import Path

import pytest
from hypothesis import settings

settings.register_profile("ci", max_examples=40, deadline=None)
settings.load_profile("ci")

ROOT = Path(__file__).resolve().parent.parent
EXPERIMENTS = ROOT / "experiments"

CRITERIA: dict = {}


@pytest.fixture
def record_criterion():
    def record(number: int, name: str, ok: bool, detail: str = ""):
        CRITERIA[number] = (name, bool(ok), detail)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        name, ok, detail = CRITERIA[number]
        line = f"criterion {number:2d} {name}: {'PASS' if ok else 'FAIL'}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)
