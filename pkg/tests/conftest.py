import numpy as np
import pytest

from qposture.synth import generate_motion, preset

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one acceptance line; the summary prints them all at the end."""

    def _report(criterion: str, passed: bool, detail: str = "") -> None:
        line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'}" + (f"  ({detail})" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def stand_frame():
    seq = generate_motion(preset("stand", duration=0.1))
    return seq[0]


@pytest.fixture(scope="session")
def squat_seq():
    return generate_motion(preset("squat"))


@pytest.fixture(scope="session")
def jack_seq():
    return generate_motion(preset("jumping jack"))

