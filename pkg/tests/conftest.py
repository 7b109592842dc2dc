import time

import numpy as np
import pytest

# one line per acceptance criterion, filled by tests/test_acceptance.py
ACCEPTANCE_LINES: list = []


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


class _Recorder:
    def __init__(self, label: str, budget: float):
        self.label = label
        self.budget = budget
        self.start = time.perf_counter()

    def done(self, ok: bool, detail: str) -> bool:
        elapsed = time.perf_counter() - self.start
        in_time = elapsed <= self.budget
        verdict = "PASS" if ok and in_time else "FAIL"
        timing = f"{elapsed:.1f}s of {self.budget:.0f}s" + ("" if in_time else " (over budget)")
        line = f"[{verdict}] {self.label}: {detail} [{timing}]"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok and in_time


@pytest.fixture
def criterion():
    return _Recorder


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("]")[1].split()[0].rstrip("abc."))):
            terminalreporter.write_line(line)
