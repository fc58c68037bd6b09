import math

import pytest

from pegsim.lumped_model import REFERENCE_PIEZO

# Drive amplitudes giving a 1 mW Standard maximum on the reference insert,
# from P_max = alpha^2 omega U^2 / (2 pi c0) solved for U.
MODE_FREQS = (56.0, 334.0, 915.0)


def one_mw_amplitude(freq, p=REFERENCE_PIEZO):
    return math.sqrt(1e-3 * 2 * math.pi * p.c0 / (p.alpha**2 * 2 * math.pi * freq))


@pytest.fixture
def piezo():
    return REFERENCE_PIEZO


# Acceptance results, one line per criterion, echoed in the terminal summary.
ACCEPTANCE_LINES = {}


def record_criterion(number, ok, detail):
    ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
