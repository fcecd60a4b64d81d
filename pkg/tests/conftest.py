import numpy as np
import pytest

from gaugepoisson.gauge import join_state
from gaugepoisson.symmetry import random_base_points


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(1234))


def phase_points(rng, count, m=3, n=3, radius=(0.5, 3.0)):
    qs = random_base_points(m, count, rng, radius)
    return [join_state(rng.normal(size=m), q, rng.normal(size=n)) for q in qs]


def fiber_points(rng, count, m=3, n=3, radius=(0.5, 3.0)):
    return [(q, rng.normal(size=n)) for q in random_base_points(m, count, rng, radius)]


_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def acceptance():
    """Record one verdict line per acceptance criterion; printed in the terminal summary."""

    def record(number: int, title: str, passed: bool, detail: str = ""):
        _ACCEPTANCE[number] = (bool(passed), f"{title}: {detail}" if detail else title)
        line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'} {_ACCEPTANCE[number][1]}"
        print(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        passed, text = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if passed else 'FAIL'} {text}")
