import numpy as np
import pytest
from hypothesis import settings

from grouptest.model import GroundTruth, PoolingDesign

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def toy():
    """a1 = {x1, x2}, a2 = {x3} with x1 infected (0-based: 0, 1, 2)."""
    design = PoolingDesign.from_tests(3, [[0, 1], [2]])
    return design, GroundTruth(3, [0])


@pytest.fixture
def toy_exonerated():
    """a1 = {x1, x2}, a2 = {x2} with x1 infected; two individuals."""
    design = PoolingDesign.from_tests(2, [[0, 1], [1]])
    return design, GroundTruth(2, [0])


_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance criterion; returns the flag."""

    def record(criterion: str, passed: bool, detail: str) -> bool:
        line = f"{criterion} {'PASS' if passed else 'FAIL'}  {detail}"
        print(line)
        _VERDICTS.append(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
