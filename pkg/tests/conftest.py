import time

import numpy as np
import pytest

from hofer_forge.shorten import ShorteningScenario, theorem_isolated_pipeline

_ACCEPTANCE = []


class AcceptanceLog:
    def record(self, criterion: str, ok: bool, detail: str):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return ok


@pytest.fixture(scope="session")
def acceptance():
    return AcceptanceLog()


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)


def _timed_pipeline(weights):
    sc = ShorteningScenario.from_weights(weights, 1.0, 0.9)
    t0 = time.perf_counter()
    res = theorem_isolated_pipeline(sc)
    return res, time.perf_counter() - t0


@pytest.fixture(scope="session")
def pipeline_31():
    return _timed_pipeline((3, 1))


@pytest.fixture(scope="session")
def pipeline_41():
    return _timed_pipeline((4, 1))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
