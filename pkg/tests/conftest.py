"""Shared test setup.

The thread-count determinism contracts need more than one worker to be
meaningful, and numba fixes its thread pool size at first import. Ask for
4 workers up front so single-core CI machines still exercise parallel
scheduling (oversubscription is harmless for correctness checks).
"""
import os

os.environ.setdefault("NUMBA_NUM_THREADS", "4")

import numpy as np  # noqa: E402
import pytest  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture(scope="session")
def acceptance(pytestconfig):
    """Collects one verdict line per acceptance criterion; the lines are
    echoed in the terminal summary so they survive output capture."""
    def report(name: str, ok: bool, detail: str) -> bool:
        line = f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'} ({detail})"
        pytestconfig._acceptance_lines.append(line)
        print(line)
        return ok
    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in lines:
        terminalreporter.write_line(line)
