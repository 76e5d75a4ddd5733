import zlib

import numpy as np
import pytest

CRITERIA = pytest.StashKey[dict]()


@pytest.fixture
def rng(request):
    # one independent, reproducible stream per test
    return np.random.default_rng(zlib.crc32(request.node.nodeid.encode()))


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(number, name, passed, detail)``."""
    lines = request.config.stash.setdefault(CRITERIA, {})

    def record(number: int, name: str, passed: bool, detail: str = "") -> bool:
        line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {name}: {detail}"
        lines[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(CRITERIA, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(lines):
        terminalreporter.write_line(lines[number])
    passed = sum(" PASS " in line for line in lines.values())
    terminalreporter.write_line(f"{passed}/{len(lines)} criteria passed")
