import re

import numpy as np
import pytest

from fail_lfo.kernels import available_backends


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    key = lambda line: int(re.search(r"criterion (\d+)", line).group(1))
    for line in sorted(lines, key=key):
        terminalreporter.write_line(line)


@pytest.fixture
def record(request):
    """Run a criterion check, log a PASS/FAIL line and return ``(ok, detail)``."""

    def _run(k, fn):
        try:
            ok, detail = fn()
        except Exception as exc:  # report the crash as a failed criterion
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}"
        request.config._acceptance_lines.append(line)
        print(line)
        return ok, detail

    return _run


@pytest.fixture(params=available_backends())
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
