import time
from contextlib import contextmanager

import pytest

_CRITERIA = []


@pytest.fixture
def criterion():
    """Context manager timing one acceptance criterion; records a pass/fail
    line that is printed at the end of the run."""
    @contextmanager
    def check(label, title, limit=None):
        t0 = time.perf_counter()
        ok = False
        try:
            yield
            ok = True
        finally:
            dt = time.perf_counter() - t0
            fast = limit is None or dt < limit
            status = "PASS" if ok and fast else "FAIL"
            bound = f", limit {limit:g} s" if limit else ""
            line = f"criterion {label}: {status}  {title} ({dt:.1f} s{bound})"
            _CRITERIA.append((str(label), line))
            print(line)
        assert fast, f"runtime {dt:.1f} s over the {limit} s limit"
    return check


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_CRITERIA, key=lambda t: (int(t[0].split()[0]), t[0])):
            terminalreporter.write_line(line)
