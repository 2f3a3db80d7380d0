import contextlib
import time

import pytest

_LINES = pytest.StashKey[dict]()


class CriterionLog:
    """Records one PASS/FAIL line per acceptance criterion."""

    def __init__(self, store: dict):
        self._store = store

    @contextlib.contextmanager
    def check(self, number: int, title: str):
        start = time.perf_counter()
        notes: list[str] = []
        try:
            yield notes
        except BaseException as exc:
            msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
            self._record(number, f"FAIL criterion {number:>2} ({title}): {msg}", start)
            raise
        detail = f"; {'; '.join(notes)}" if notes else ""
        self._record(number, f"PASS criterion {number:>2} ({title}){detail}", start)

    def _record(self, number, line, start):
        line = f"{line} [{time.perf_counter() - start:.1f}s]"
        self._store[number] = line
        print(line)


@pytest.fixture
def criterion(request):
    return CriterionLog(request.config.stash.setdefault(_LINES, {}))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
