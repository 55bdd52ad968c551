import numpy as np
import pytest

from spheroscat import ModeProvider

CRITERIA = {
    1: "free-field equivalence",
    2: "boundary-condition residuals",
    3: "CLI reproduction of the hard prolate example",
    4: "special-function invariants",
    5: "limits and symmetries",
    6: "coefficient cache",
}

# criterion -> list of (check, passed, detail)
_RESULTS: dict = {k: [] for k in CRITERIA}


class Recorder:
    def __call__(self, criterion: int, check: str, passed: bool, detail: str = "") -> bool:
        _RESULTS[criterion].append((check, bool(passed), detail))
        return bool(passed)


@pytest.fixture(scope="session")
def acceptance():
    return Recorder()


@pytest.fixture(scope="session")
def shared_provider():
    # modes are reused across tests on the same (kind, c)
    return ModeProvider()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    if not any(_RESULTS.values()):
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k, title in CRITERIA.items():
        rows = _RESULTS[k]
        if not rows:
            tr.write_line(f"criterion {k} ({title}): NOT RUN")
            continue
        bad = [r for r in rows if not r[1]]
        flag = "PASS" if not bad else "FAIL"
        tr.write_line(f"criterion {k} ({title}): {flag}  [{len(rows) - len(bad)}/{len(rows)} checks]")
        for check, ok, detail in rows:
            tr.write_line(f"    {'ok  ' if ok else 'FAIL'} {check}: {detail}")
