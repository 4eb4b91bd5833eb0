import pytest

from ebqkd.photonics import LinkParams, SessionConfig, SourceParams, simulate_session

_CRITERIA = []


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(number, title, passed, detail)``."""

    def record(number, title, passed, detail=""):
        _CRITERIA.append((number, title, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(_CRITERIA, key=lambda c: c[0]):
        mark = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{mark}] {number}. {title}: {detail}")


REFERENCE_SOURCE = SourceParams(polarization_error_prob=0.065)
LINK_A = LinkParams(29.0, 100.0)
LINK_B = LinkParams(21.0, 100.0)


@pytest.fixture(scope="session")
def reference_session():
    """A 60 s session at reference losses with a known clock offset."""
    session = SessionConfig(60.0, 0.8, seed=2024, clock_offset_ps=12_345_678)
    a, b, truth = simulate_session(REFERENCE_SOURCE, LINK_A, LINK_B, session)
    return a, b, truth, session
