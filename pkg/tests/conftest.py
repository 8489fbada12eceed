import pytest

from repute.core import EngineConfig, RatingKind, RatingRecord, ReputationState


def rec(kind, rater, ratee, time=1, value=1.0, weight=1.0, aspect=None, category=None, event=None):
    return RatingRecord(RatingKind(kind), rater, ratee, time, value, weight, aspect, category, event)


def state(entries=None, as_of=0, origin=0):
    return ReputationState(as_of=as_of, origin=origin, entries=dict(entries or {}))


@pytest.fixture
def config():
    return EngineConfig()


# acceptance criterion results, one line each, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
