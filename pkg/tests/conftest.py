import itertools

import hypothesis.strategies as st
import pytest

from execlayer.domain import Channel, Event, EventKind, Job
from execlayer.plant import SimConfig

_seq = itertools.count(10_000)


def job(jid, arrival=0.0, p=5.0, due=None, w=1.0):
    return Job(jid, arrival, p, arrival + 10.0 if due is None else due, w)


def event(jid, kind, t, lag=0.0, seq=None, job_obj=None):
    channel = {
        EventKind.BLOCK_START: Channel.TRANSACTIONAL,
        EventKind.BLOCK_END: Channel.TRANSACTIONAL,
    }.get(kind, Channel.PHYSICAL)
    if kind is EventKind.ARRIVAL and job_obj is None:
        job_obj = job(jid, arrival=t)
    return Event(next(_seq) if seq is None else seq, channel, jid, kind, t, t + lag, job=job_obj)


@pytest.fixture
def quiet_config():
    """No disturbances, no lag."""
    return SimConfig(p_sys=0.0, p_phys=0.0, p_hum=0.0, lag_dist=(0.0, 0.0), horizon=200.0)


KINDS = list(EventKind)


@st.composite
def event_traces(draw, max_jobs=6, max_events=30):
    """Random observation traces with unique seqs and arbitrary delivery order."""
    n = draw(st.integers(0, max_events))
    events = []
    times = st.floats(0.0, 50.0, allow_nan=False).map(lambda x: round(x, 2))
    for seq in range(n):
        jid = draw(st.integers(0, max_jobs - 1))
        kind = draw(st.sampled_from(KINDS))
        t = draw(times)
        lag = draw(st.sampled_from([0.0, 0.0, 0.5, 1.0, 2.5]))
        events.append(event(jid, kind, t, lag, seq=seq))
    return events


# acceptance verdicts, echoed at the end of the run
ACCEPTANCE: dict[int, str] = {}


def verdict(n: int, label: str, ok: bool, detail: str = ""):
    line = f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {label}" + (f"  [{detail}]" if detail else "")
    ACCEPTANCE[n] = line
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
