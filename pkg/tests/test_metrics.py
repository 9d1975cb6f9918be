import math
import warnings

import pytest
from hypothesis import given
from hypothesis import strategies as st

from execlayer.domain import CANCEL, Architecture, DivergenceRecord, Job, Outcome, PhysOutcome, SysOutcome, Visibility
from execlayer.metrics import (
    RunResult,
    aggregate,
    attribution_coverage,
    composition_by_type,
    count_invalid,
    count_visible,
    throughput,
    weighted_tardiness,
)


def done(jid, c, d, w, arrival=0.0, p=1.0):
    return Job(jid, arrival, p, d, w, completion_time=c)


def result(jobs=(), records=(), arch=Architecture.LAYER, horizon=2000.0, cutoff=0.0):
    return RunResult(tuple(records), tuple(jobs), 0, "medium", "edd", arch, horizon, cutoff)


def rec(sys_o, phys_o, human=None, vis=Visibility.HIDDEN, t=500.0, arch=Architecture.LAYER):
    clean = sys_o is SysOutcome.ACCEPTED and phys_o is PhysOutcome.STARTED and human is None
    return DivergenceRecord(0, 1, sys_o, phys_o, human, Visibility.NOT_APPLICABLE if clean else vis, t, arch)


THREE = [done(0, 10, 8, 2), done(1, 5, 6, 1), done(2, 12, 12, 3)]


def test_weighted_tardiness_hand_case():
    assert weighted_tardiness(result(THREE)) == pytest.approx(4 / 3, abs=1e-9)


def test_all_early_is_zero():
    assert weighted_tardiness(result([done(0, 3, 8, 2), done(1, 5, 6, 1)])) == 0.0


def test_no_jobs_warns_and_returns_zero():
    with pytest.warns(RuntimeWarning):
        assert weighted_tardiness(result()) == 0.0


def test_warmup_excludes_early_completions():
    jobs = [done(0, 50, 10, 1), done(1, 200, 190, 1)]
    assert weighted_tardiness(result(jobs, cutoff=100.0)) == 10.0


jobs_st = st.lists(
    st.tuples(st.floats(1, 100), st.floats(0, 100), st.integers(1, 5)), min_size=1, max_size=30
).map(lambda xs: [done(i, c, d, float(w)) for i, (c, d, w) in enumerate(xs)])


@given(jobs_st, st.floats(0.1, 10))
def test_weight_scaling_linear(jobs, c):
    scaled = [Job(j.id, j.arrival_time, j.processing_time, j.due_date, j.weight * c, j.completion_time) for j in jobs]
    base = weighted_tardiness(result(jobs))
    assert weighted_tardiness(result(scaled)) == pytest.approx(c * base, rel=1e-9, abs=1e-9)
    assert base >= 0


def test_throughput():
    jobs = [done(i, 100.5 + i, 1e4, 1) for i in range(238)]
    assert throughput(result(jobs, cutoff=100.0)) == pytest.approx(238 / 1900)
    assert throughput(result([], cutoff=100.0)) == 0.0


def test_throughput_counts_only_the_measured_window():
    jobs = [done(0, 50.0, 1e4, 1), done(1, 1500.0, 1e4, 1), done(2, 2003.0, 1e4, 1)]
    assert throughput(result(jobs, cutoff=100.0)) == pytest.approx(1 / 1900)


def test_counts_and_coverage():
    records = [
        rec(SysOutcome.ACCEPTED, PhysOutcome.STARTED),
        rec(SysOutcome.REJECTED, PhysOutcome.NOT_ATTEMPTED, vis=Visibility.VISIBLE),
        rec(SysOutcome.ACCEPTED, PhysOutcome.FAULT),
        rec(SysOutcome.REJECTED, PhysOutcome.FAULT),
        rec(SysOutcome.ACCEPTED, PhysOutcome.NOT_ATTEMPTED, human=CANCEL),
        rec(SysOutcome.ACCEPTED, PhysOutcome.NOT_ATTEMPTED, human=4),
        rec(SysOutcome.REJECTED, PhysOutcome.NOT_ATTEMPTED, t=10.0),  # warm-up
    ]
    r = result(records=records, cutoff=100.0)
    assert count_invalid(r) == 5
    assert count_visible(r) == 1
    assert attribution_coverage(r) == 1.0
    comp = composition_by_type(r)
    assert comp == {Outcome.TRANSACTIONAL: 1, Outcome.PHYSICAL: 1, Outcome.COMBINED: 1, Outcome.HUMAN_OVERRIDE: 2}
    assert sum(comp.values()) == count_invalid(r)
    d = result(records=[replace_arch(x) for x in records], arch=Architecture.DIRECT, cutoff=100.0)
    assert attribution_coverage(d) == 0.0
    assert composition_by_type(d) == {}
    assert count_invalid(d) == 5


def replace_arch(r):
    from dataclasses import replace
    return replace(r, architecture=Architecture.DIRECT)


def test_all_clean():
    r = result(records=[rec(SysOutcome.ACCEPTED, PhysOutcome.STARTED)] * 3)
    assert count_invalid(r) == 0 and count_visible(r) == 0
    assert attribution_coverage(r) == 1.0
    assert composition_by_type(r) == {}


def test_aggregate():
    s = aggregate([5, 5, 5, 5])
    assert (s.mean, s.half_width_95, s.n) == (5.0, 0.0, 4)
    s = aggregate([1, 3])
    assert s.mean == 2.0
    assert s.half_width_95 == 1.96
    with pytest.raises(ValueError):
        aggregate([1.0])


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=40))
def test_aggregate_half_width_nonnegative(xs):
    s = aggregate(xs)
    assert s.half_width_95 >= 0
    assert min(xs) - 1e-6 <= s.mean <= max(xs) + 1e-6


def test_run_result_rejects_impossible_completion():
    with pytest.raises(ValueError):
        result([done(0, 2100.0, 1e4, 1)])
