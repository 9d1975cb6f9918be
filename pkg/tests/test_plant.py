import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from execlayer.domain import CANCEL, Architecture, Channel, EventKind, PhysOutcome, SysOutcome
from execlayer.layer import simulate
from execlayer.plant import (
    LAG_PRESETS,
    DisturbancePlan,
    EventCalendar,
    JobDisturbances,
    Plant,
    SimConfig,
    emit_observation,
    generate_job,
    schedule_disturbances,
    substreams,
)
from execlayer.policies import select_edd, select_spt

from conftest import event, job


class MidpointRng:
    def uniform(self, lo, hi, size=None):
        return (lo + hi) / 2

    def integers(self, lo, hi):
        return lo


def test_generate_job_at_midpoints():
    cfg = SimConfig()
    rngs = {name: MidpointRng() for name in ("arrivals", "processing", "duedates", "weights")}
    j = generate_job(rngs, 0.0, 0, cfg)
    assert j.arrival_time == 8.0
    assert j.processing_time == 5.5
    assert j.due_date == 8.0 + 5.5 * 2.25
    assert j.weight == 1.0


def test_job_count_matches_renewal_rate():
    counts = [len(Plant.build(SimConfig(seed=s)).jobs) for s in range(50)]
    # renewal function: t/mu + (sigma^2 - mu^2) / (2 mu^2)
    mu, var = 8.0, 5.0**2 / 12
    expected = 2000 / mu + (var - mu**2) / (2 * mu**2)
    assert abs(np.mean(counts) - expected) < 2.0


def test_disturbed_fraction_matches_closed_form():
    cfg = SimConfig()
    rng = np.random.default_rng(7)
    n = 20_000
    hits = 0
    for i in range(n):
        d = schedule_disturbances(job(i), rng, cfg)
        hits += bool(d.plans) or d.override_armed
    expected = 1 - (1 - 0.14) * (1 - 0.10) * (1 - 0.07)
    assert expected == pytest.approx(0.28018, abs=1e-5)
    assert abs(hits / n - expected) < 4 * np.sqrt(expected * (1 - expected) / n)


def test_no_draws_hit_means_no_windows():
    cfg = SimConfig(p_sys=0.0, p_phys=0.0, p_hum=0.0)
    d = schedule_disturbances(job(0), np.random.default_rng(0), cfg)
    assert d.plans == () and not d.override_armed


def test_both_channels_give_two_windows():
    cfg = SimConfig(p_sys=1.0, p_phys=1.0, p_hum=0.0)
    d = schedule_disturbances(job(0), np.random.default_rng(0), cfg)
    assert {p.channel for p in d.plans} == {Channel.TRANSACTIONAL, Channel.PHYSICAL}


def test_zero_lag_observation():
    ev = emit_observation(event(0, EventKind.ARRIVAL, 3.0), np.random.default_rng(0), (0.0, 0.0))
    assert ev.visible_time == ev.true_time


@pytest.mark.parametrize(
    "preset,prob_late",
    [("medium", (1.5 - 0.85) / (1.5 - 0.1)), ("high", 1 - (0.85 - 0.5) / (3.0 - 0.5))],
)
def test_lag_vs_decision_window(preset, prob_late):
    rng = np.random.default_rng(11)
    base = event(0, EventKind.BLOCK_START, 0.0)
    n = 50_000
    late = sum(emit_observation(base, rng, LAG_PRESETS[preset]).visible_time > 0.85 for _ in range(n))
    assert abs(late / n - prob_late) < 4 * np.sqrt(prob_late * (1 - prob_late) / n)


def _arrival_plant(windows, armed=(), n_jobs=3):
    cfg = SimConfig(window_anchor="arrival", lag_dist=(0.0, 0.0), horizon=100.0)
    dist = {}
    for jid in range(n_jobs):
        plans = tuple(
            DisturbancePlan(jid, ch, off, dur, 0.0, 0.0) for (j, ch, off, dur) in windows if j == jid
        )
        dist[jid] = JobDisturbances(plans, jid in armed)
    jobs = [job(i, arrival=0.0, p=2.0, due=10.0 + i) for i in range(n_jobs)]
    return Plant.scripted(cfg, jobs, dist)


def test_true_admissible_half_open():
    plant = _arrival_plant([(0, Channel.TRANSACTIONAL, 1.0, 2.0)])
    assert plant.true_admissible(1, 1.5) == (True, True)
    assert plant.true_admissible(0, 0.5) == (True, True)
    assert plant.true_admissible(0, 1.0) == (False, True)
    assert plant.true_admissible(0, 2.999) == (False, True)
    assert plant.true_admissible(0, 3.0) == (True, True)
    with pytest.raises(KeyError):
        plant.true_admissible(99, 0.0)


def test_adjudicate_clean():
    plant = _arrival_plant([])
    res = plant.adjudicate_commit(0, 1.0)
    assert (res.sys_outcome, res.phys_outcome, res.human) == (SysOutcome.ACCEPTED, PhysOutcome.STARTED, None)
    assert plant.busy_until == 3.0
    with pytest.raises(RuntimeError):
        plant.adjudicate_commit(1, 2.0)


def test_adjudicate_rejection_costs_reject_delay():
    plant = _arrival_plant([(0, Channel.TRANSACTIONAL, 0.0, 5.0)])
    res = plant.adjudicate_commit(0, 1.0)
    assert (res.sys_outcome, res.phys_outcome, res.human) == (SysOutcome.REJECTED, PhysOutcome.NOT_ATTEMPTED, None)
    assert plant.busy_until == 1.0 + plant.config.reject_delay
    assert res.blocking[0].kind is EventKind.BLOCK_START


def test_adjudicate_combined_and_physical():
    plant = _arrival_plant([
        (0, Channel.TRANSACTIONAL, 0.0, 5.0),
        (0, Channel.PHYSICAL, 0.0, 5.0),
        (1, Channel.PHYSICAL, 0.0, 50.0),
    ])
    res = plant.adjudicate_commit(0, 1.0)
    assert (res.sys_outcome, res.phys_outcome) == (SysOutcome.REJECTED, PhysOutcome.FAULT)
    res = plant.adjudicate_commit(1, plant.busy_until)
    assert (res.sys_outcome, res.phys_outcome) == (SysOutcome.ACCEPTED, PhysOutcome.FAULT)
    assert plant.in_service is None


def test_override_redirects_to_earliest_due_admissible():
    plant = _arrival_plant([(1, Channel.TRANSACTIONAL, 0.0, 5.0)], armed={0})
    res = plant.adjudicate_commit(0, 1.0, redirect_pool=(0, 1, 2))
    # job 1 has the earlier due date but is truly blocked
    assert (res.sys_outcome, res.phys_outcome, res.human) == (SysOutcome.ACCEPTED, PhysOutcome.NOT_ATTEMPTED, 2)
    assert plant.in_service == 2


def test_override_cancels_without_alternatives_and_fires_once():
    plant = _arrival_plant([], armed={0}, n_jobs=1)
    res = plant.adjudicate_commit(0, 1.0, redirect_pool=(0,))
    assert res.human == CANCEL and res.phys_outcome is PhysOutcome.NOT_ATTEMPTED
    assert plant.idle_at(1.0)
    res = plant.adjudicate_commit(0, 2.0, redirect_pool=(0,))
    assert res.human is None and res.phys_outcome is PhysOutcome.STARTED


def test_calendar_orders_by_visible_time_then_seq():
    evs = [event(0, EventKind.ARRIVAL, 1.0, seq=6), event(1, EventKind.ARRIVAL, 1.0, seq=5),
           event(2, EventKind.ARRIVAL, 0.5, lag=0.5, seq=7), event(3, EventKind.ARRIVAL, 0.2, seq=9)]
    cal = EventCalendar(evs)
    assert [cal.pop().seq for _ in range(4)] == [9, 5, 6, 7]
    with pytest.raises(ValueError):
        cal.push(event(4, EventKind.ARRIVAL, 0.1))


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(p_sys=1.5)
    with pytest.raises(ValueError):
        SimConfig(lag_dist=(2.0, 1.0))
    with pytest.raises(ValueError):
        SimConfig(horizon=0)


def _service_intervals(out):
    return sorted((j.completion_time - j.processing_time, j.completion_time) for j in out.completed_jobs)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), lag=st.sampled_from(list(LAG_PRESETS)),
       arch=st.sampled_from(list(Architecture)), policy=st.sampled_from([select_edd, select_spt]))
def test_simulation_invariants(seed, lag, arch, policy):
    cfg = SimConfig(seed=seed, lag_dist=LAG_PRESETS[lag], horizon=400.0)
    out = simulate(cfg, policy, arch, keep_trace=True)
    plant = out.plant
    # conservation: arrivals = completions + in service + dispatched-pending + never dispatched
    completed = set(plant.completed)
    assert plant.in_service is None  # jobs in service at the horizon run to completion
    assert plant.dispatched == completed
    never = set(plant.jobs) - plant.dispatched
    assert len(plant.jobs) == len(completed) + len(never)
    # non-preemption
    intervals = _service_intervals(out)
    for (s0, e0), (s1, e1) in zip(intervals, intervals[1:]):
        assert e0 <= s1 + 1e-9
    # lag bounds
    lo, hi = cfg.lag_dist
    for ev in out.trace:
        assert lo - 1e-12 <= ev.visible_time - ev.true_time <= hi + 1e-12


def test_determinism_bit_identical_trace():
    cfg = SimConfig(seed=123, lag_dist=LAG_PRESETS["high"], horizon=500.0)
    a = simulate(cfg, select_edd, Architecture.LAYER, keep_trace=True)
    b = simulate(cfg, select_edd, Architecture.LAYER, keep_trace=True)
    assert [e.trace_line() for e in a.trace] == [e.trace_line() for e in b.trace]
    assert a.records == b.records


def test_common_random_numbers_across_cells():
    cfg = SimConfig(seed=99)
    plants = [simulate(cfg, pol, arch).plant for arch in Architecture for pol in (select_edd, select_spt)]
    ref = plants[0]
    for p in plants[1:]:
        assert p.jobs == ref.jobs
        assert p.disturbances == ref.disturbances
        assert [e.trace_line() for e in p.exogenous] == [e.trace_line() for e in ref.exogenous]


def test_substreams_are_independent_of_each_other():
    a = substreams(5)
    b = substreams(5)
    b["lags"].random(1000)  # consuming one stream leaves the others alone
    assert a["arrivals"].random() == b["arrivals"].random()
