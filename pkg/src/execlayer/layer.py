"""Execution and measurement layer.

Observation events are folded into an :class:`ExecutionCache`. When the
machine is idle and something looks dispatchable, :func:`run_epoch` latches
an immutable snapshot, builds the decision request, asks the policy for an
intent and holds it for the decision window. In layer mode any delivered
event that makes the intent inadmissible aborts the decision and triggers a
re-isolation; after ``max_reisolations`` aborts the fallback rule commits
immediately. At commit the plant adjudicates and a typed
:class:`DivergenceRecord` is produced.

Direct mode runs the same pipeline without the invalidation monitor.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, replace
from typing import Callable

from .domain import (
    Architecture,
    DecisionRequest,
    DivergenceRecord,
    Event,
    EventKind,
    Job,
    JobStatus,
    JobView,
    PhysOutcome,
    Snapshot,
    SysOutcome,
    Visibility,
    classify_visibility,
)
from .plant import EventCalendar, Plant, SimConfig
from .policies import Policy, select_fallback

log = logging.getLogger(__name__)

RESOURCE = "M1"

_HOLD_DELTA = {
    EventKind.BLOCK_START: ("tx_holds", 1),
    EventKind.BLOCK_END: ("tx_holds", -1),
    EventKind.FAULT_START: ("phys_holds", 1),
    EventKind.FAULT_END: ("phys_holds", -1),
}


class Verdict(enum.Enum):
    KEEP = "keep"
    ABORT = "abort"


class ExecutionCache:
    """Continuously updated scheduler-side state.

    ``job_views`` only ever holds frozen :class:`JobView` values, so copying
    the mapping is enough to isolate a snapshot.
    """

    def __init__(self):
        self.job_views: dict[int, JobView] = {}
        self.last_applied: tuple[float, int] = (float("-inf"), -1)
        self._waiting: set[int] = set()

    def ingest(self, event: Event) -> ExecutionCache:
        key = event.delivery_key
        if key <= self.last_applied:
            raise ValueError(f"watermark regression: {key} after {self.last_applied}")
        self.last_applied = key
        jid = event.job_id
        view = self.job_views.get(jid) or JobView(jid)
        t = event.visible_time
        if event.kind is EventKind.ARRIVAL:
            view = replace(view, job=event.job, as_of=t)
        elif event.kind is EventKind.COMPLETION:
            view = replace(view, status=JobStatus.COMPLETED, as_of=t)
        else:
            attr, delta = _HOLD_DELTA[event.kind]
            view = replace(view, **{attr: getattr(view, attr) + delta}, as_of=t)
        self._store(view)
        return self

    def mark_dispatched(self, job_id: int, t: float):
        """Record the layer's own accepted dispatch (not a lagged observation)."""
        view = self.job_views.get(job_id) or JobView(job_id)
        if view.status is JobStatus.WAITING:
            self._store(replace(view, status=JobStatus.DISPATCHED, as_of=max(view.as_of, t)))

    def _store(self, view: JobView):
        self.job_views[view.job_id] = view
        if view.arrived and view.status is JobStatus.WAITING:
            self._waiting.add(view.job_id)
        else:
            self._waiting.discard(view.job_id)

    def candidates(self) -> tuple[int, ...]:
        views = self.job_views
        return tuple(sorted(j for j in self._waiting if views[j].readiness.ready))

    @property
    def watermark_time(self) -> float:
        return self.last_applied[0]


def ingest_event(cache: ExecutionCache, event: Event) -> ExecutionCache:
    return cache.ingest(event)


def latch_snapshot(cache: ExecutionCache, t: float, resource: str = RESOURCE, epoch: int = 0) -> Snapshot:
    if cache.watermark_time > t:
        raise ValueError(f"cache already holds events delivered after {t}")
    return Snapshot(epoch=epoch, latch_time=t, resource=resource, job_views=cache.job_views)


def compute_candidates(s: Snapshot) -> tuple[int, ...]:
    """Jobs observed arrived, waiting, transactionally and physically ready."""
    return tuple(
        sorted(
            jid
            for jid, v in s.job_views.items()
            if v.arrived and v.status is JobStatus.WAITING and v.readiness.ready
        )
    )


@dataclass(frozen=True)
class PendingDecision:
    request: DecisionRequest
    intent: int
    latch_time: float
    commit_due: float
    retries: int = 0


def check_invalidation(pending: PendingDecision, event: Event) -> Verdict:
    """Abort only on events that take the intended job out of admissibility."""
    if event.job_id != pending.intent:
        return Verdict.KEEP
    if event.kind in (EventKind.BLOCK_START, EventKind.FAULT_START, EventKind.COMPLETION):
        return Verdict.ABORT
    return Verdict.KEEP


@dataclass
class EpochResult:
    record: DivergenceRecord | None
    relatches: int = 0
    fallback: bool = False
    started: int | None = None


def _drain(calendar: EventCalendar, cache: ExecutionCache, t: float, trace: list | None):
    while calendar.peek_time() <= t:
        ev = calendar.pop()
        cache.ingest(ev)
        if trace is not None:
            trace.append(ev)
    calendar.advance(max(calendar.now, t))


def run_epoch(
    calendar: EventCalendar,
    cache: ExecutionCache,
    policy: Policy,
    plant: Plant,
    mode: Architecture,
    epoch: int = 0,
    trace: list | None = None,
    fallback: Callable[[DecisionRequest], int] = select_fallback,
) -> EpochResult:
    """One dispatch epoch at ``calendar.now``; the machine must be idle."""
    config = plant.config
    t = calendar.now
    if not plant.idle_at(t):
        raise RuntimeError(f"dispatch epoch opened while machine busy at {t}")
    _drain(calendar, cache, t, trace)
    relatches = 0
    used_fallback = False
    while True:
        snapshot = latch_snapshot(cache, t, RESOURCE, epoch)
        candidates = compute_candidates(snapshot)
        if not candidates:
            return EpochResult(None, relatches)
        request = DecisionRequest(snapshot, RESOURCE, candidates)
        if used_fallback:
            intent = fallback(request)
            commit_time = t
            for ev in plant.note_intent(intent, t):
                calendar.push(ev)
        else:
            intent = policy(request)
            if intent not in candidates:
                raise RuntimeError(f"policy chose {intent}, not in candidate set {candidates}")
            for ev in plant.note_intent(intent, t):
                calendar.push(ev)
            pending = PendingDecision(request, intent, t, t + config.decision_window, relatches)
            abort_at = None
            while calendar.peek_time() <= pending.commit_due:
                ev = calendar.pop()
                cache.ingest(ev)
                if trace is not None:
                    trace.append(ev)
                if mode is Architecture.LAYER and check_invalidation(pending, ev) is Verdict.ABORT:
                    abort_at = ev.visible_time
                    break
            if abort_at is not None:
                # pick up any other deliveries stamped with the same instant
                _drain(calendar, cache, abort_at, trace)
                t = abort_at
                if relatches >= config.max_reisolations:
                    log.debug("epoch %d: re-isolation budget spent, falling back", epoch)
                    used_fallback = True
                else:
                    relatches += 1
                continue
            calendar.advance(pending.commit_due)
            commit_time = pending.commit_due

        if commit_time >= config.horizon:
            # decisions still pending at the horizon are abandoned
            return EpochResult(None, relatches, used_fallback)
        outcome = plant.adjudicate_commit(intent, commit_time, redirect_pool=candidates)
        if outcome.started is not None:
            cache.mark_dispatched(outcome.started, commit_time)
        clean = outcome.sys_outcome is SysOutcome.ACCEPTED and outcome.phys_outcome is PhysOutcome.STARTED \
            and outcome.human is None
        record = DivergenceRecord(
            epoch=epoch,
            intent=intent,
            sys_outcome=outcome.sys_outcome,
            phys_outcome=outcome.phys_outcome,
            human=outcome.human,
            # operator interventions have no observable precursor
            visibility=Visibility.NOT_APPLICABLE if clean else Visibility.HIDDEN,
            commit_time=commit_time,
            architecture=mode,
            fallback=used_fallback,
        )
        if not clean and outcome.blocking and record.human is None:
            first_seen = min(outcome.blocking, key=lambda e: e.delivery_key)
            record = replace(record, visibility=classify_visibility(record, snapshot, first_seen))
        return EpochResult(record, relatches, used_fallback, outcome.started)


@dataclass
class SimulationOutput:
    config: SimConfig
    mode: Architecture
    records: list[DivergenceRecord] = field(default_factory=list)
    completed_jobs: list[Job] = field(default_factory=list)
    dispatch_sequence: list[int] = field(default_factory=list)
    relatches: list[int] = field(default_factory=list)
    trace: list[Event] | None = None
    plant: Plant | None = None


def simulate(
    config: SimConfig,
    policy: Policy,
    mode: Architecture,
    keep_trace: bool = False,
    plant: Plant | None = None,
) -> SimulationOutput:
    """Run one replication end to end (on ``plant`` if one is given)."""
    if plant is None:
        plant = Plant.build(config)
    config = plant.config
    calendar = EventCalendar(plant.exogenous)
    cache = ExecutionCache()
    trace: list[Event] | None = [] if keep_trace else None
    out = SimulationOutput(config, mode, trace=trace, plant=plant)
    epoch = 0
    while True:
        now = calendar.now
        if not plant.idle_at(now):
            t_free = plant.busy_until
            if calendar.peek_time() <= t_free:
                _drain(calendar, cache, calendar.peek_time(), trace)
                continue
            calendar.advance(t_free)
            if plant.in_service is not None:
                calendar.push(plant.finish_service())
            continue
        _drain(calendar, cache, now, trace)
        if now >= config.horizon:
            break
        if cache.candidates():
            res = run_epoch(calendar, cache, policy, plant, mode, epoch, trace)
            out.relatches.append(res.relatches)
            if res.record is not None:
                out.records.append(res.record)
                epoch += 1
            if res.started is not None:
                out.dispatch_sequence.append(res.started)
            continue
        if not len(calendar):
            break
        _drain(calendar, cache, calendar.peek_time(), trace)
    out.completed_jobs = plant.completed_jobs()
    return out
