"""Core data model: jobs, observation events, snapshots, decision requests
and divergence records.

Everything here is an immutable value. Behaviour is limited to validation,
outcome classification and serialization.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

CANCEL = "cancel"


class Channel(str, enum.Enum):
    PHYSICAL = "physical"
    TRANSACTIONAL = "transactional"
    HUMAN = "human"


class EventKind(str, enum.Enum):
    ARRIVAL = "arrival"
    BLOCK_START = "block_start"
    BLOCK_END = "block_end"
    FAULT_START = "fault_start"
    FAULT_END = "fault_end"
    COMPLETION = "completion"


class SysOutcome(str, enum.Enum):
    ACCEPTED = "accepted"
    REJECTED = "rejected"


class PhysOutcome(str, enum.Enum):
    STARTED = "started"
    FAULT = "fault"
    NOT_ATTEMPTED = "not_attempted"


class Visibility(str, enum.Enum):
    NOT_APPLICABLE = "n/a"
    VISIBLE = "visible"
    HIDDEN = "hidden"


class Architecture(str, enum.Enum):
    DIRECT = "direct"
    LAYER = "layer"


class Outcome(str, enum.Enum):
    CLEAN = "clean"
    TRANSACTIONAL = "transactional"
    PHYSICAL = "physical"
    COMBINED = "combined"
    HUMAN_OVERRIDE = "human_override"


DISTURBED_OUTCOMES = (
    Outcome.TRANSACTIONAL,
    Outcome.PHYSICAL,
    Outcome.COMBINED,
    Outcome.HUMAN_OVERRIDE,
)


class JobStatus(str, enum.Enum):
    WAITING = "waiting"
    DISPATCHED = "dispatched"
    COMPLETED = "completed"


@dataclass(frozen=True)
class Job:
    id: int
    arrival_time: float
    processing_time: float
    due_date: float
    weight: float
    completion_time: float | None = None

    def __post_init__(self):
        if not self.processing_time > 0:
            raise ValueError(f"job {self.id}: processing_time must be > 0")
        if not self.weight > 0:
            raise ValueError(f"job {self.id}: weight must be > 0")
        if self.due_date < self.arrival_time:
            raise ValueError(f"job {self.id}: due_date precedes arrival_time")
        if self.completion_time is not None:
            earliest = self.arrival_time + self.processing_time
            # relative slack for float round-off in start + processing
            if self.completion_time < earliest - 1e-9 * max(1.0, abs(earliest)):
                raise ValueError(f"job {self.id}: completion before arrival + processing")

    def tardiness(self) -> float:
        if self.completion_time is None:
            raise ValueError(f"job {self.id} has not completed")
        return max(0.0, self.completion_time - self.due_date)


@dataclass(frozen=True)
class ReadinessState:
    transactional_ready: bool = True
    physical_ready: bool = True
    as_of: float = 0.0

    @property
    def ready(self) -> bool:
        return self.transactional_ready and self.physical_ready


@dataclass(frozen=True)
class Event:
    """A plant state change. ``visible_time`` is when the scheduler sees it."""

    seq: int
    channel: Channel
    job_id: int
    kind: EventKind
    true_time: float
    visible_time: float
    job: Job | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.visible_time < self.true_time:
            raise ValueError(f"event {self.seq}: visible before it happened")

    @property
    def lag(self) -> float:
        return self.visible_time - self.true_time

    @property
    def delivery_key(self) -> tuple[float, int]:
        return (self.visible_time, self.seq)

    def trace_line(self) -> str:
        return json.dumps(
            {
                "seq": self.seq,
                "channel": self.channel.value,
                "kind": self.kind.value,
                "job": self.job_id,
                "true_time": self.true_time,
                "visible_time": self.visible_time,
            },
            separators=(",", ":"),
        )


@dataclass(frozen=True)
class JobView:
    """Scheduler-side view of one job.

    ``tx_holds``/``phys_holds`` are net start-minus-end counts of observed
    block/fault events, so the fold does not depend on the relative
    delivery order of a window's start and end.
    """

    job_id: int
    job: Job | None = None
    status: JobStatus = JobStatus.WAITING
    tx_holds: int = 0
    phys_holds: int = 0
    as_of: float = 0.0

    @property
    def arrived(self) -> bool:
        return self.job is not None

    @property
    def readiness(self) -> ReadinessState:
        return ReadinessState(self.tx_holds <= 0, self.phys_holds <= 0, self.as_of)

    def to_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "job": None if self.job is None else {
                "arrival_time": self.job.arrival_time,
                "processing_time": self.job.processing_time,
                "due_date": self.job.due_date,
                "weight": self.job.weight,
            },
            "status": self.status.value,
            "tx_holds": self.tx_holds,
            "phys_holds": self.phys_holds,
            "as_of": self.as_of,
        }


@dataclass(frozen=True)
class Snapshot:
    epoch: int
    latch_time: float
    resource: str
    job_views: Mapping[int, JobView]

    def __post_init__(self):
        # freeze a private copy so later cache updates cannot leak in
        object.__setattr__(self, "job_views", MappingProxyType(dict(self.job_views)))

    def to_json(self) -> str:
        views = [self.job_views[k].to_dict() for k in sorted(self.job_views)]
        return json.dumps(
            {
                "epoch": self.epoch,
                "latch_time": self.latch_time,
                "resource": self.resource,
                "job_views": views,
            },
            sort_keys=True,
        )


@dataclass(frozen=True)
class DecisionRequest:
    snapshot: Snapshot
    resource: str
    candidates: tuple[int, ...]

    def __post_init__(self):
        views = self.snapshot.job_views
        for jid in self.candidates:
            view = views.get(jid)
            if view is None or not view.arrived:
                raise ValueError(f"candidate {jid} is not in the snapshot")
            if view.status is not JobStatus.WAITING or not view.readiness.ready:
                raise ValueError(f"candidate {jid} is not observed admissible")

    def job(self, job_id: int) -> Job:
        return self.snapshot.job_views[job_id].job


@dataclass(frozen=True)
class DivergenceRecord:
    """Typed outcome of one committed dispatch.

    ``human`` is ``None`` (no intervention), a job id (operator redirected
    the dispatch to that job) or :data:`CANCEL`.
    """

    epoch: int
    intent: int
    sys_outcome: SysOutcome
    phys_outcome: PhysOutcome
    human: int | str | None
    visibility: Visibility
    commit_time: float
    architecture: Architecture
    fallback: bool = False

    def __post_init__(self):
        if self.human is not None and self.human != CANCEL and not isinstance(self.human, int):
            raise ValueError(f"bad human intervention {self.human!r}")
        not_attempted = self.phys_outcome is PhysOutcome.NOT_ATTEMPTED
        rejected = self.sys_outcome is SysOutcome.REJECTED
        if not_attempted and not (rejected or self.human is not None):
            raise ValueError("NotAttempted requires a rejection or a human override")
        if (rejected or self.human is not None) and self.phys_outcome is PhysOutcome.STARTED:
            raise ValueError("intent cannot have started after rejection or override")
        clean = classify_outcome(self) is Outcome.CLEAN
        if clean != (self.visibility is Visibility.NOT_APPLICABLE):
            raise ValueError("visibility must be n/a exactly for clean dispatches")

    @property
    def outcome(self) -> Outcome:
        return classify_outcome(self)

    def to_log_dict(self, policy: str, seed: int) -> dict:
        return {
            "epoch": self.epoch,
            "intent": self.intent,
            "sys": self.sys_outcome.value,
            "phys": self.phys_outcome.value,
            "human": self.human,
            "visibility": self.visibility.value,
            "commit_time": self.commit_time,
            "arch": self.architecture.value,
            "policy": policy,
            "seed": seed,
        }

    def to_log_line(self, policy: str, seed: int) -> str:
        return json.dumps(self.to_log_dict(policy, seed), separators=(",", ":"))

    @classmethod
    def from_log_dict(cls, d: dict) -> DivergenceRecord:
        return cls(
            epoch=d["epoch"],
            intent=d["intent"],
            sys_outcome=SysOutcome(d["sys"]),
            phys_outcome=PhysOutcome(d["phys"]),
            human=d["human"],
            visibility=Visibility(d["visibility"]),
            commit_time=d["commit_time"],
            architecture=Architecture(d["arch"]),
        )


def classify_outcome(record: DivergenceRecord) -> Outcome:
    """Map a record to exactly one outcome category.

    Precedence: human intervention, then the joint transactional+physical
    case, then the single channels.
    """
    if record.human is not None:
        return Outcome.HUMAN_OVERRIDE
    rejected = record.sys_outcome is SysOutcome.REJECTED
    fault = record.phys_outcome is PhysOutcome.FAULT
    if rejected and fault:
        return Outcome.COMBINED
    if rejected:
        return Outcome.TRANSACTIONAL
    if fault:
        return Outcome.PHYSICAL
    return Outcome.CLEAN


def classify_visibility(record: DivergenceRecord, snapshot: Snapshot, blocking_event: Event) -> Visibility:
    """Visible if the blocking condition was observable by commit time."""
    if classify_outcome(record) is Outcome.CLEAN:
        raise ValueError("visibility is undefined for a clean dispatch")
    if blocking_event.job_id != record.intent:
        raise ValueError("blocking event does not concern the intended job")
    if record.commit_time < snapshot.latch_time:
        raise ValueError("commit precedes the snapshot it was decided on")
    if blocking_event.visible_time <= record.commit_time:
        return Visibility.VISIBLE
    return Visibility.HIDDEN
