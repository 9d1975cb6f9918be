"""Ground-truth single-machine plant with lagged observation channel.

The plant pre-draws the whole exogenous trace (jobs, disturbance windows,
override arming and observation lags) from dedicated sub-streams at
construction, so every architecture/policy cell run with the same seed sees
the same jobs and disturbances.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator

import numpy as np

from .domain import (
    CANCEL,
    Channel,
    Event,
    EventKind,
    Job,
    PhysOutcome,
    SysOutcome,
)

LAG_PRESETS: dict[str, tuple[float, float]] = {
    "low": (0.0, 0.3),
    "medium": (0.1, 1.5),
    "high": (0.5, 3.0),
}

WINDOW_ANCHORS = ("arrival", "intent")

STREAMS = (
    "arrivals",
    "processing",
    "duedates",
    "weights",
    "disturbances",
    "lags",
    "completion_lags",
)


@dataclass(frozen=True)
class SimConfig:
    processing_dist: tuple[float, float] = (3.0, 8.0)
    interarrival_dist: tuple[float, float] = (5.5, 10.5)
    p_sys: float = 0.14
    p_phys: float = 0.10
    p_hum: float = 0.07
    decision_window: float = 0.85
    lag_dist: tuple[float, float] = LAG_PRESETS["medium"]
    horizon: float = 2000.0
    warmup_fraction: float = 0.05
    seed: int = 0
    # modelling choices beyond the core parameters; see README "Modelling choices"
    due_factor: tuple[float, float] = (1.5, 3.0)
    weights: tuple[int, int] = (1, 5)
    window_anchor: str = "intent"
    window_offset: tuple[float, float] = (0.0, 0.85)
    window_duration: tuple[float, float] = (2.0, 6.0)
    reject_delay: float = 4.0
    fault_delay: float = 5.0
    max_reisolations: int = 5

    def __post_init__(self):
        for name in ("p_sys", "p_phys", "p_hum"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name}={p} outside [0, 1]")
        for name in (
            "processing_dist",
            "interarrival_dist",
            "lag_dist",
            "due_factor",
            "weights",
            "window_offset",
            "window_duration",
        ):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name}: low {lo} > high {hi}")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.lag_dist[0] < 0:
            raise ValueError("observation lag cannot be negative")
        if self.processing_dist[0] <= 0 or self.interarrival_dist[0] <= 0:
            raise ValueError("processing and interarrival times must be positive")
        if self.window_duration[0] <= 0:
            raise ValueError("disturbance windows must have positive duration")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ValueError("warmup_fraction must be in [0, 1)")
        if self.decision_window <= 0:
            raise ValueError("decision_window must be positive")
        if self.fault_delay < 0 or self.reject_delay < 0:
            raise ValueError("failure delays must be non-negative")
        if self.window_anchor not in WINDOW_ANCHORS:
            raise ValueError(f"window_anchor must be one of {WINDOW_ANCHORS}")
        if self.window_offset[0] < 0:
            raise ValueError("window_offset cannot be negative")
        if self.max_reisolations < 0:
            raise ValueError("max_reisolations must be non-negative")

    @property
    def warmup_cutoff(self) -> float:
        return self.warmup_fraction * self.horizon


def substreams(seed: int) -> dict[str, np.random.Generator]:
    """Independent named generators derived from one root seed."""
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.Generator(np.random.PCG64(ss)) for name, ss in zip(STREAMS, children)}


@dataclass(frozen=True)
class DisturbanceWindow:
    job_id: int
    channel: Channel
    start: float
    end: float

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError("window must have start < end")
        if self.channel not in (Channel.TRANSACTIONAL, Channel.PHYSICAL):
            raise ValueError(f"no disturbance windows on the {self.channel.value} channel")

    def covers(self, t: float) -> bool:
        return self.start <= t < self.end


@dataclass(frozen=True)
class DisturbancePlan:
    """A window whose start is given relative to an anchor time."""

    job_id: int
    channel: Channel
    offset: float
    duration: float
    start_lag: float
    end_lag: float

    def window_at(self, anchor: float) -> DisturbanceWindow:
        start = anchor + self.offset
        return DisturbanceWindow(self.job_id, self.channel, start, start + self.duration)


@dataclass(frozen=True)
class JobDisturbances:
    plans: tuple[DisturbancePlan, ...] = ()
    override_armed: bool = False


def generate_job(
    rngs: dict[str, np.random.Generator],
    prev_arrival: float,
    job_id: int,
    config: SimConfig,
) -> Job:
    """Draw the next job of the arrival process."""
    arrival = prev_arrival + rngs["arrivals"].uniform(*config.interarrival_dist)
    processing = rngs["processing"].uniform(*config.processing_dist)
    due = arrival + processing * rngs["duedates"].uniform(*config.due_factor)
    lo, hi = config.weights
    weight = float(rngs["weights"].integers(lo, hi + 1))
    return Job(job_id, float(arrival), float(processing), float(due), weight)


def schedule_disturbances(job: Job, rng: np.random.Generator, config: SimConfig) -> JobDisturbances:
    """Independent Bernoulli draws per channel; at most one window per channel.

    A fixed number of variates is consumed per job whatever the outcome, so
    the stream stays aligned across jobs. The observation lags of the
    window's start and end are drawn here too, which keeps them identical
    across architectures even when the anchor time differs.
    """
    hit_sys, hit_phys, hit_hum = rng.random(3) < (config.p_sys, config.p_phys, config.p_hum)
    offsets = rng.uniform(*config.window_offset, size=2)
    durations = rng.uniform(*config.window_duration, size=2)
    lags = [sample_lag(rng, config.lag_dist) for _ in range(4)]
    plans = []
    for i, (hit, channel) in enumerate(((hit_sys, Channel.TRANSACTIONAL), (hit_phys, Channel.PHYSICAL))):
        if hit:
            plans.append(DisturbancePlan(job.id, channel, float(offsets[i]), float(durations[i]),
                                         lags[2 * i], lags[2 * i + 1]))
    return JobDisturbances(tuple(plans), bool(hit_hum))


def sample_lag(rng: np.random.Generator, lag_dist: tuple[float, float]) -> float:
    lo, hi = lag_dist
    if lo == hi:
        return float(lo)
    return float(rng.uniform(lo, hi))


def emit_observation(event: Event, rng: np.random.Generator, lag_dist: tuple[float, float]) -> Event:
    """Stamp the delivery time of ``event`` with a freshly sampled lag."""
    return replace(event, visible_time=event.true_time + sample_lag(rng, lag_dist))


class EventCalendar:
    """Delivery queue of observation events ordered by (visible_time, seq)."""

    def __init__(self, events: Iterable[Event] = ()):
        self._heap = [(e.visible_time, e.seq, e) for e in events]
        heapq.heapify(self._heap)
        self.now = 0.0

    def __len__(self):
        return len(self._heap)

    def push(self, event: Event):
        if event.visible_time < self.now:
            raise ValueError(f"event {event.seq} would be delivered in the past")
        heapq.heappush(self._heap, (event.visible_time, event.seq, event))

    def peek_time(self) -> float:
        return self._heap[0][0] if self._heap else float("inf")

    def pop(self) -> Event:
        t, _, event = heapq.heappop(self._heap)
        self.now = max(self.now, t)
        return event

    def advance(self, t: float):
        if t < self.now:
            raise ValueError(f"calendar cannot move back from {self.now} to {t}")
        self.now = t

    def pop_until(self, t: float) -> Iterator[Event]:
        """Yield every event delivered at or before ``t``, then move to ``t``."""
        while self._heap and self._heap[0][0] <= t:
            yield self.pop()
        self.advance(max(self.now, t))


@dataclass
class AdjudicationResult:
    sys_outcome: SysOutcome
    phys_outcome: PhysOutcome
    human: int | str | None = None
    started: int | None = None
    blocking: tuple[Event, ...] = ()


@dataclass
class Plant:
    """Ground truth: jobs, disturbance windows, and the machine."""

    config: SimConfig
    jobs: dict[int, Job] = field(default_factory=dict)
    disturbances: dict[int, JobDisturbances] = field(default_factory=dict)
    exogenous: list[Event] = field(default_factory=list)
    busy_until: float = 0.0
    in_service: int | None = None
    completed: dict[int, float] = field(default_factory=dict)
    dispatched: set[int] = field(default_factory=set)
    windows: dict[int, list[DisturbanceWindow]] = field(default_factory=dict)
    _fired: set[int] = field(default_factory=set)
    _anchored: set[int] = field(default_factory=set)
    _window_events: dict[tuple[int, Channel], Event] = field(default_factory=dict)
    _seq: int = 0
    _completion_lags: np.random.Generator | None = None

    @classmethod
    def build(cls, config: SimConfig) -> Plant:
        rngs = substreams(config.seed)
        plant = cls(config)
        plant._completion_lags = rngs["completion_lags"]
        prev = 0.0
        job_id = 0
        while True:
            job = generate_job(rngs, prev, job_id, config)
            if job.arrival_time >= config.horizon:
                break
            dist = schedule_disturbances(job, rngs["disturbances"], config)
            plant.jobs[job.id] = job
            plant.disturbances[job.id] = dist
            plant._emit_exogenous(job, dist, rngs["lags"])
            prev = job.arrival_time
            job_id += 1
        return plant

    @classmethod
    def scripted(
        cls,
        config: SimConfig,
        jobs: Iterable[Job],
        disturbances: dict[int, JobDisturbances] | None = None,
        arrival_lag: float = 0.0,
    ) -> Plant:
        """Plant with a hand-written job list, for targeted scenarios."""
        plant = cls(config)
        plant._completion_lags = substreams(config.seed)["completion_lags"]
        disturbances = disturbances or {}
        for job in sorted(jobs, key=lambda j: j.id):
            plant.jobs[job.id] = job
            plant.disturbances[job.id] = disturbances.get(job.id, JobDisturbances())
            arrival = Event(plant._next_seq(), Channel.PHYSICAL, job.id, EventKind.ARRIVAL,
                            job.arrival_time, job.arrival_time + arrival_lag, job=job)
            plant.exogenous.append(arrival)
            plant.windows[job.id] = []
            if config.window_anchor == "arrival":
                plant.exogenous.extend(plant._open_windows(job.id, job.arrival_time))
        return plant

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq - 1

    def _emit_exogenous(self, job: Job, dist: JobDisturbances, lag_rng: np.random.Generator):
        arrival = Event(self._next_seq(), Channel.PHYSICAL, job.id, EventKind.ARRIVAL,
                        job.arrival_time, job.arrival_time, job=job)
        self.exogenous.append(emit_observation(arrival, lag_rng, self.config.lag_dist))
        self.windows[job.id] = []
        if self.config.window_anchor == "arrival":
            self.exogenous.extend(self._open_windows(job.id, job.arrival_time))

    def _open_windows(self, job_id: int, anchor: float) -> list[Event]:
        kinds = {
            Channel.TRANSACTIONAL: (EventKind.BLOCK_START, EventKind.BLOCK_END),
            Channel.PHYSICAL: (EventKind.FAULT_START, EventKind.FAULT_END),
        }
        events = []
        for plan in self.disturbances[job_id].plans:
            w = plan.window_at(anchor)
            self.windows[job_id].append(w)
            start_kind, end_kind = kinds[w.channel]
            start = Event(self._next_seq(), w.channel, job_id, start_kind, w.start, w.start + plan.start_lag)
            end = Event(self._next_seq(), w.channel, job_id, end_kind, w.end, w.end + plan.end_lag)
            self._window_events[(job_id, w.channel)] = start
            events += [start, end]
        return events

    def note_intent(self, job_id: int, t: float) -> list[Event]:
        """Tell the plant a dispatch of ``job_id`` is being prepared at ``t``.

        With intent-anchored disturbances the job's windows open relative to
        its first dispatch attempt; the returned observation events must be
        scheduled for delivery.
        """
        if self.config.window_anchor != "intent" or job_id in self._anchored:
            return []
        self._anchored.add(job_id)
        return self._open_windows(job_id, t)

    # ground truth queries

    def windows_at(self, job_id: int, t: float) -> list[DisturbanceWindow]:
        if job_id not in self.jobs:
            raise KeyError(f"unknown job {job_id}")
        return [w for w in self.windows[job_id] if w.covers(t)]

    def true_admissible(self, job_id: int, t: float) -> tuple[bool, bool]:
        active = {w.channel for w in self.windows_at(job_id, t)}
        return Channel.TRANSACTIONAL not in active, Channel.PHYSICAL not in active

    def is_waiting(self, job_id: int, t: float) -> bool:
        return (
            self.jobs[job_id].arrival_time <= t
            and job_id not in self.dispatched
            and job_id != self.in_service
        )

    def idle_at(self, t: float) -> bool:
        return self.in_service is None and t >= self.busy_until

    def override_armed(self, job_id: int) -> bool:
        return self.disturbances[job_id].override_armed and job_id not in self._fired

    # machine

    def adjudicate_commit(self, intent: int, t_commit: float, redirect_pool: Iterable[int] = ()) -> AdjudicationResult:
        """Resolve a committed dispatch against the true plant state.

        ``redirect_pool`` holds the other candidates of the request; an armed
        override redirects to the earliest-due truly admissible one of them.
        """
        if not self.idle_at(t_commit):
            raise RuntimeError(f"machine busy at commit time {t_commit}")
        if not self.is_waiting(intent, t_commit):
            raise RuntimeError(f"job {intent} is not waiting at {t_commit}")
        tx_ok, phys_ok = self.true_admissible(intent, t_commit)
        blocking = tuple(
            self._window_events[(intent, w.channel)] for w in self.windows_at(intent, t_commit)
        )
        if not tx_ok:
            phys = PhysOutcome.NOT_ATTEMPTED if phys_ok else PhysOutcome.FAULT
            self.busy_until = t_commit + self.config.reject_delay
            return AdjudicationResult(SysOutcome.REJECTED, phys, blocking=blocking)
        if self.override_armed(intent):
            self._fired.add(intent)
            options = [
                j for j in redirect_pool
                if j != intent and self.is_waiting(j, t_commit) and all(self.true_admissible(j, t_commit))
            ]
            if options:
                target = min(options, key=lambda j: (self.jobs[j].due_date, j))
                self._start(target, t_commit)
                return AdjudicationResult(SysOutcome.ACCEPTED, PhysOutcome.NOT_ATTEMPTED, human=target, started=target)
            return AdjudicationResult(SysOutcome.ACCEPTED, PhysOutcome.NOT_ATTEMPTED, human=CANCEL)
        if not phys_ok:
            self.busy_until = t_commit + self.config.fault_delay
            return AdjudicationResult(SysOutcome.ACCEPTED, PhysOutcome.FAULT, blocking=blocking)
        self._start(intent, t_commit)
        return AdjudicationResult(SysOutcome.ACCEPTED, PhysOutcome.STARTED, started=intent)

    def _start(self, job_id: int, t: float):
        self.dispatched.add(job_id)
        self.in_service = job_id
        self.busy_until = t + self.jobs[job_id].processing_time

    def finish_service(self) -> Event:
        """Complete the job in service at ``busy_until``; return its observation."""
        job_id = self.in_service
        if job_id is None:
            raise RuntimeError("no job in service")
        t = self.busy_until
        self.completed[job_id] = t
        self.in_service = None
        event = Event(self._next_seq(), Channel.PHYSICAL, job_id, EventKind.COMPLETION, t, t)
        return emit_observation(event, self._completion_lags, self.config.lag_dist)

    def completed_jobs(self) -> list[Job]:
        return [replace(self.jobs[j], completion_time=c) for j, c in sorted(self.completed.items())]


__all__ = [
    "LAG_PRESETS",
    "SimConfig",
    "DisturbanceWindow",
    "DisturbancePlan",
    "JobDisturbances",
    "EventCalendar",
    "Plant",
    "AdjudicationResult",
    "generate_job",
    "schedule_disturbances",
    "emit_observation",
    "sample_lag",
    "substreams",
]
