"""Robot anticipation controllers.

SIA follows the most synchronous person (MSP) of the previous iteration and
fires commands on that person's early events.  ECA clusters the previous
iteration's human events and replays the cluster means.

Both controllers idle through the first iteration since each is defined in
terms of the iteration before.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .model import (
    REGULAR_KINDS,
    AgentId,
    EventSeries,
    EventType,
    Method,
    SessionRecording,
    SyncError,
    SyncParams,
    TimedEvent,
)
from .sync import FullyConnected, IndexReport, RobotFollows, build_gtg, group_index


class EmptyGroup(SyncError):
    pass


class EmptyIteration(SyncError):
    pass


class CommandKind(enum.Enum):
    MOVE_FORWARD = "move_forward"
    MOVE_BACKWARD = "move_backward"
    STOP = "stop"
    TURN = "turn"


COMMAND_FOR = {
    EventType.START_FORWARD: CommandKind.MOVE_FORWARD,
    EventType.STOP_FORWARD: CommandKind.STOP,
    EventType.START_BACKWARD: CommandKind.MOVE_BACKWARD,
    EventType.STOP_BACKWARD: CommandKind.STOP,
    EventType.CLAP: CommandKind.TURN,
}


def robot_event_for(e: EventType) -> EventType:
    """Event the robot manifests when realizing human event `e`."""
    reg = e.canonical
    return EventType.TURN if reg is EventType.CLAP else reg


@dataclass(frozen=True)
class RobotCommand:
    kind: CommandKind
    issue_t: float
    # the robot-side event this command realizes (Turn for claps)
    event: EventType
    iteration: int = 0

    def __post_init__(self):
        if self.issue_t < 0:
            raise ValueError("issue_t must be non-negative")


def _command(e: EventType, issue_t: float, iteration: int) -> RobotCommand:
    return RobotCommand(COMMAND_FOR[e.canonical], issue_t, robot_event_for(e), iteration)


def most_synchronous_person(report: IndexReport, humans: Iterable[AgentId]) -> AgentId:
    """Human with the highest individual index; lowest id wins ties."""
    cands = sorted(a for a in humans if not a.is_robot)
    if not cands:
        raise EmptyGroup("no human candidates for the most synchronous person")
    best = cands[0]
    for a in cands[1:]:
        if report.individual[a] > report.individual[best]:
            best = a
    return best


# -- SIA --------------------------------------------------------------------

@dataclass(frozen=True)
class ScheduleEntry:
    event: EventType
    offset: float


@dataclass
class SiaState:
    current_msp: AgentId
    msp_schedule: list[ScheduleEntry]
    iteration: int = 0
    iteration_start: float = 0.0
    pending_early: list[tuple[EventType, float]] = field(default_factory=list)
    consumed: set[int] = field(default_factory=set)
    params: SyncParams = field(default_factory=SyncParams)

    @property
    def has_clap(self) -> bool:
        return any(s.event is EventType.CLAP for s in self.msp_schedule)


def _iteration_schedule(s: EventSeries, iteration: int, start: float) -> list[ScheduleEntry]:
    return [ScheduleEntry(e.event.canonical, e.t - start)
            for e in s.events if e.iteration == iteration and not e.event.is_early]


def select_msp(rec: SessionRecording, iteration: int, p: SyncParams,
               followed: AgentId | None = None) -> tuple[AgentId, IndexReport]:
    """MSP of `iteration`, with the robot's edges following `followed` if set."""
    policy = RobotFollows(followed) if (followed is not None and rec.robot is not None) \
        else FullyConnected()
    report = group_index(build_gtg(rec, iteration, policy, p))
    return most_synchronous_person(report, rec.humans), report


def sia_begin_iteration(rec: SessionRecording, finished_iter: int, p: SyncParams,
                        followed: AgentId | None = None) -> SiaState:
    """Pick the MSP of the finished iteration and schedule the next one.

    `followed` is the human the robot mirrored during `finished_iter`
    (None when the robot was idle); it decides the robot's edges in the
    graph used for the selection.
    """
    msp, _ = select_msp(rec, finished_iter, p, followed)
    start, end = rec.iteration_boundaries[finished_iter]
    nxt = finished_iter + 1
    next_start = rec.iteration_boundaries[nxt][0] if nxt < rec.n_iterations else end
    return SiaState(
        current_msp=msp,
        msp_schedule=_iteration_schedule(rec.series_of(msp), finished_iter, start),
        iteration=nxt,
        iteration_start=next_start,
        params=p,
    )


def sia_on_event(st: SiaState, ev: TimedEvent, now: float) -> RobotCommand | None:
    """Feed one live event; returns a command when an early trigger completes."""
    if ev.agent != st.current_msp or not ev.event.is_early:
        return None
    delta = st.params.early_window_delta
    st.pending_early = [(e, t) for e, t in st.pending_early if now - t <= delta]
    reg = ev.event.regular
    st.pending_early.append((reg, now))
    rel = now - st.iteration_start
    for k, entry in enumerate(st.msp_schedule):
        if k in st.consumed or entry.event is not reg:
            continue
        if abs(rel - entry.offset) <= delta:
            break
    else:
        return None
    if sum(1 for e, _ in st.pending_early if e is reg) < st.params.early_count_threshold:
        return None
    st.consumed.add(k)
    st.pending_early = [(e, t) for e, t in st.pending_early if e is not reg]
    return _command(reg, now, st.iteration)


def sia_tick(st: SiaState, now: float) -> list[RobotCommand]:
    """Clock-driven commands: claps at the MSP's clap time, and late fires
    for motion entries whose early window closed without a trigger."""
    rel = now - st.iteration_start
    delta = st.params.early_window_delta
    out = []
    for k, entry in enumerate(st.msp_schedule):
        if k in st.consumed:
            continue
        due = entry.offset if entry.event is EventType.CLAP else entry.offset + delta
        if rel >= due:
            st.consumed.add(k)
            out.append(_command(entry.event, now, st.iteration))
    return out


def sia_deadlines(st: SiaState) -> list[float]:
    delta = st.params.early_window_delta
    return [st.iteration_start + (e.offset if e.event is EventType.CLAP else e.offset + delta)
            for e in st.msp_schedule]


# -- ECA --------------------------------------------------------------------

@dataclass(frozen=True)
class EventCluster:
    event: EventType
    member_times: tuple[float, ...]
    members: tuple[AgentId, ...] = ()

    @property
    def mean_t(self) -> float:
        return sum(self.member_times) / len(self.member_times)


def cluster_events(series: Iterable[EventSeries], epsilon: float,
                   iteration: int | None = None) -> list[EventCluster]:
    """Greedy chronological clustering of same-kind human events.

    An event joins the open cluster of its kind when it lies within
    `epsilon` of the cluster's first member and its agent is not yet a
    member; otherwise it opens a new cluster.  Robot series and early events
    are ignored.
    """
    by_kind: dict[EventType, list[tuple[float, AgentId]]] = {}
    for s in series:
        if s.agent.is_robot:
            continue
        for e in s.events:
            if e.event.is_early or (iteration is not None and e.iteration != iteration):
                continue
            by_kind.setdefault(e.event.canonical, []).append((e.t, s.agent))
    clusters = []
    for kind in REGULAR_KINDS:
        items = sorted(by_kind.get(kind, ()))
        cur_t: list[float] = []
        cur_a: list[AgentId] = []
        for t, a in items:
            if cur_t and t - cur_t[0] <= epsilon and a not in cur_a:
                cur_t.append(t)
                cur_a.append(a)
                continue
            if cur_t:
                clusters.append(EventCluster(kind, tuple(cur_t), tuple(cur_a)))
            cur_t, cur_a = [t], [a]
        if cur_t:
            clusters.append(EventCluster(kind, tuple(cur_t), tuple(cur_a)))
    clusters.sort(key=lambda c: (c.member_times[0], REGULAR_KINDS.index(c.event)))
    return clusters


@dataclass(frozen=True)
class PlannedCommand:
    kind: CommandKind
    event: EventType
    offset: float


@dataclass
class EcaState:
    predicted_schedule: list[PlannedCommand]
    iteration: int = 0
    iteration_start: float = 0.0
    emitted: int = 0


def eca_predict(clusters: Sequence[EventCluster], origin: float = 0.0) -> EcaState:
    """Schedule one command per cluster at the cluster mean.

    Offsets are relative to `origin`, the start of the iteration the
    clusters were taken from.
    """
    if not clusters:
        raise EmptyIteration("no event clusters to predict from")
    plan = [PlannedCommand(COMMAND_FOR[c.event], robot_event_for(c.event), c.mean_t - origin)
            for c in clusters]
    plan.sort(key=lambda pc: pc.offset)
    return EcaState(plan)


def eca_tick(st: EcaState, iteration_relative_now: float) -> list[RobotCommand]:
    """Commands whose scheduled offset has been reached, each exactly once."""
    out = []
    while st.emitted < len(st.predicted_schedule):
        pc = st.predicted_schedule[st.emitted]
        if pc.offset > iteration_relative_now:
            break
        out.append(RobotCommand(pc.kind, st.iteration_start + iteration_relative_now,
                                pc.event, st.iteration))
        st.emitted += 1
    return out


def eca_deadlines(st: EcaState) -> list[float]:
    return [st.iteration_start + pc.offset for pc in st.predicted_schedule[st.emitted:]]


# -- controller wrappers used by the simulator and the live server ------------

class SiaController:
    method = Method.SIA

    def __init__(self, params: SyncParams):
        self.params = params
        self.state: SiaState | None = None
        # msps[k] is the human followed during iteration k (None while idle)
        self.msps: list[AgentId | None] = []

    def begin_iteration(self, rec: SessionRecording, k: int) -> list[RobotCommand]:
        out = []
        prev = self.state
        if prev is not None and not prev.has_clap:
            # the followed dancer never clapped: turn on rollover
            start = rec.iteration_boundaries[k][0] if k < rec.n_iterations \
                else rec.iteration_boundaries[-1][1]
            out.append(RobotCommand(CommandKind.TURN, start, EventType.TURN, prev.iteration))
        while len(self.msps) < k:
            self.msps.append(None)
        if k == 0 or k >= rec.n_iterations:
            self.state = None
            if k < rec.n_iterations:
                self.msps.append(None)
            return out
        followed = self.msps[k - 1]
        self.state = sia_begin_iteration(rec, k - 1, self.params, followed)
        self.msps.append(self.state.current_msp)
        return out

    def on_event(self, ev: TimedEvent, now: float) -> list[RobotCommand]:
        if self.state is None:
            return []
        cmd = sia_on_event(self.state, ev, now)
        return [cmd] if cmd is not None else []

    def tick(self, now: float) -> list[RobotCommand]:
        return sia_tick(self.state, now) if self.state is not None else []

    def deadlines(self) -> list[float]:
        return sia_deadlines(self.state) if self.state is not None else []


class EcaController:
    method = Method.ECA

    def __init__(self, params: SyncParams):
        self.params = params
        self.state: EcaState | None = None

    def begin_iteration(self, rec: SessionRecording, k: int) -> list[RobotCommand]:
        self.state = None
        if k == 0 or k >= rec.n_iterations:
            return []
        clusters = cluster_events(rec.series, self.params.cluster_epsilon, iteration=k - 1)
        if not clusters:
            return []
        st = eca_predict(clusters, origin=rec.iteration_boundaries[k - 1][0])
        st.iteration = k
        st.iteration_start = rec.iteration_boundaries[k][0]
        self.state = st
        return []

    def on_event(self, ev: TimedEvent, now: float) -> list[RobotCommand]:
        return []

    def tick(self, now: float) -> list[RobotCommand]:
        if self.state is None:
            return []
        return eca_tick(self.state, now - self.state.iteration_start)

    def deadlines(self) -> list[float]:
        return eca_deadlines(self.state) if self.state is not None else []


def make_controller(method: Method | None, params: SyncParams):
    if method is None or method is Method.HUMANS_ONLY:
        return None
    return SiaController(params) if method is Method.SIA else EcaController(params)


def msp_sequence(rec: SessionRecording, p: SyncParams) -> list[AgentId | None]:
    """The human an SIA robot followed in each iteration of `rec`.

    Recomputed from the recording with the same chain the live controller
    uses, so offline analysis agrees with what happened online.
    """
    out: list[AgentId | None] = [None] if rec.n_iterations else []
    for k in range(1, rec.n_iterations):
        msp, _ = select_msp(rec, k - 1, p, out[k - 1])
        out.append(msp)
    return out
