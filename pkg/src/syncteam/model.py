"""Domain types shared by the whole toolkit.

Events, per-agent series, session recordings, synchronization parameters and
the group topology graph.  Everything here is an immutable value; timestamps
are seconds on a single session-relative clock.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence


class SyncError(Exception):
    """Base class for errors raised by the synchronization core."""


class EmptyEventType(SyncError):
    pass


class NoCommonBasis(SyncError):
    pass


class UnknownAgent(SyncError):
    pass


class IsolatedVertex(SyncError):
    pass


class DegenerateGroup(SyncError):
    pass


class EventType(enum.Enum):
    START_FORWARD = "start_forward"
    STOP_FORWARD = "stop_forward"
    START_BACKWARD = "start_backward"
    STOP_BACKWARD = "stop_backward"
    CLAP = "clap"
    TURN = "turn"
    EARLY_START_FORWARD = "early_start_forward"
    EARLY_STOP_FORWARD = "early_stop_forward"
    EARLY_START_BACKWARD = "early_start_backward"
    EARLY_STOP_BACKWARD = "early_stop_backward"

    @property
    def token(self) -> str:
        return self.value

    @classmethod
    def from_token(cls, token: str) -> "EventType":
        return cls(token)

    @property
    def is_early(self) -> bool:
        return self.value.startswith("early_")

    @property
    def is_motion(self) -> bool:
        return self.regular in MOTION_EVENTS

    @property
    def regular(self) -> "EventType":
        """The regular event an early variant anticipates (identity otherwise)."""
        if self.is_early:
            return EventType(self.value[len("early_"):])
        return self

    @property
    def early(self) -> "EventType":
        """The early variant of a motion event."""
        if self.is_early:
            return self
        if self not in MOTION_EVENTS:
            raise ValueError(f"{self.token} has no early variant")
        return EventType("early_" + self.value)

    @property
    def canonical(self) -> "EventType":
        """Kind used for matching: early variants collapse to their regular
        event and Turn collapses to Clap."""
        reg = self.regular
        return EventType.CLAP if reg is EventType.TURN else reg


MOTION_EVENTS = (
    EventType.START_FORWARD,
    EventType.STOP_FORWARD,
    EventType.START_BACKWARD,
    EventType.STOP_BACKWARD,
)
REGULAR_KINDS = MOTION_EVENTS + (EventType.CLAP,)
_KIND_ORDER = {e: i for i, e in enumerate(EventType)}


def same_kind(a: EventType, b: EventType) -> bool:
    """True when two regular events count as the same coordinated action.

    Clap and Turn are the same kind (the robot turns where humans clap).
    Early variants are never the same kind as anything.
    """
    if a.is_early or b.is_early:
        return False
    return a.canonical is b.canonical


class AgentKind(enum.Enum):
    HUMAN = "human"
    ROBOT = "robot"


@dataclass(frozen=True, order=True)
class AgentId:
    id: int
    kind: AgentKind = field(default=AgentKind.HUMAN, compare=False)

    def __post_init__(self):
        if self.id < 0:
            raise ValueError(f"agent id must be non-negative, got {self.id}")

    @property
    def is_robot(self) -> bool:
        return self.kind is AgentKind.ROBOT

    def __str__(self) -> str:
        return f"{'r' if self.is_robot else 's'}{self.id}"


def human(i: int) -> AgentId:
    return AgentId(i, AgentKind.HUMAN)


def robot(i: int) -> AgentId:
    return AgentId(i, AgentKind.ROBOT)


@dataclass(frozen=True)
class TimedEvent:
    agent: AgentId
    event: EventType
    t: float
    iteration: int = 0
    # opaque key/value pairs carried through the log format untouched
    extra: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if not (self.t >= 0.0) or math.isinf(self.t):
            raise ValueError(f"event time must be finite and >= 0, got {self.t}")
        if self.iteration < 0:
            raise ValueError(f"iteration must be non-negative, got {self.iteration}")


def _event_sort_key(ev: TimedEvent):
    return ev.t


@dataclass(frozen=True)
class EventSeries:
    agent: AgentId
    events: tuple[TimedEvent, ...] = ()

    def __post_init__(self):
        evs = tuple(self.events)
        object.__setattr__(self, "events", evs)
        for a, b in zip(evs, evs[1:]):
            if b.t < a.t:
                raise ValueError(f"series for {self.agent} is not time ordered")
        for ev in evs:
            if ev.agent != self.agent:
                raise ValueError(f"event of {ev.agent} in series of {self.agent}")

    @classmethod
    def from_events(cls, agent: AgentId, events: Iterable[TimedEvent]) -> "EventSeries":
        # stable sort keeps arrival order for equal timestamps
        return cls(agent, tuple(sorted(events, key=_event_sort_key)))

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[TimedEvent]:
        return iter(self.events)

    def regular(self) -> "EventSeries":
        return EventSeries(self.agent, tuple(e for e in self.events if not e.event.is_early))

    def times(self, kind: EventType) -> list[float]:
        """Times of the regular events of `kind` (Clap/Turn equivalent)."""
        return [e.t for e in self.events if same_kind(e.event, kind)]

    def kinds(self) -> set[EventType]:
        """Canonical regular kinds present in the series."""
        return {e.event.canonical for e in self.events if not e.event.is_early}

    def count(self, kind: EventType) -> int:
        return sum(1 for e in self.events if same_kind(e.event, kind))

    @property
    def horizon(self) -> float:
        return self.events[-1].t if self.events else 0.0

    def shifted(self, dt: float) -> "EventSeries":
        return EventSeries(
            self.agent,
            tuple(TimedEvent(e.agent, e.event, e.t + dt, e.iteration, e.extra) for e in self.events),
        )


@dataclass(frozen=True)
class SyncParams:
    tau: float = 0.25
    cluster_epsilon: float = 0.5
    early_window_delta: float = 0.5
    early_count_threshold: int = 1

    def __post_init__(self):
        for name in ("tau", "cluster_epsilon", "early_window_delta"):
            v = getattr(self, name)
            if not (v > 0) or math.isinf(v):
                raise ValueError(f"{name} must be a positive finite number, got {v}")
        if int(self.early_count_threshold) != self.early_count_threshold or self.early_count_threshold < 1:
            raise ValueError("early_count_threshold must be a positive integer")


@dataclass(frozen=True)
class Violation:
    """Two same-kind events of one series closer than tau."""

    agent: AgentId
    event: EventType
    t_first: float
    t_second: float

    def describe(self) -> str:
        return (f"{self.agent}: {self.event.token} at {self.t_first!r} and {self.t_second!r} "
                f"are within tau")


def validate_series(s: EventSeries, p: SyncParams) -> list[Violation]:
    """List every same-kind pair of regular events spaced by at most tau.

    An empty result guarantees the synchronization indices computed from the
    series stay inside [0, 1].
    """
    out = []
    by_kind: dict[EventType, list[float]] = {}
    for e in s.events:
        if not e.event.is_early:
            by_kind.setdefault(e.event.canonical, []).append(e.t)
    for kind in sorted(by_kind, key=_KIND_ORDER.__getitem__):
        ts = by_kind[kind]
        for i in range(len(ts)):
            for j in range(i + 1, len(ts)):
                if ts[j] - ts[i] > p.tau:
                    break
                out.append(Violation(s.agent, kind, ts[i], ts[j]))
    return out


class Method(enum.Enum):
    SIA = "SIA"
    ECA = "ECA"
    HUMANS_ONLY = "HumansOnly"


@dataclass(frozen=True)
class SessionRecording:
    series: tuple[EventSeries, ...]
    iteration_boundaries: tuple[tuple[float, float], ...]
    method_label: Method = Method.HUMANS_ONLY
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "series", tuple(sorted(self.series, key=lambda s: s.agent)))
        object.__setattr__(self, "iteration_boundaries",
                           tuple((float(a), float(b)) for a, b in self.iteration_boundaries))
        object.__setattr__(self, "metadata", dict(self.metadata))
        ids = [s.agent.id for s in self.series]
        if len(set(ids)) != len(ids):
            raise ValueError("agent ids must be unique within a session")
        if sum(1 for s in self.series if s.agent.is_robot) > 1:
            raise ValueError("at most one robot per session")
        prev_end = -math.inf
        for start, end in self.iteration_boundaries:
            if not start < end or start < prev_end:
                raise ValueError("iteration windows must be ordered and non-overlapping")
            prev_end = end
        for s in self.series:
            for e in s.events:
                if e.iteration >= len(self.iteration_boundaries):
                    raise ValueError(f"event at {e.t} tagged with unknown iteration {e.iteration}")
                start, end = self.iteration_boundaries[e.iteration]
                if not start <= e.t < end:
                    raise ValueError(
                        f"event {e.event.token} of {e.agent} at {e.t} lies outside iteration "
                        f"{e.iteration} window [{start}, {end})")

    @property
    def agents(self) -> list[AgentId]:
        return [s.agent for s in self.series]

    @property
    def humans(self) -> list[AgentId]:
        return [a for a in self.agents if not a.is_robot]

    @property
    def robot(self) -> AgentId | None:
        for a in self.agents:
            if a.is_robot:
                return a
        return None

    @property
    def n_iterations(self) -> int:
        return len(self.iteration_boundaries)

    def series_of(self, agent: AgentId) -> EventSeries:
        for s in self.series:
            if s.agent == agent:
                return s
        raise UnknownAgent(f"agent {agent} not in recording")

    def iteration_of(self, t: float) -> int | None:
        return iteration_index(self.iteration_boundaries, t)

    def slice_by_iteration(self, i: int) -> "SessionRecording":
        """The recording restricted to the events of iteration `i`.

        Every agent keeps a (possibly empty) series so the agent set is stable.
        """
        if not 0 <= i < self.n_iterations:
            raise IndexError(f"iteration {i} out of range")
        return SessionRecording(
            tuple(EventSeries(s.agent, tuple(e for e in s.events if e.iteration == i))
                  for s in self.series),
            self.iteration_boundaries,
            self.method_label,
            self.metadata,
        )

    def with_series(self, series: Sequence[EventSeries]) -> "SessionRecording":
        return SessionRecording(tuple(series), self.iteration_boundaries,
                                self.method_label, self.metadata)

    def all_events(self) -> list[TimedEvent]:
        evs = [e for s in self.series for e in s.events]
        evs.sort(key=lambda e: (e.t, e.agent.id))
        return evs


def iteration_index(boundaries: Sequence[tuple[float, float]], t: float) -> int | None:
    for i, (start, end) in enumerate(boundaries):
        if start <= t < end:
            return i
    return None


@dataclass(frozen=True)
class GroupTopologyGraph:
    """Directed weighted graph over agents; weights are pair indices."""

    vertices: tuple[AgentId, ...]
    edges: Mapping[tuple[AgentId, AgentId], float]

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(sorted(self.vertices)))
        object.__setattr__(self, "edges", dict(self.edges))
        vs = set(self.vertices)
        for (a, b), w in self.edges.items():
            if a == b:
                raise ValueError(f"self edge on {a}")
            if a not in vs or b not in vs:
                raise UnknownAgent(f"edge {a}->{b} references an unknown vertex")
            if not 0.0 <= w <= 1.0:
                raise ValueError(f"edge weight {w} outside [0, 1]")
            back = self.edges.get((b, a))
            if back is not None and back != w:
                raise ValueError(f"asymmetric weights on {a}<->{b}")

    @property
    def H(self) -> int:
        return len(self.vertices)

    def out_edges(self, a: AgentId) -> list[tuple[AgentId, float]]:
        return [(b, self.edges[(a, b)]) for b in self.vertices if (a, b) in self.edges]

    def out_degree(self, a: AgentId) -> int:
        return sum(1 for b in self.vertices if (a, b) in self.edges)

    def in_degree(self, a: AgentId) -> int:
        return sum(1 for b in self.vertices if (b, a) in self.edges)
