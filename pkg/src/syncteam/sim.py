"""Seeded discrete-event simulation of the cyclic group dance.

Human dancers emit jittered, occasionally missing events around a nominal
choreography; a robot driven by an anticipation controller executes
commands after an actuation latency and sometimes drops them.  A seed fully
determines a run, and the human realization of a seed does not depend on
which controller drives the robot.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .anticipate import RobotCommand, make_controller
from .metrics import ComparisonSummary, compare_methods
from .model import (
    AgentId,
    EventSeries,
    EventType,
    Method,
    SessionRecording,
    SyncParams,
    TimedEvent,
    human,
    iteration_index,
    robot,
)

_PASS = (EventType.START_FORWARD, EventType.STOP_FORWARD,
         EventType.START_BACKWARD, EventType.STOP_BACKWARD)
DEFAULT_SCHEDULE = tuple(zip(_PASS + _PASS, (3.0, 6.0, 9.0, 12.0, 14.0, 17.0, 19.0, 21.0))) \
    + ((EventType.CLAP, 22.5),)


@dataclass(frozen=True)
class Choreography:
    schedule: tuple[tuple[EventType, float], ...] = DEFAULT_SCHEDULE
    iteration_count: int = 4
    iteration_period: float = 24.0

    def __post_init__(self):
        object.__setattr__(self, "schedule", tuple((EventType(e), float(t)) for e, t in self.schedule))
        offs = [t for _, t in self.schedule]
        if any(b <= a for a, b in zip(offs, offs[1:])):
            raise ValueError("choreography offsets must be strictly increasing")
        if offs and not (0 <= offs[0] and offs[-1] < self.iteration_period):
            raise ValueError("choreography offsets must lie inside the iteration period")
        if any(e.is_early or e is EventType.TURN for e, _ in self.schedule):
            raise ValueError("choreography holds regular human events only")
        if self.iteration_count < 1:
            raise ValueError("iteration_count must be >= 1")

    def boundaries(self) -> tuple[tuple[float, float], ...]:
        p = self.iteration_period
        return tuple((k * p, (k + 1) * p) for k in range(self.iteration_count))


@dataclass(frozen=True)
class DancerModel:
    jitter_sd: float = 0.15
    early_lead: float = 0.3
    miss_rate: float = 0.07

    def __post_init__(self):
        if self.jitter_sd < 0 or self.early_lead < 0:
            raise ValueError("jitter_sd and early_lead must be non-negative")
        if not 0.0 <= self.miss_rate <= 1.0:
            raise ValueError("miss_rate must lie in [0, 1]")


@dataclass(frozen=True)
class RobotModel:
    actuation_latency: float = 0.35
    drop_rate: float = 0.037

    def __post_init__(self):
        if self.actuation_latency < 0:
            raise ValueError("actuation_latency must be non-negative")
        if not 0.0 <= self.drop_rate <= 1.0:
            raise ValueError("drop_rate must lie in [0, 1]")


@dataclass(frozen=True)
class SimConfig:
    choreography: Choreography = field(default_factory=Choreography)
    dancers: tuple[DancerModel, ...] = (DancerModel(), DancerModel(), DancerModel())
    robot: RobotModel = field(default_factory=RobotModel)
    controller: Method | None = Method.SIA
    params: SyncParams = field(default_factory=SyncParams)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dancers", tuple(self.dancers))
        if len(self.dancers) < 2:
            raise ValueError("need at least two dancers")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def robot_id(self) -> AgentId:
        return robot(len(self.dancers))


def _streams(seed: int, n: int) -> list[np.random.Generator]:
    # one stream per dancer plus one for the robot, so draws never interleave
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n + 1)]


def generate_human_events(cfg: SimConfig) -> SessionRecording:
    """Jittered human event streams for every dancer.

    Each nominal event gets Gaussian jitter, an early variant `early_lead`
    before it (motion events only), and each of the two is independently
    missed with the dancer's miss rate.  Times are clipped into their
    iteration window.
    """
    bounds = cfg.choreography.boundaries()
    rngs = _streams(cfg.seed, len(cfg.dancers))
    series = []
    for d, (model, rng) in enumerate(zip(cfg.dancers, rngs)):
        a = human(d)
        evs = []
        for k, (start, end) in enumerate(bounds):
            last = math.nextafter(end, -math.inf)
            for e, off in cfg.choreography.schedule:
                jitter = rng.normal(0.0, model.jitter_sd) if model.jitter_sd > 0 else 0.0
                u_reg, u_early = rng.random(2)
                t = min(max(start + off + float(jitter), start), last)
                if e.is_motion and u_early >= model.miss_rate:
                    evs.append(TimedEvent(a, e.early, max(t - model.early_lead, start), k))
                if u_reg >= model.miss_rate:
                    evs.append(TimedEvent(a, e, t, k))
        series.append(EventSeries.from_events(a, evs))
    return SessionRecording(tuple(series), bounds, Method.HUMANS_ONLY,
                            {"seed": str(cfg.seed), "group": f"seed{cfg.seed}"})


# heap priorities for simultaneous items
_BOUNDARY, _HUMAN, _TICK, _ROBOT = range(4)


def run_session(cfg: SimConfig, humans: SessionRecording | None = None) -> SessionRecording:
    """Replay the humans through the configured controller and record the robot.

    Commands become robot events at ``issue_t + actuation_latency`` unless
    dropped.  With no controller the recording holds the humans only.
    """
    if humans is None:
        humans = generate_human_events(cfg)
    meta = dict(humans.metadata)
    ctrl = make_controller(cfg.controller, cfg.params)
    if ctrl is None:
        meta["controller"] = "none"
        return SessionRecording(humans.series, humans.iteration_boundaries, Method.HUMANS_ONLY, meta)

    bounds = humans.iteration_boundaries
    rid = cfg.robot_id
    robot_rng = _streams(cfg.seed, len(cfg.dancers))[-1]
    heap: list = []
    seq = 0

    def push(t, prio, item):
        nonlocal seq
        heapq.heappush(heap, (t, prio, seq, item))
        seq += 1

    for k, (start, _) in enumerate(bounds):
        push(start, _BOUNDARY, k)
    push(bounds[-1][1], _BOUNDARY, len(bounds))
    for ev in humans.all_events():
        push(ev.t, _HUMAN, ev)

    seen: dict[AgentId, list[TimedEvent]] = {s.agent: [] for s in humans.series}
    robot_evs: list[TimedEvent] = []
    stats = {"issued": 0, "dropped": 0, "late": 0}

    def issue(cmds: list[RobotCommand]):
        for c in cmds:
            stats["issued"] += 1
            if robot_rng.random() < cfg.robot.drop_rate:
                stats["dropped"] += 1
                continue
            push(c.issue_t + cfg.robot.actuation_latency, _ROBOT, c)

    def snapshot() -> SessionRecording:
        series = [EventSeries(a, tuple(v)) for a, v in seen.items()]
        series.append(EventSeries(rid, tuple(robot_evs)))
        return SessionRecording(tuple(series), bounds, ctrl.method, meta)

    while heap:
        t, prio, _, item = heapq.heappop(heap)
        if prio == _BOUNDARY:
            issue(ctrl.begin_iteration(snapshot(), item))
            for dl in ctrl.deadlines():
                push(dl, _TICK, None)
        elif prio == _HUMAN:
            seen[item.agent].append(item)
            issue(ctrl.on_event(item, t))
        elif prio == _TICK:
            issue(ctrl.tick(t))
        else:
            it = iteration_index(bounds, t)
            if it is None:
                stats["late"] += 1
                continue
            robot_evs.append(TimedEvent(rid, item.event, t, it))

    meta["controller"] = ctrl.method.value
    meta["commands_issued"] = str(stats["issued"])
    meta["commands_dropped"] = str(stats["dropped"])
    meta["robot_events_past_end"] = str(stats["late"])
    return snapshot()


def run_comparison(cfg_base: SimConfig, n_runs: int,
                   analysis_params: SyncParams | None = None) -> ComparisonSummary:
    """Paired SIA/ECA runs over seeds ``seed .. seed + n_runs - 1``.

    Both controllers of a seed see the identical human realization.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    runs = []
    for s in range(cfg_base.seed, cfg_base.seed + n_runs):
        cfg = replace(cfg_base, seed=s)
        humans = generate_human_events(cfg)
        sia = run_session(replace(cfg, controller=Method.SIA), humans)
        eca = run_session(replace(cfg, controller=Method.ECA), humans)
        runs.append((s, sia, eca))
    return compare_methods(runs, analysis_params or cfg_base.params)
