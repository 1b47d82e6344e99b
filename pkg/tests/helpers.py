"""Small builders shared by the tests."""
from __future__ import annotations

import random

from syncteam.model import EventSeries, EventType, SessionRecording, TimedEvent, human, robot

A = EventType.START_FORWARD
B = EventType.STOP_FORWARD
CLAP = EventType.CLAP


def series(agent, *items, iteration=0):
    """series(human(0), (A, 1.0), (B, 2.0)) or with bare floats meaning kind A."""
    evs = []
    for it in items:
        e, t = (A, it) if isinstance(it, (int, float)) else it
        evs.append(TimedEvent(agent, e, float(t), iteration))
    return EventSeries.from_events(agent, evs)


def spaced_times(rng: random.Random, m: int, tau: float, start: float = 0.0) -> list[float]:
    """m increasing times with every gap strictly larger than tau."""
    out, t = [], start
    for _ in range(m):
        t += tau + rng.uniform(1e-6, 3 * tau)
        out.append(t)
    return out


def random_spaced_series(rng: random.Random, agent, tau: float, max_m: int = 50,
                         kinds=(A, B, CLAP), start: float = 0.0):
    evs = []
    for k in kinds:
        for t in spaced_times(rng, rng.randint(0, max_m), tau, start + rng.uniform(0, 1)):
            evs.append(TimedEvent(agent, k, round(t, 3)))
    return EventSeries.from_events(agent, evs)


def one_iteration(*series_list, end=1000.0, method=None):
    from syncteam.model import Method
    return SessionRecording(tuple(series_list), ((0.0, end),), method or Method.HUMANS_ONLY)


__all__ = ["A", "B", "CLAP", "series", "spaced_times", "random_spaced_series",
           "one_iteration", "human", "robot"]
