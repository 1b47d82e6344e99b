#!/usr/bin/env python3
# How the pair index and the group index come out of raw event times.

from syncteam.model import EventSeries, EventType, SessionRecording, SyncParams, TimedEvent, human, robot
from syncteam.sync import FullyConnected, RobotFollows, build_gtg, event_sync, group_index, pair_sync_index

SF, CLAP = EventType.START_FORWARD, EventType.CLAP
p = SyncParams(tau=0.25)


def mk(agent, *evs):
    return EventSeries.from_events(agent, [TimedEvent(agent, e, t) for e, t in evs])


# two dancers starting forward twice; the second start is out of sync
a = mk(human(0), (SF, 3.0), (SF, 14.0), (CLAP, 22.5))
b = mk(human(1), (SF, 3.1), (SF, 14.6), (CLAP, 22.5))

print("start_forward index:", event_sync(a, b, SF, p.tau))   # one hit out of sqrt(2*2)
print("clap index:         ", event_sync(a, b, CLAP, p.tau))  # equal times count half each way
pi = pair_sync_index(a, b, p)
print("pair index:         ", pi.q, "(weights: 4 starts, 2 claps)")

# a third dancer and a robot that turns a bit late
c = mk(human(2), (SF, 3.05), (SF, 14.1), (CLAP, 22.6))
r = mk(robot(3), (SF, 3.2), (SF, 14.2), (EventType.TURN, 22.7))
rec = SessionRecording((a, b, c, r), ((0.0, 24.0),))

full = group_index(build_gtg(rec, 0, FullyConnected(), p))
print("\nfully connected G =", round(full.G, 4))
for agent in rec.agents:
    print(f"  {agent}: I={full.individual[agent]:.3f} CV={full.connectivity[agent]:.3f}")

# under SIA the robot only mirrors one dancer, which costs it connectivity
sia = group_index(build_gtg(rec, 0, RobotFollows(human(2)), p))
print("robot follows s2:  G =", round(sia.G, 4), " robot CV =", round(sia.connectivity[robot(3)], 4))
