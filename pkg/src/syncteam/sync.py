"""Event synchronization indices and the group synchronization index.

Pairwise co-occurrence counts of same-kind events within a lag ``tau``, the
count-weighted multi-kind pair index, a directed group topology graph built
from the pair indices, and the individual / connectivity / group indices
derived from that graph.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Sequence

from .model import (
    REGULAR_KINDS,
    AgentId,
    DegenerateGroup,
    EmptyEventType,
    EventSeries,
    EventType,
    GroupTopologyGraph,
    IsolatedVertex,
    NoCommonBasis,
    SessionRecording,
    SyncParams,
    UnknownAgent,
    Violation,
    validate_series,
)


def _check_kind(e: EventType) -> None:
    if e.is_early:
        raise ValueError(f"early event {e.token} never enters synchronization indices")


def _count_sorted(tx: Sequence[float], ty: Sequence[float], tau: float) -> float:
    # For each x event only y events in [tx - 2 tau, tx] can satisfy the
    # window; the exact test below is on the computed difference.
    total = 0.0
    for t in tx:
        lo = bisect.bisect_left(ty, t - 2.0 * tau)
        hi = bisect.bisect_right(ty, t)
        for j in range(lo, hi):
            d = t - ty[j]
            if d == 0.0:
                total += 0.5
            elif 0.0 < d < tau:
                total += 1.0
    return total


def directed_count(x: EventSeries, y: EventSeries, e: EventType, tau: float) -> float:
    """How often events of kind `e` in `x` shortly follow those in `y`.

    A pair contributes 1 when ``0 < t_x - t_y < tau`` and 1/2 when the two
    times are identical.
    """
    _check_kind(e)
    return _count_sorted(sorted(x.times(e)), sorted(y.times(e)), tau)


def event_sync(x: EventSeries, y: EventSeries, e: EventType, tau: float) -> float:
    """Single-kind synchronization ``(c(x|y) + c(y|x)) / sqrt(m_x m_y)``."""
    _check_kind(e)
    tx, ty = sorted(x.times(e)), sorted(y.times(e))
    if not tx or not ty:
        raise EmptyEventType(f"{e.token} missing from {x.agent if not tx else y.agent}")
    c = _count_sorted(tx, ty, tau) + _count_sorted(ty, tx, tau)
    return c / math.sqrt(len(tx) * len(ty))


@dataclass(frozen=True)
class PairIndex:
    a: AgentId
    b: AgentId
    q: float
    # per-kind values after clamping, and the kinds that needed a clamp
    per_kind: dict = field(default_factory=dict, compare=False)
    clamped: tuple[EventType, ...] = ()


def pair_sync_index(x: EventSeries, y: EventSeries, p: SyncParams) -> PairIndex:
    """Count-weighted average of the per-kind indices over both series.

    Kinds present in only one series contribute 0 with their full weight.
    Per-kind values above 1 (possible only when a series has same-kind events
    closer than tau) are clamped to 1 and reported in ``clamped``.
    """
    kinds = sorted(x.kinds() | y.kinds(), key=REGULAR_KINDS.index)
    if not kinds:
        raise NoCommonBasis(f"no regular events in {x.agent} or {y.agent}")
    num = 0.0
    den = 0
    per_kind = {}
    clamped = []
    for e in kinds:
        mx, my = x.count(e), y.count(e)
        if mx and my:
            q = event_sync(x, y, e, p.tau)
            if q > 1.0:
                clamped.append(e)
                q = 1.0
        else:
            q = 0.0
        per_kind[e] = q
        num += q * (mx + my)
        den += mx + my
    return PairIndex(x.agent, y.agent, num / den, per_kind, tuple(clamped))


@dataclass(frozen=True)
class FullyConnected:
    pass


@dataclass(frozen=True)
class RobotFollows:
    msp: AgentId


EdgePolicy = FullyConnected | RobotFollows


@dataclass(frozen=True)
class GraphBuild:
    graph: GroupTopologyGraph
    pairs: tuple[PairIndex, ...]
    violations: tuple[Violation, ...] = ()


def build_gtg(rec: SessionRecording, iteration: int, policy: EdgePolicy,
              p: SyncParams) -> GroupTopologyGraph:
    """Group topology graph of one iteration; see :func:`build_gtg_detailed`."""
    return build_gtg_detailed(rec, iteration, policy, p).graph


def build_gtg_detailed(rec: SessionRecording, iteration: int, policy: EdgePolicy,
                       p: SyncParams) -> GraphBuild:
    """Build the graph plus the pair indices and spacing violations behind it.

    FullyConnected links every ordered agent pair.  RobotFollows keeps every
    human edge and every human->robot edge, but the robot gets a single
    outgoing edge, to the followed human.
    """
    if isinstance(policy, RobotFollows):
        if policy.msp not in rec.humans:
            raise UnknownAgent(f"followed agent {policy.msp} is not a human of this recording")
    sl = rec.slice_by_iteration(iteration)
    series = {s.agent: s for s in sl.series}
    agents = sl.agents
    violations = []
    for a in agents:
        violations.extend(validate_series(series[a], p))
    edges = {}
    pairs = []
    for i, a in enumerate(agents):
        for b in agents[i + 1:]:
            try:
                pi = pair_sync_index(series[a], series[b], p)
            except NoCommonBasis:
                # neither agent acted in this iteration
                pi = PairIndex(a, b, 0.0)
            pairs.append(pi)
            for src, dst in ((a, b), (b, a)):
                if isinstance(policy, RobotFollows) and src.is_robot and dst != policy.msp:
                    continue
                edges[(src, dst)] = pi.q
    return GraphBuild(GroupTopologyGraph(tuple(agents), edges), tuple(pairs), tuple(violations))


def individual_index(g: GroupTopologyGraph, a: AgentId) -> float:
    """Mean weight of the outgoing edges of `a`."""
    if a not in g.vertices:
        raise UnknownAgent(f"{a} not in graph")
    out = g.out_edges(a)
    if not out:
        raise IsolatedVertex(f"{a} has no outgoing edges")
    return sum(w for _, w in out) / len(out)


def connectivity(g: GroupTopologyGraph, a: AgentId) -> float:
    """Out-degree of `a` over the H - 1 possible outgoing edges."""
    if a not in g.vertices:
        raise UnknownAgent(f"{a} not in graph")
    if g.H < 2:
        raise DegenerateGroup("connectivity needs at least two agents")
    return g.out_degree(a) / (g.H - 1)


@dataclass(frozen=True)
class IndexReport:
    individual: dict[AgentId, float]
    connectivity: dict[AgentId, float]
    G: float

    def recompute(self) -> float:
        return combine(self.individual, self.connectivity)


def combine(individual: dict[AgentId, float], cv: dict[AgentId, float]) -> float:
    agents = sorted(individual)
    return sum(individual[a] * cv[a] for a in agents) / len(agents)


def group_index(g: GroupTopologyGraph) -> IndexReport:
    """Group index: mean over agents of individual index times connectivity."""
    if g.H < 2:
        raise DegenerateGroup("group index needs at least two agents")
    ind = {a: individual_index(g, a) for a in g.vertices}
    cv = {a: connectivity(g, a) for a in g.vertices}
    return IndexReport(ind, cv, combine(ind, cv))
