import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from helpers import A, B, CLAP, one_iteration, random_spaced_series, series
from syncteam.model import (
    EmptyEventType,
    EventSeries,
    EventType,
    Method,
    NoCommonBasis,
    SyncParams,
    TimedEvent,
    UnknownAgent,
    human,
    robot,
)
from syncteam.sync import (
    FullyConnected,
    RobotFollows,
    build_gtg,
    build_gtg_detailed,
    connectivity,
    directed_count,
    event_sync,
    group_index,
    individual_index,
    pair_sync_index,
)
from syncteam.model import GroupTopologyGraph

P = SyncParams(tau=0.25)
x0, x1 = human(0), human(1)


# -- directed count / event sync examples --

def test_directed_count_follow():
    assert directed_count(series(x0, 1.0), series(x1, 0.9), A, 0.25) == 1.0


def test_directed_count_equal_time_half():
    assert directed_count(series(x0, 2.0), series(x1, 2.0), A, 0.25) == 0.5


def test_directed_count_far():
    assert directed_count(series(x0, 1.0), series(x1, 2.0), A, 0.25) == 0.0


def test_directed_count_strict_window():
    # difference exactly tau does not count
    assert directed_count(series(x0, 1.5), series(x1, 1.25), A, 0.25) == 0.0


def test_event_sync_identity():
    assert event_sync(series(x0, 3.0), series(x1, 3.0), A, 0.25) == 1.0


def test_event_sync_example():
    x = series(x0, 0.0, 1.0)
    y = series(x1, 0.1, 2.0)
    assert directed_count(x, y, A, 0.25) == 0.0
    assert directed_count(y, x, A, 0.25) == 1.0
    assert event_sync(x, y, A, 0.25) == 0.5


def test_event_sync_async():
    assert event_sync(series(x0, 0.0), series(x1, 5.0), A, 0.25) == 0.0


def test_event_sync_empty_kind():
    with pytest.raises(EmptyEventType):
        event_sync(series(x0, 1.0), series(x1, (B, 1.0)), A, 0.25)


def test_early_kinds_rejected():
    with pytest.raises(ValueError):
        event_sync(series(x0, 1.0), series(x1, 1.0), EventType.EARLY_START_FORWARD, 0.25)


# -- pair index examples --

def test_pair_index_weighted():
    x = series(x0, (A, 1.0), (A, 2.0), (B, 5.0))
    y = series(x1, (A, 1.0), (A, 2.0), (B, 8.0))
    pi = pair_sync_index(x, y, P)
    assert pi.per_kind[A] == 1.0 and pi.per_kind[B] == 0.0
    assert pi.q == pytest.approx(4 / 6, abs=1e-15)


def test_pair_index_single_kind_reduces():
    x, y = series(x0, 0.0, 1.0), series(x1, 0.1, 2.0)
    assert pair_sync_index(x, y, P).q == event_sync(x, y, A, 0.25)


def test_pair_index_identical_multi_kind():
    x = series(x0, (A, 1.0), (B, 2.0), (CLAP, 3.0), (A, 4.0))
    y = series(x1, (A, 1.0), (B, 2.0), (CLAP, 3.0), (A, 4.0))
    assert pair_sync_index(x, y, P).q == 1.0


def test_pair_index_one_sided_kind_counts_zero():
    x = series(x0, (A, 1.0), (CLAP, 3.0))
    y = series(x1, (A, 1.0))
    # A contributes 1 with weight 2, clap contributes 0 with weight 1
    assert pair_sync_index(x, y, P).q == pytest.approx(2 / 3)


def test_pair_index_turn_matches_clap():
    x = series(x0, (CLAP, 3.0))
    r = EventSeries(robot(1), (TimedEvent(robot(1), EventType.TURN, 3.1),))
    # the turn follows the clap within tau: c(r|x) = 1, c(x|r) = 0, sqrt(1 * 1) = 1
    assert pair_sync_index(x, r, P).q == 1.0


def test_pair_index_no_basis():
    with pytest.raises(NoCommonBasis):
        pair_sync_index(EventSeries(x0), EventSeries(x1), P)


def test_pair_index_clamps_and_reports():
    x = series(x0, (CLAP, 5.0), (CLAP, 5.05))
    y = series(x1, (CLAP, 5.1))
    pi = pair_sync_index(x, y, P)
    assert pi.q == 1.0 and pi.clamped == (CLAP,)
    assert event_sync(x, y, CLAP, 0.25) > 1.0


# -- graph --

def _rec(n_h, with_robot=False, method=Method.HUMANS_ONLY):
    ss = [series(human(i), 1.0, 5.0) for i in range(n_h)]
    if with_robot:
        ss.append(series(robot(n_h), 1.0, 5.0))
    return one_iteration(*ss, method=method)


def test_fully_connected_edge_count():
    g = build_gtg(_rec(4), 0, FullyConnected(), P)
    assert len(g.edges) == 12


def test_robot_follows_degrees():
    g = build_gtg(_rec(3, True), 0, RobotFollows(human(1)), P)
    r = robot(3)
    assert g.out_degree(r) == 1 and g.in_degree(r) == 3
    assert [b for b, _ in g.out_edges(r)] == [human(1)]


def test_robot_follows_unknown():
    with pytest.raises(UnknownAgent):
        build_gtg(_rec(3, True), 0, RobotFollows(human(7)), P)


def test_two_identical_agents():
    g = build_gtg(_rec(2), 0, FullyConnected(), P)
    assert sorted(g.edges.values()) == [1.0, 1.0]


def test_empty_pair_gets_zero():
    rec = one_iteration(series(x0, 1.0), EventSeries(x1), EventSeries(human(2)))
    gb = build_gtg_detailed(rec, 0, FullyConnected(), P)
    assert [p.q for p in gb.pairs] == [0.0, 0.0, 0.0]


def _graph(weights, vertices):
    return GroupTopologyGraph(tuple(vertices), dict(weights))


def test_individual_and_connectivity_examples():
    a, b, c = human(0), human(1), human(2)
    g = _graph({(a, b): 0.4, (a, c): 0.6, (b, a): 0.4, (c, a): 0.6}, [a, b, c])
    assert individual_index(g, a) == 0.5
    r = robot(3)
    vs = [a, b, c, r]
    w = {(u, v): 0.8 for u in vs for v in vs if u != v and not u.is_robot}
    w[(r, b)] = 0.8
    g2 = _graph(w, vs)
    assert individual_index(g2, r) == 0.8
    assert connectivity(g2, r) == pytest.approx(1 / 3)
    assert connectivity(g2, a) == 1.0
    g3 = _graph({(a, b): 0.7, (b, a): 0.7}, [a, b])
    assert connectivity(g3, a) == 1.0
    assert group_index(g3).G == 0.7


def test_group_index_all_one():
    for H in (2, 3, 5):
        vs = [human(i) for i in range(H)]
        g = _graph({(u, v): 1.0 for u in vs for v in vs if u != v}, vs)
        rep = group_index(g)
        assert rep.G == 1.0 and all(v == 1.0 for v in rep.individual.values())


def test_group_index_hand_example():
    hs = [human(i) for i in range(3)]
    r = robot(3)
    w = {(u, v): 0.6 for u in hs for v in hs if u != v}
    for h in hs:
        w[(h, r)] = 0.3
    w[(r, hs[0])] = 0.3
    rep = group_index(_graph(w, hs + [r]))
    assert all(rep.individual[h] == pytest.approx(0.5) for h in hs)
    assert rep.individual[r] == 0.3
    assert rep.G == pytest.approx(0.4, abs=1e-15)
    assert rep.G == pytest.approx(rep.recompute(), abs=0)


@pytest.mark.parametrize("H", [3, 4, 5])
def test_sia_robot_connectivity(H):
    rec = _rec(H - 1, True)
    g = build_gtg(rec, 0, RobotFollows(human(0)), P)
    assert connectivity(g, rec.robot) == pytest.approx(1 / (H - 1), abs=0)


# -- oracle comparisons and properties --

def _ev(s):
    return [(e.event.value, e.t) for e in s.events]


def test_oracle_random_pairs():
    rng = random.Random(11)
    for _ in range(300):
        tau = rng.choice([0.1, 0.25, 0.5])
        x = random_spaced_series(rng, x0, tau, 12)
        y = random_spaced_series(rng, x1, tau, 12)
        for k in (A, B, CLAP):
            tx, ty = x.times(k), y.times(k)
            assert directed_count(x, y, k, tau) == oracles.directed_count(tx, ty, tau)
        if x.events or y.events:
            assert pair_sync_index(x, y, SyncParams(tau=tau)).q == pytest.approx(
                oracles.pair_index(_ev(x), _ev(y), tau), abs=1e-12)


times = st.lists(st.floats(0, 100, allow_nan=False).map(lambda v: round(v, 2)), min_size=1, max_size=15)


@settings(max_examples=200, deadline=None)
@given(times, times, st.sampled_from([0.05, 0.25, 1.0]))
def test_directed_count_matches_oracle_any_spacing(tx, ty, tau):
    x, y = series(x0, *tx), series(x1, *ty)
    assert directed_count(x, y, A, tau) == oracles.directed_count(sorted(tx), sorted(ty), tau)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(-50, 50).map(lambda v: round(v, 1)))
def test_shift_invariance_integer_grid(seed, dt):
    # times on a 1/8 grid shift exactly, so the index must not move at all
    rng = random.Random(seed)
    tau = 0.25
    def grid_series(a):
        evs = []
        for k in (A, B):
            t = 60.0
            for _ in range(rng.randint(1, 8)):
                t += rng.randint(3, 20) / 8
                evs.append(TimedEvent(a, k, t))
        return EventSeries.from_events(a, evs)
    x, y = grid_series(x0), grid_series(x1)
    dt = round(dt * 8) / 8
    q = pair_sync_index(x, y, SyncParams(tau=tau)).q
    assert pair_sync_index(x.shifted(dt), y.shifted(dt), SyncParams(tau=tau)).q == q
