import random

import pytest

import oracles
from helpers import A, CLAP, series
from syncteam.logformat import read_recording
from syncteam.metrics import (
    AllZeroDifferences,
    average_ranks,
    compare_methods,
    gsi_table,
    histogram_gnuplot,
    histogram_text,
    session_ta,
    ta_histogram,
    timing_appropriateness,
    wilcoxon_signed_rank,
)
from syncteam.model import Method, SyncParams, human, robot
from syncteam.sim import DancerModel, RobotModel, SimConfig, generate_human_events, run_session

P = SyncParams()
HUMANS = [series(human(0), 3.0), series(human(1), 3.1), series(human(2), 3.2)]


# -- timing appropriateness --

def test_ta_cluster_mean():
    res = timing_appropriateness(HUMANS, series(robot(3), 3.5), P)
    (s,) = res.samples
    assert s.ideal_t == pytest.approx(3.1) and s.ta == pytest.approx(0.4)


def test_ta_exact_zero():
    (s,) = timing_appropriateness([series(human(0), 3.0)], series(robot(1), 3.0), P).samples
    assert s.ta == 0.0


def test_ta_nearest_unmatched():
    hs = [series(human(0), 3.1, 9.0)]
    res = timing_appropriateness(hs, series(robot(1), 3.0, 9.4), P)
    assert sorted(round(s.ta, 12) for s in res.samples) == [0.1, 0.4]


def test_ta_turn_matches_clap_and_leftovers():
    from syncteam.model import EventType
    hs = [series(human(0), (CLAP, 20.0), (A, 3.0))]
    rb = series(robot(1), (EventType.TURN, 20.2), (EventType.STOP_FORWARD, 5.0))
    res = timing_appropriateness(hs, rb, P)
    assert [(s.event, round(s.ta, 12)) for s in res.samples] == [(CLAP, 0.2)]
    assert len(res.unmatched_robot) == 1 and len(res.unmatched_clusters) == 1


# -- histogram --

def test_histogram_bins():
    h = ta_histogram([0.05, 0.10, 0.3, 2.49, 2.5, 7.0])
    assert h.counts[0] == 1 and h.counts[1] == 1 and h.counts[3] == 1
    assert h.counts[24] == 1 and h.overflow == 2
    assert len(h.counts) == 25 and h.edges[3] == 0.3


def test_histogram_matches_decimal_oracle():
    rng = random.Random(5)
    vals = [round(rng.uniform(0, 3), rng.choice([1, 2, 6])) for _ in range(2000)]
    h = ta_histogram(vals)
    want = [0] * 26
    for v in vals:
        want[oracles.histogram_bin(v)] += 1
    assert list(h.counts) + [h.overflow] == want


def test_histogram_empty():
    h = ta_histogram([])
    assert h.n == 0 and not h.cumulative_defined and h.cumulative_percent is None
    assert set(h.counts) == {0}
    assert "nan" in histogram_gnuplot(h)
    with pytest.raises(ValueError):
        ta_histogram([-0.1])


def test_histogram_cumulative_monotone():
    h = ta_histogram([0.01, 0.5, 0.52, 3.0])
    cum = h.cumulative_percent
    assert all(a <= b for a, b in zip(cum, cum[1:])) and cum[-1] == 100.0


def test_histogram_golden(fixtures):
    rec = read_recording(fixtures / "session_fixture.log")
    h = ta_histogram(session_ta(rec, P).samples)
    golden = fixtures / "golden"
    assert histogram_gnuplot(h, "fixture") == (golden / "ta_hist_fixture.dat").read_text()
    assert histogram_text(h, "fixture") == (golden / "ta_hist_fixture.txt").read_text()


# -- Wilcoxon --

def test_wilcoxon_small_example():
    r = wilcoxon_signed_rank([(1.0, 0.0), (0.0, 0.5), (2.0, 0.0)], method="exact")
    assert r.w_plus == 5 and r.p_two_sided == pytest.approx(0.5, abs=1e-15)


def test_wilcoxon_all_positive():
    r = wilcoxon_signed_rank([(1.0, 0.0)] * 5)
    assert r.w_plus == 15 and r.p_two_sided == pytest.approx(2 / 32, abs=1e-15)


def test_wilcoxon_symmetric():
    r = wilcoxon_signed_rank([(1.0, 0.0), (0.0, 1.0)])
    assert r.p_two_sided == 1.0


def test_wilcoxon_all_zero():
    with pytest.raises(AllZeroDifferences):
        wilcoxon_signed_rank([(1.0, 1.0), (2.0, 2.0)])


def test_wilcoxon_drops_zeros_keeps_n_pairs():
    r = wilcoxon_signed_rank([(1.0, 1.0), (2.0, 1.0), (3.0, 1.0)])
    assert r.n_pairs == 3 and r.n_effective == 2


def test_average_ranks_ties():
    assert average_ranks([1.0, 2.0, 2.0, 5.0]) == [1.0, 2.5, 2.5, 4.0]


def test_wilcoxon_exact_vs_oracle_with_ties():
    rng = random.Random(3)
    for _ in range(200):
        n = rng.randint(1, 9)
        diffs = [rng.choice([-2, -1, -0.5, 0.5, 1, 2, 3]) for _ in range(n)]
        if all(d == 0 for d in diffs):
            continue
        r = wilcoxon_signed_rank([(d, 0.0) for d in diffs], method="exact")
        assert r.p_two_sided == pytest.approx(oracles.signed_rank_p(diffs), abs=1e-12)


def test_wilcoxon_normal_matches_scipy():
    scipy_stats = pytest.importorskip("scipy.stats")
    rng = random.Random(8)
    for _ in range(20):
        d = [rng.gauss(0.2, 1) for _ in range(60)]
        ours = wilcoxon_signed_rank([(x, 0.0) for x in d], method="normal")
        ref = scipy_stats.wilcoxon(d, correction=True, method="approx")
        assert ours.p_two_sided == pytest.approx(ref.pvalue, rel=1e-9)


# -- session analysis --

def test_fixture_gsi_matches_oracle(fixtures):
    rec = read_recording(fixtures / "session_fixture.log")
    rep = gsi_table([rec], P)
    want = oracles.recording_gsi(rec, P.tau)
    assert rep.sessions[0].gsi == pytest.approx(want, abs=1e-9)


def test_golden_values_match_oracle(fixtures):
    import csv
    rec = read_recording(fixtures / "session_fixture.log")
    row = next(csv.DictReader((fixtures / "golden" / "gsi.csv").open()))
    got = [float(row[f"gsi_{i}"]) for i in range(4)]
    assert got == pytest.approx(oracles.recording_gsi(rec, P.tau), abs=1e-9)


def test_random_sessions_match_oracle():
    for seed in range(6):
        for m in (Method.SIA, Method.ECA):
            rec = run_session(SimConfig(seed=seed, controller=m))
            got = gsi_table([rec], P).sessions[0].gsi
            assert got == pytest.approx(oracles.recording_gsi(rec, P.tau), abs=1e-9)


def test_one_agent_rejected():
    from syncteam.metrics import analyze_session
    from helpers import one_iteration
    with pytest.raises(ValueError, match="need ≥2 agents"):
        analyze_session(one_iteration(series(human(0), 1.0)), P)


def test_zero_noise_pair_gsi():
    zero = (DancerModel(0.0, 0.2, 0.0),) * 3
    cfg = SimConfig(dancers=zero, robot=RobotModel(0.1, 0.0))
    recs = [run_session(SimConfig(dancers=zero, robot=RobotModel(0.1, 0.0), controller=m))
            for m in (Method.SIA, Method.ECA)]
    rep = gsi_table(recs, P)
    assert len(rep.comparisons) == 1
    sia, eca = rep.sessions
    assert eca.gsi[1:] == pytest.approx([1.0] * 3, abs=1e-12)
    assert sia.gsi[1:] == pytest.approx([5 / 6] * 3, abs=1e-12)
    # idle robot in the first iteration: both methods are identical there
    assert sia.gsi[0] == eca.gsi[0]
    assert cfg.params == P


@pytest.mark.xfail(strict=True, reason="SIA robot connectivity 1/3 caps GSI at 5/6; see README")
def test_zero_noise_pair_all_one_no_winner():
    zero = (DancerModel(0.0, 0.2, 0.0),) * 3
    recs = [run_session(SimConfig(dancers=zero, robot=RobotModel(0.1, 0.0), controller=m))
            for m in (Method.SIA, Method.ECA)]
    rep = gsi_table(recs, P)
    assert all(g == pytest.approx(1.0) for s in rep.sessions for g in s.gsi)
    assert rep.winner_counts["none"] == 1


def test_compare_zero_noise_wilcoxon_not_applicable():
    zero = (DancerModel(0.0, 0.2, 0.0),) * 3
    cfg = SimConfig(dancers=zero, robot=RobotModel(0.0, 0.0))
    hum = generate_human_events(cfg)
    eca = run_session(SimConfig(dancers=zero, robot=RobotModel(0.0, 0.0), controller=Method.ECA), hum)
    s = compare_methods([(0, eca.with_series(eca.series), eca)], P)
    assert s.wilcoxon is None and s.wilcoxon_note.startswith("not applicable")


def test_reports_are_deterministic():
    rec = run_session(SimConfig(seed=4))
    a, b = gsi_table([rec], P), gsi_table([rec], P)
    assert a.to_json() == b.to_json() and a.gsi_csv() == b.gsi_csv()
