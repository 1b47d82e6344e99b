"""Evaluation pipeline: timing appropriateness, histograms, GSI tables and the
Wilcoxon signed-rank comparison of two anticipation methods."""
from __future__ import annotations

import bisect
import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from . import __version__
from .anticipate import EventCluster, cluster_events, msp_sequence
from .model import (
    REGULAR_KINDS,
    AgentId,
    EventSeries,
    EventType,
    Method,
    SessionRecording,
    SyncParams,
    TimedEvent,
)
from .sync import FullyConnected, RobotFollows, build_gtg_detailed, group_index

# -- timing appropriateness ---------------------------------------------------


@dataclass(frozen=True)
class TaSample:
    event: EventType
    robot_t: float
    ideal_t: float
    ta: float
    iteration: int = 0
    # rank of the human cluster among same-kind clusters of its iteration
    occurrence: int = 0

    @property
    def key(self) -> tuple[int, str, int]:
        return (self.iteration, self.event.token, self.occurrence)


@dataclass(frozen=True)
class TaResult:
    samples: tuple[TaSample, ...]
    unmatched_robot: tuple[TimedEvent, ...] = ()
    unmatched_clusters: tuple[EventCluster, ...] = ()

    def values(self) -> list[float]:
        return [s.ta for s in self.samples]

    def __add__(self, other: "TaResult") -> "TaResult":
        return TaResult(self.samples + other.samples,
                        self.unmatched_robot + other.unmatched_robot,
                        self.unmatched_clusters + other.unmatched_clusters)


def timing_appropriateness(humans: Iterable[EventSeries], robot: EventSeries, p: SyncParams,
                           iteration: int | None = None) -> TaResult:
    """Match robot events to human event clusters and measure their offsets.

    The ideal time of a clustered event is the mean of its members.  Each
    cluster is paired with the nearest unmatched robot event of the same kind
    (Turn counts as Clap), globally greedy by absolute offset.  Leftovers on
    either side come back as unmatched diagnostics.
    """
    clusters = cluster_events(humans, p.cluster_epsilon, iteration)
    robot_evs = [e for e in robot.events
                 if not e.event.is_early and (iteration is None or e.iteration == iteration)]
    samples = []
    unmatched_r = []
    unmatched_c = []
    for kind in REGULAR_KINDS:
        cs = sorted((c for c in clusters if c.event is kind), key=lambda c: c.member_times[0])
        rs = [e for e in robot_evs if e.event.canonical is kind]
        cands = sorted(
            (abs(r.t - c.mean_t), c.mean_t, r.t, ci, ri)
            for ci, c in enumerate(cs) for ri, r in enumerate(rs)
        )
        used_c: set[int] = set()
        used_r: set[int] = set()
        for d, ideal, rt, ci, ri in cands:
            if ci in used_c or ri in used_r:
                continue
            used_c.add(ci)
            used_r.add(ri)
            it = iteration if iteration is not None else rs[ri].iteration
            samples.append(TaSample(kind, rt, ideal, d, it, ci))
        unmatched_c.extend(c for ci, c in enumerate(cs) if ci not in used_c)
        unmatched_r.extend(r for ri, r in enumerate(rs) if ri not in used_r)
    samples.sort(key=lambda s: (s.iteration, s.ideal_t, REGULAR_KINDS.index(s.event)))
    unmatched_r.sort(key=lambda e: e.t)
    unmatched_c.sort(key=lambda c: c.member_times[0])
    return TaResult(tuple(samples), tuple(unmatched_r), tuple(unmatched_c))


def session_ta(rec: SessionRecording, p: SyncParams) -> TaResult:
    """Timing appropriateness of the robot over every iteration of `rec`."""
    if rec.robot is None:
        return TaResult(())
    humans = [s for s in rec.series if not s.agent.is_robot]
    robot = rec.series_of(rec.robot)
    out = TaResult(())
    for i in range(rec.n_iterations):
        out = out + timing_appropriateness(humans, robot, p, iteration=i)
    return out


# -- histogram ------------------------------------------------------------------


@dataclass(frozen=True)
class Histogram:
    bin_width: float
    upper: float
    edges: tuple[float, ...]
    counts: tuple[int, ...]
    overflow: int

    @property
    def n(self) -> int:
        return sum(self.counts) + self.overflow

    @property
    def cumulative_defined(self) -> bool:
        return self.n > 0

    @property
    def cumulative_percent(self) -> tuple[float, ...] | None:
        """Cumulative share per bin in percent, overflow last (ends at 100)."""
        if not self.n:
            return None
        out = []
        run = 0
        for c in self.counts + (self.overflow,):
            run += c
            out.append(100.0 * run / self.n)
        return tuple(out)

    def to_dict(self) -> dict:
        return {
            "bin_width": self.bin_width,
            "range": [0.0, self.upper],
            "edges": list(self.edges),
            "counts": list(self.counts),
            "overflow": self.overflow,
            "n": self.n,
            "cumulative_defined": self.cumulative_defined,
            "cumulative_percent": list(self.cumulative_percent) if self.n else None,
        }


def ta_histogram(samples: Iterable[TaSample | float], bin_width: float = 0.1,
                 upper: float = 2.5) -> Histogram:
    """Bin TA values into [k w, (k+1) w) bins over [0, upper), rest to overflow."""
    nbins = int(round(upper / bin_width))
    # decimal edges: k * 0.1 accumulates error (3 * 0.1 > 0.3)
    edges = tuple(round(k * bin_width, 12) for k in range(nbins + 1))
    counts = [0] * nbins
    overflow = 0
    for s in samples:
        v = s.ta if isinstance(s, TaSample) else float(s)
        if v < 0:
            raise ValueError(f"negative TA value {v}")
        if v >= edges[-1]:
            overflow += 1
        else:
            counts[bisect.bisect_right(edges, v) - 1] += 1
    return Histogram(bin_width, upper, edges, tuple(counts), overflow)


def histogram_gnuplot(h: Histogram, label: str = "") -> str:
    """Whitespace-separated columns: lo hi count cumulative_percent."""
    lines = [f"# timing appropriateness histogram {label}".rstrip(),
             f"# bin_width={h.bin_width!r} n={h.n} overflow={h.overflow}",
             "# lo hi count cum_pct"]
    cum = h.cumulative_percent
    for k, c in enumerate(h.counts):
        pct = "nan" if cum is None else f"{cum[k]:.4f}"
        lines.append(f"{h.edges[k]:.1f} {h.edges[k + 1]:.1f} {c} {pct}")
    pct = "nan" if cum is None else f"{cum[-1]:.4f}"
    lines.append(f"{h.edges[-1]:.1f} inf {h.overflow} {pct}")
    return "\n".join(lines) + "\n"


def histogram_text(h: Histogram, label: str = "", width: int = 40) -> str:
    """Plain-text bar plot with counts and cumulative percentages."""
    top = max(h.counts + (h.overflow,)) or 1
    cum = h.cumulative_percent
    lines = [f"TA histogram {label}".rstrip() + f" (n={h.n})"]
    rows = [(f"[{h.edges[k]:.1f},{h.edges[k + 1]:.1f})", c) for k, c in enumerate(h.counts)]
    rows.append((f">={h.edges[-1]:.1f}", h.overflow))
    for k, (name, c) in enumerate(rows):
        bar = "#" * int(round(width * c / top))
        pct = "    -" if cum is None else f"{cum[k]:6.2f}%"
        lines.append(f"{name:>11} {c:5d} {pct} {bar}".rstrip())
    return "\n".join(lines) + "\n"


# -- Wilcoxon signed-rank ----------------------------------------------------------


class AllZeroDifferences(ValueError):
    pass


@dataclass(frozen=True)
class WilcoxonResult:
    n_pairs: int
    n_effective: int
    w_plus: float
    w_minus: float
    z: float
    p_two_sided: float
    effect_r: float
    method: str
    convention: str = ("d = first - second; W = W+ (sum of ranks of positive d); "
                       "z = (W+ - n(n+1)/4 -/+ 0.5) / sd with tie correction, negative when "
                       "first < second; r = z / sqrt(n_pairs), n_pairs counts zero differences")

    @property
    def W(self) -> float:
        return self.w_plus

    def to_dict(self) -> dict:
        return {
            "n_pairs": self.n_pairs, "n_effective": self.n_effective,
            "W": self.w_plus, "w_plus": self.w_plus, "w_minus": self.w_minus,
            "z": self.z, "p_two_sided": self.p_two_sided, "effect_r": self.effect_r,
            "method": self.method, "convention": self.convention,
        }


def average_ranks(values: Sequence[float]) -> list[float]:
    """Ranks 1..n of `values`, tied values sharing their mean rank."""
    order = sorted(range(len(values)), key=values.__getitem__)
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        r = (i + j + 2) / 2.0
        for k in range(i, j + 1):
            ranks[order[k]] = r
        i = j + 1
    return ranks


def _signed_rank_stats(diffs: Sequence[float]):
    nz = [d for d in diffs if d != 0.0]
    if not nz:
        raise AllZeroDifferences("every paired difference is zero")
    ranks = average_ranks([abs(d) for d in nz])
    w_plus = sum(r for r, d in zip(ranks, nz) if d > 0)
    w_minus = sum(r for r, d in zip(ranks, nz) if d < 0)
    return nz, ranks, w_plus, w_minus


def exact_signed_rank_pvalue(ranks: Sequence[float], w_plus: float) -> float:
    """Two-sided p of W+ under the sign-flip null, by counting subset sums.

    Average ranks are multiples of 1/2, so doubled ranks are integers and the
    null distribution is an integer-indexed table.
    """
    dr = [int(round(2 * r)) for r in ranks]
    total = sum(dr)
    counts = [0] * (total + 1)
    counts[0] = 1
    for r in dr:
        for s in range(total, r - 1, -1):
            counts[s] += counts[s - r]
    w2 = int(round(2 * w_plus))
    lower = sum(counts[: w2 + 1])
    upper = sum(counts[w2:])
    n_perm = 2 ** len(dr)
    return min(1.0, 2.0 * min(lower, upper) / n_perm)


def _normal_z(n: int, ranks: Sequence[float], w_plus: float) -> float:
    mean = n * (n + 1) / 4.0
    ties: dict[float, int] = {}
    for r in ranks:
        ties[r] = ties.get(r, 0) + 1
    var = n * (n + 1) * (2 * n + 1) / 24.0 - sum(t ** 3 - t for t in ties.values()) / 48.0
    d = w_plus - mean
    if var <= 0:
        return 0.0
    return math.copysign(max(abs(d) - 0.5, 0.0), d) / math.sqrt(var)


def wilcoxon_signed_rank(paired: Iterable[tuple[float, float]], method: str = "auto",
                         exact_max_n: int = 20) -> WilcoxonResult:
    """Wilcoxon signed-rank test on (first, second) pairs.

    Zero differences are dropped.  With at most `exact_max_n` nonzero
    differences the two-sided p is exact (full sign-permutation
    distribution, tie-aware); above that a normal approximation with tie and
    continuity corrections is used.  `method` forces "exact" or "normal".
    """
    pairs = [(float(a), float(b)) for a, b in paired]
    diffs = [a - b for a, b in pairs]
    nz, ranks, w_plus, w_minus = _signed_rank_stats(diffs)
    n = len(nz)
    z = _normal_z(n, ranks, w_plus)
    if method == "auto":
        method = "exact" if n <= exact_max_n else "normal"
    if method == "exact":
        p = exact_signed_rank_pvalue(ranks, w_plus)
    elif method == "normal":
        p = min(1.0, math.erfc(abs(z) / math.sqrt(2.0)))
    else:
        raise ValueError(f"unknown method {method!r}")
    return WilcoxonResult(len(pairs), n, w_plus, w_minus, z, p, z / math.sqrt(len(pairs)), method)


# -- GSI tables ------------------------------------------------------------------


@dataclass(frozen=True)
class IterationResult:
    iteration: int
    G: float
    individual: dict[AgentId, float]
    connectivity: dict[AgentId, float]
    followed: AgentId | None
    pairs: tuple[tuple[AgentId, AgentId, float], ...]
    violations: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "gsi": self.G,
            "robot_follows": None if self.followed is None else str(self.followed),
            "individual": {str(a): v for a, v in self.individual.items()},
            "connectivity": {str(a): v for a, v in self.connectivity.items()},
            "pairs": [{"a": str(a), "b": str(b), "q": q} for a, b, q in self.pairs],
            "violations": list(self.violations),
        }


@dataclass(frozen=True)
class SessionResult:
    session: str
    method: Method
    group: str
    iterations: tuple[IterationResult, ...]
    ta: TaResult

    @property
    def gsi(self) -> list[float]:
        return [it.G for it in self.iterations]

    @property
    def mean_gsi(self) -> float:
        g = self.gsi
        return sum(g) / len(g)

    @property
    def violations(self) -> list[str]:
        return [v for it in self.iterations for v in it.violations]

    def to_dict(self) -> dict:
        return {
            "session": self.session,
            "method": self.method.value,
            "group": self.group,
            "gsi": self.gsi,
            "mean_gsi": self.mean_gsi,
            "iterations": [it.to_dict() for it in self.iterations],
            "ta": {
                "samples": [_ta_dict(s) for s in self.ta.samples],
                "unmatched_robot": [{"t": e.t, "event": e.event.token, "iteration": e.iteration}
                                    for e in self.ta.unmatched_robot],
                "unmatched_clusters": [{"event": c.event.token, "mean_t": c.mean_t,
                                        "members": list(c.member_times)}
                                       for c in self.ta.unmatched_clusters],
            },
        }


def _ta_dict(s: TaSample) -> dict:
    return {"event": s.event.token, "iteration": s.iteration, "occurrence": s.occurrence,
            "robot_t": s.robot_t, "ideal_t": s.ideal_t, "ta": s.ta}


def analyze_session(rec: SessionRecording, p: SyncParams, session: str = "session0") -> SessionResult:
    """Per-iteration group index and robot TA of one recording.

    SIA recordings give the robot a single outgoing edge, to the human it
    followed in that iteration; every other case is fully connected.
    """
    if len(rec.agents) < 2:
        raise ValueError("need ≥2 agents")
    follows = msp_sequence(rec, p) if (rec.method_label is Method.SIA and rec.robot is not None) \
        else [None] * rec.n_iterations
    its = []
    for i in range(rec.n_iterations):
        policy = RobotFollows(follows[i]) if follows[i] is not None else FullyConnected()
        gb = build_gtg_detailed(rec, i, policy, p)
        rep = group_index(gb.graph)
        diag = [v.describe() for v in gb.violations]
        diag += [f"{pi.a}-{pi.b}: clamped {e.token} index to 1" for pi in gb.pairs for e in pi.clamped]
        its.append(IterationResult(i, rep.G, rep.individual, rep.connectivity, follows[i],
                                   tuple((pi.a, pi.b, pi.q) for pi in gb.pairs), tuple(diag)))
    return SessionResult(session, rec.method_label, rec.metadata.get("group", session),
                         tuple(its), session_ta(rec, p))


def _winner(sia: float, eca: float) -> str | None:
    if sia > eca:
        return "SIA"
    if eca > sia:
        return "ECA"
    return None


@dataclass(frozen=True)
class PairComparison:
    group: str
    sia: SessionResult
    eca: SessionResult

    @property
    def iteration_winners(self) -> list[str | None]:
        return [_winner(a, b) for a, b in zip(self.sia.gsi, self.eca.gsi)]

    @property
    def mean_winner(self) -> str | None:
        return _winner(self.sia.mean_gsi, self.eca.mean_gsi)

    def to_dict(self) -> dict:
        return {"group": self.group, "sia_session": self.sia.session,
                "eca_session": self.eca.session, "iteration_winners": self.iteration_winners,
                "mean_winner": self.mean_winner}


def _count_winners(pcs: Sequence[PairComparison]) -> dict[str, int]:
    out = {"SIA": 0, "ECA": 0, "none": 0}
    for pc in pcs:
        out[pc.mean_winner or "none"] += 1
    return out


@dataclass(frozen=True)
class AnalysisReport:
    params: SyncParams
    sessions: tuple[SessionResult, ...]
    comparisons: tuple[PairComparison, ...] = ()

    @property
    def winner_counts(self) -> dict[str, int]:
        return _count_winners(self.comparisons)

    @property
    def iteration_winner_counts(self) -> dict[str, int]:
        out = {"SIA": 0, "ECA": 0, "none": 0}
        for pc in self.comparisons:
            for w in pc.iteration_winners:
                out[w or "none"] += 1
        return out

    @property
    def diagnostics(self) -> list[str]:
        return [f"{s.session} iteration {it.iteration}: {v}"
                for s in self.sessions for it in s.iterations for v in it.violations]

    def to_dict(self) -> dict:
        return {
            "tool": "syncteam", "version": __version__,
            "params": _params_dict(self.params),
            "sessions": [s.to_dict() for s in self.sessions],
            "comparisons": [c.to_dict() for c in self.comparisons],
            "winner_counts": self.winner_counts,
            "iteration_winner_counts": self.iteration_winner_counts,
            "diagnostics": self.diagnostics,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def gsi_csv(self) -> str:
        """One row per session: GSI per iteration, mean, and winner flags."""
        n_it = max((len(s.iterations) for s in self.sessions), default=0)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["session", "group", "method"] + [f"gsi_{i}" for i in range(n_it)]
                   + ["mean_gsi"] + [f"win_{i}" for i in range(n_it)] + ["win_mean"])
        flags: dict[str, tuple[list[bool], bool]] = {}
        for pc in self.comparisons:
            iw = pc.iteration_winners
            flags[pc.sia.session] = ([x == "SIA" for x in iw], pc.mean_winner == "SIA")
            flags[pc.eca.session] = ([x == "ECA" for x in iw], pc.mean_winner == "ECA")
        for s in self.sessions:
            g = [repr(v) for v in s.gsi] + [""] * (n_it - len(s.iterations))
            iw, mw = flags.get(s.session, ([False] * n_it, False))
            w.writerow([s.session, s.group, s.method.value] + g + [repr(s.mean_gsi)]
                       + [int(x) for x in iw] + [int(mw)])
        return buf.getvalue()

    def pairs_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["session", "iteration", "a", "b", "q"])
        for s in self.sessions:
            for it in s.iterations:
                for a, b, q in it.pairs:
                    w.writerow([s.session, it.iteration, str(a), str(b), repr(q)])
        return buf.getvalue()


def _params_dict(p: SyncParams) -> dict:
    return {"tau": p.tau, "cluster_epsilon": p.cluster_epsilon,
            "early_window_delta": p.early_window_delta,
            "early_count_threshold": p.early_count_threshold}


def _pair_up(results: Sequence[SessionResult]) -> list[PairComparison]:
    by_group: dict[str, dict[Method, SessionResult]] = {}
    for r in results:
        by_group.setdefault(r.group, {}).setdefault(r.method, r)
    return [PairComparison(g, m[Method.SIA], m[Method.ECA])
            for g, m in by_group.items() if Method.SIA in m and Method.ECA in m]


def gsi_table(recordings: Sequence[SessionRecording], p: SyncParams) -> AnalysisReport:
    """Analyze every recording; SIA/ECA sessions sharing a group are compared."""
    results = []
    for k, rec in enumerate(recordings):
        name = rec.metadata.get("session", f"session{k}")
        results.append(analyze_session(rec, p, name))
    return AnalysisReport(p, tuple(results), tuple(_pair_up(results)))


# -- method comparison -----------------------------------------------------------


def paired_ta(sia: TaResult, eca: TaResult) -> list[tuple[float, float]]:
    """(SIA TA, ECA TA) for human clusters the robot hit under both methods.

    Pairs are keyed by (iteration, event kind, occurrence index of the human
    cluster); both methods see the same humans so the keys line up.
    """
    eca_by_key = {s.key: s.ta for s in eca.samples}
    return [(s.ta, eca_by_key[s.key]) for s in sia.samples if s.key in eca_by_key]


def _mean_sd(v: Sequence[float]) -> tuple[float | None, float | None]:
    if not v:
        return None, None
    m = sum(v) / len(v)
    if len(v) < 2:
        return m, None
    return m, math.sqrt(sum((x - m) ** 2 for x in v) / (len(v) - 1))


@dataclass(frozen=True)
class ComparisonSummary:
    params: SyncParams
    seeds: tuple[int, ...]
    pairs: tuple[PairComparison, ...]
    ta_pairs: tuple[tuple[float, float], ...]
    wilcoxon: WilcoxonResult | None
    wilcoxon_note: str = ""

    @property
    def winner_counts(self) -> dict[str, int]:
        return _count_winners(self.pairs)

    @property
    def sia_win_fraction(self) -> float:
        return self.winner_counts["SIA"] / len(self.pairs)

    def ta_values(self, method: Method) -> list[float]:
        attr = "sia" if method is Method.SIA else "eca"
        return [s.ta for pc in self.pairs for s in getattr(pc, attr).ta.samples]

    def ta_stats(self, method: Method) -> tuple[float | None, float | None]:
        return _mean_sd(self.ta_values(method))

    @property
    def sia_ta_lower(self) -> bool:
        a, _ = self.ta_stats(Method.SIA)
        b, _ = self.ta_stats(Method.ECA)
        return a is not None and b is not None and a < b

    def histogram(self, method: Method) -> Histogram:
        return ta_histogram(self.ta_values(method))

    def to_dict(self) -> dict:
        sia_m, sia_sd = self.ta_stats(Method.SIA)
        eca_m, eca_sd = self.ta_stats(Method.ECA)
        return {
            "tool": "syncteam", "version": __version__,
            "params": _params_dict(self.params),
            "seeds": list(self.seeds),
            "runs": [{"seed": s, "sia_gsi": pc.sia.gsi, "eca_gsi": pc.eca.gsi,
                      "sia_mean_gsi": pc.sia.mean_gsi, "eca_mean_gsi": pc.eca.mean_gsi,
                      "iteration_winners": pc.iteration_winners, "mean_winner": pc.mean_winner}
                     for s, pc in zip(self.seeds, self.pairs)],
            "winner_counts": self.winner_counts,
            "ta": {"SIA": {"mean": sia_m, "sd": sia_sd, "n": len(self.ta_values(Method.SIA))},
                   "ECA": {"mean": eca_m, "sd": eca_sd, "n": len(self.ta_values(Method.ECA))},
                   "sia_mean_lower": self.sia_ta_lower,
                   "n_pairs": len(self.ta_pairs)},
            "wilcoxon": self.wilcoxon.to_dict() if self.wilcoxon else None,
            "wilcoxon_note": self.wilcoxon_note,
            "histograms": {"SIA": self.histogram(Method.SIA).to_dict(),
                           "ECA": self.histogram(Method.ECA).to_dict()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def compare_methods(runs: Sequence[tuple[int, SessionRecording, SessionRecording]],
                    p: SyncParams) -> ComparisonSummary:
    """Summarize paired (seed, SIA recording, ECA recording) runs."""
    pcs = []
    ta_pairs: list[tuple[float, float]] = []
    for seed, sia_rec, eca_rec in runs:
        sia = analyze_session(sia_rec, p, f"seed{seed}-SIA")
        eca = analyze_session(eca_rec, p, f"seed{seed}-ECA")
        pcs.append(PairComparison(f"seed{seed}", sia, eca))
        ta_pairs.extend(paired_ta(sia.ta, eca.ta))
    try:
        wx = wilcoxon_signed_rank(ta_pairs)
        note = ""
    except AllZeroDifferences:
        wx, note = None, "not applicable: all paired TA differences are zero"
    if not ta_pairs:
        wx, note = None, "not applicable: no paired TA samples"
    return ComparisonSummary(p, tuple(s for s, _, _ in runs), tuple(pcs), tuple(ta_pairs), wx, note)
