"""Command-line entry point: analyze, simulate, compare, replay, serve.

Exit codes: 0 ok, 1 fatal error, 2 finished but with diagnostics (the
report is still written).
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

from .logformat import (
    ConfigError,
    LogParseError,
    RunConfig,
    read_config,
    read_recording,
    write_analysis,
    write_recording,
)
from .metrics import AnalysisReport, gsi_table, histogram_gnuplot, histogram_text
from .model import Method, SyncParams
from .sim import run_comparison, run_session

DEFAULT_LISTEN = "127.0.0.1:7878"
LISTEN_ENV = "SYNCTEAM_LISTEN"

EXIT_OK, EXIT_FATAL, EXIT_DIAG = 0, 1, 2


def _fail(msg: str) -> int:
    print(f"syncteam: error: {msg}", file=sys.stderr)
    return EXIT_FATAL


def _report_diagnostics(diags: list[str]) -> int:
    for d in diags:
        print(f"diagnostic: {d}", file=sys.stderr)
    return EXIT_DIAG if diags else EXIT_OK


def _load_config(path: str | None) -> RunConfig:
    return read_config(path) if path else RunConfig()


def _params(args, cfg: RunConfig) -> SyncParams:
    p = cfg.params
    over = {k: v for k, v in (("tau", args.tau), ("cluster_epsilon", args.epsilon),
                              ("early_window_delta", args.delta),
                              ("early_count_threshold", args.threshold)) if v is not None}
    return replace(p, **over) if over else p


def _out_dir(args, cfg: RunConfig) -> Path:
    return Path(args.out or cfg.out_dir or ".")


def cmd_analyze(args) -> int:
    try:
        cfg = _load_config(args.config)
        p = _params(args, cfg)
        recs = [read_recording(path) for path in args.logs]
    except (LogParseError, ConfigError, OSError) as exc:
        return _fail(str(exc))
    try:
        report = gsi_table(recs, p)
    except ValueError as exc:
        return _fail(str(exc))
    out = _out_dir(args, cfg)
    write_analysis(report, out)
    print(f"wrote {out / 'gsi.csv'}, {out / 'pairs.csv'}, {out / 'report.json'}")
    return _report_diagnostics(report.diagnostics)


def cmd_simulate(args) -> int:
    try:
        cfg = _load_config(args.config)
        p = _params(args, cfg)
    except (ConfigError, OSError, ValueError) as exc:
        return _fail(str(exc))
    sim = cfg.sim
    if args.seed is not None:
        sim = replace(sim, seed=args.seed)
    rec = run_session(replace(sim, params=p))
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    write_recording(rec, out / "session.log")
    report = gsi_table([rec], p)
    write_analysis(report, out)
    print(f"wrote {out / 'session.log'} and report files; mean GSI {report.sessions[0].mean_gsi:.4f}")
    return _report_diagnostics(report.diagnostics)


def cmd_compare(args) -> int:
    try:
        cfg = _load_config(args.config)
        p = _params(args, cfg)
    except (ConfigError, OSError, ValueError) as exc:
        return _fail(str(exc))
    runs = args.runs if args.runs is not None else cfg.runs
    if runs < 1:
        return _fail(f"--runs must be >= 1, got {runs}")
    sim = cfg.sim if args.seed is None else replace(cfg.sim, seed=args.seed)
    summary = run_comparison(replace(sim, params=p), runs)
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    (out / "comparison.json").write_text(summary.to_json(), encoding="utf-8")
    sessions = tuple(s for pc in summary.pairs for s in (pc.sia, pc.eca))
    (out / "gsi.csv").write_text(AnalysisReport(p, sessions, summary.pairs).gsi_csv(),
                                 encoding="utf-8")
    for m in (Method.SIA, Method.ECA):
        h = summary.histogram(m)
        (out / f"ta_hist_{m.value}.dat").write_text(histogram_gnuplot(h, m.value), encoding="utf-8")
        (out / f"ta_hist_{m.value}.txt").write_text(histogram_text(h, m.value), encoding="utf-8")
    wc = summary.winner_counts
    sm, ssd = summary.ta_stats(Method.SIA)
    em, esd = summary.ta_stats(Method.ECA)
    print(f"runs: {runs}  mean-GSI wins: SIA {wc['SIA']}, ECA {wc['ECA']}, none {wc['none']}")
    fmt = lambda v: "n/a" if v is None else f"{v:.4f}"  # noqa: E731
    print(f"TA SIA mean {fmt(sm)} sd {fmt(ssd)}; ECA mean {fmt(em)} sd {fmt(esd)}; "
          f"SIA lower: {summary.sia_ta_lower}")
    if summary.wilcoxon is not None:
        w = summary.wilcoxon
        print(f"Wilcoxon ({w.method}): n={w.n_effective} W={w.W} z={w.z:.4f} p={w.p_two_sided:.4g}")
    else:
        print(f"Wilcoxon: {summary.wilcoxon_note}")
    return EXIT_OK


def cmd_replay(args) -> int:
    from .stream import parse_hostport, replay, send_lines

    try:
        rec = read_recording(args.log)
    except (LogParseError, OSError) as exc:
        return _fail(str(exc))
    if not args.speed > 0:
        return _fail("--speed must be positive")
    lines = replay(rec, args.speed)
    if args.connect is None:
        for line in lines:
            print(line, flush=True)
        return EXIT_OK
    try:
        host, port = parse_hostport(args.connect)
        replies = send_lines(host, port, lines)
    except ValueError as exc:
        return _fail(str(exc))
    except OSError as exc:
        return _fail(f"cannot connect to {args.connect}: {exc}")
    return _report_diagnostics(replies)


def resolve_listen(flag: str | None, env: dict | None = None) -> str:
    """--listen wins, then $SYNCTEAM_LISTEN, then the default."""
    env = os.environ if env is None else env
    return flag or env.get(LISTEN_ENV) or DEFAULT_LISTEN


def cmd_serve(args) -> int:
    from .anticipate import make_controller
    from .stream import LiveSession, parse_hostport, serve, write_session_outputs

    try:
        cfg = _load_config(args.config)
        p = _params(args, cfg)
        host, port = parse_hostport(resolve_listen(args.listen))
    except (ConfigError, OSError, ValueError) as exc:
        return _fail(str(exc))
    out = _out_dir(args, cfg)
    status = {"code": EXIT_OK, "n": 0}
    ctrl = None if args.controller == "none" else Method(args.controller)

    def new_session() -> LiveSession:
        return LiveSession(p, make_controller(ctrl, p))

    def on_close(session: LiveSession) -> None:
        target = out if args.once else out / f"session{status['n']}"
        status["n"] += 1
        try:
            write_session_outputs(session, target)
        except ValueError as exc:
            print(f"syncteam: session rejected: {exc}", file=sys.stderr)
            status["code"] = EXIT_FATAL
            return
        report = gsi_table([session.recording()], p)
        print(f"session closed; report in {target}", flush=True)
        code = _report_diagnostics(session.diagnostics + report.diagnostics)
        status["code"] = max(status["code"], code)

    def ready(h: str, prt: int) -> None:
        print(f"listening on {h}:{prt}", flush=True)

    try:
        serve(host, port, new_session, on_close, once=args.once, ready=ready)
    except OSError as exc:
        return _fail(f"cannot listen on {host}:{port}: {exc}")
    except KeyboardInterrupt:
        pass
    return status["code"]


def _add_params(sp: argparse.ArgumentParser) -> None:
    g = sp.add_argument_group("synchronization parameters (override the config file)")
    g.add_argument("--tau", type=float, help="co-occurrence lag in seconds (default 0.25)")
    g.add_argument("--epsilon", type=float,
                   help="ECA cluster radius in seconds (default 0.5)")
    g.add_argument("--delta", type=float,
                   help="SIA early-event window in seconds (default 0.5)")
    g.add_argument("--threshold", type=int,
                   help="SIA early events needed to trigger a command (default 1)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="syncteam",
        description="Group synchronization analysis and robot anticipation simulation.",
        epilog="exit codes: 0 ok, 1 fatal error, 2 completed with diagnostics",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    ap.add_argument("-v", "--verbose", action="store_true", help="log protocol warnings")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")
    fmt = argparse.ArgumentDefaultsHelpFormatter

    a = sub.add_parser("analyze", help="GSI/TA report of one or more session logs",
                       formatter_class=fmt)
    a.add_argument("logs", nargs="+", metavar="LOG", help="session log file(s)")
    a.add_argument("--config", help="JSON run config (only its sync section is used)")
    a.add_argument("--out", help="output directory (default: config output.dir or .)")
    _add_params(a)
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("simulate", help="simulate one session and analyze it", formatter_class=fmt)
    s.add_argument("--config", help="JSON run config (built-in defaults when omitted)")
    s.add_argument("--out", help="output directory (default: config output.dir or .)")
    s.add_argument("--seed", type=int, help="override the config seed")
    _add_params(s)
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("compare", help="paired SIA vs ECA runs over consecutive seeds",
                       formatter_class=fmt)
    c.add_argument("--config", help="JSON run config (built-in defaults when omitted)")
    c.add_argument("--runs", type=int, help="number of paired runs (default: config runs, 30)")
    c.add_argument("--out", help="output directory (default: config output.dir or .)")
    c.add_argument("--seed", type=int, help="first seed (default: config seed)")
    _add_params(c)
    c.set_defaults(func=cmd_compare)

    r = sub.add_parser("replay", help="stream a session log over the wire protocol",
                       formatter_class=fmt)
    r.add_argument("log", metavar="LOG", help="session log file")
    r.add_argument("--speed", type=float, default=math.inf,
                   help="playback speed multiple; inf sends as fast as possible")
    r.add_argument("--connect", metavar="HOST:PORT",
                   help="server address; without it the lines go to stdout")
    r.set_defaults(func=cmd_replay)

    v = sub.add_parser("serve", help="ingest live sessions and write a report on close",
                       formatter_class=fmt)
    v.add_argument("--listen", metavar="HOST:PORT",
                   help=f"listen address (default: ${LISTEN_ENV} or {DEFAULT_LISTEN}); "
                        "port 0 picks a free port")
    v.add_argument("--out", help="report directory (default: config output.dir or .)")
    v.add_argument("--once", action="store_true",
                   help="exit after the first session closes; otherwise each session "
                        "gets its own sessionN subdirectory")
    v.add_argument("--controller", choices=["none", "SIA", "ECA"], default="none",
                   help="drive a live controller from the ingested events")
    v.add_argument("--config", help="JSON run config (only its sync section is used)")
    _add_params(v)
    v.set_defaults(func=cmd_serve)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
