"""Session log files, run configuration files, and report output.

A session log is JSON lines: one header record describing the session, then
one record per event with a fixed field order so that logs diff cleanly and
golden files can be compared byte for byte::

    {"record":"session","format":"syncteam-log/1","method":"SIA",...}
    {"t":3.0,"agent":0,"kind":"human","event":"start_forward","iteration":0,"early":false}

Event fields other than the six known ones are kept verbatim as opaque
metadata.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .model import (
    AgentId,
    AgentKind,
    EventSeries,
    EventType,
    Method,
    SessionRecording,
    SyncParams,
    TimedEvent,
)
from .sim import Choreography, DancerModel, RobotModel, SimConfig

LOG_FORMAT = "syncteam-log/1"
_EVENT_FIELDS = ("t", "agent", "kind", "event", "iteration", "early")


class LogParseError(ValueError):
    def __init__(self, msg: str, line: int, column: int = 1, path: str = "<log>"):
        super().__init__(f"{path}:{line}:{column}: {msg}")
        self.line = line
        self.column = column


def _dumps(obj: Any) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def event_record(ev: TimedEvent) -> str:
    rec = {
        "t": ev.t,
        "agent": ev.agent.id,
        "kind": ev.agent.kind.value,
        "event": ev.event.token,
        "iteration": ev.iteration,
        "early": ev.event.is_early,
    }
    body = _dumps(rec)
    if ev.extra:
        body = body[:-1] + "".join(f",{_dumps(k)}:{v}" for k, v in sorted(ev.extra)) + "}"
    return body


def dumps_recording(rec: SessionRecording) -> str:
    header = {
        "record": "session",
        "format": LOG_FORMAT,
        "method": rec.method_label.value,
        "agents": [{"id": a.id, "kind": a.kind.value} for a in rec.agents],
        "iterations": [[s, e] for s, e in rec.iteration_boundaries],
        "metadata": dict(sorted(rec.metadata.items())),
    }
    lines = [_dumps(header)]
    order = {id(e): k for s in rec.series for k, e in enumerate(s.events)}
    evs = [e for s in rec.series for e in s.events]
    evs.sort(key=lambda e: (e.t, e.agent.id, order[id(e)]))
    lines.extend(event_record(e) for e in evs)
    return "\n".join(lines) + "\n"


def write_recording(rec: SessionRecording, path: str | Path) -> None:
    Path(path).write_text(dumps_recording(rec), encoding="utf-8")


def _loads_line(text: str, lineno: int, path: str) -> dict:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise LogParseError(exc.msg, lineno, exc.colno, path) from None
    if not isinstance(obj, dict):
        raise LogParseError("expected a JSON object", lineno, 1, path)
    return obj


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _need(obj: dict, key: str, check, lineno: int, path: str):
    if key not in obj:
        raise LogParseError(f"missing field {key!r}", lineno, 1, path)
    if not check(obj[key]):
        raise LogParseError(f"field {key!r} has the wrong type", lineno, 1, path)
    return obj[key]


def loads_recording(text: str, path: str = "<log>") -> SessionRecording:
    """Parse a session log; errors carry the line and column."""
    lines = text.splitlines()
    if not lines:
        raise LogParseError("empty log", 1, 1, path)
    head = _loads_line(lines[0], 1, path)
    if head.get("record") != "session":
        raise LogParseError("first record must be the session header", 1, 1, path)
    if head.get("format") != LOG_FORMAT:
        raise LogParseError(f"unsupported format {head.get('format')!r}", 1, 1, path)
    try:
        method = Method(head.get("method"))
    except ValueError:
        raise LogParseError(f"unknown method {head.get('method')!r}", 1, 1, path) from None
    try:
        agents = [AgentId(int(a["id"]), AgentKind(a["kind"])) for a in head.get("agents", [])]
        bounds = [(float(s), float(e)) for s, e in head["iterations"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise LogParseError(f"bad session header: {exc}", 1, 1, path) from None
    meta = head.get("metadata", {})
    if not isinstance(meta, dict) or not all(isinstance(v, str) for v in meta.values()):
        raise LogParseError("metadata must map keys to strings", 1, 1, path)
    known = {a.id: a for a in agents}
    events: dict[int, list[TimedEvent]] = {a.id: [] for a in agents}
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        obj = _loads_line(raw, lineno, path)
        t = _need(obj, "t", _is_num, lineno, path)
        aid = _need(obj, "agent", _is_int, lineno, path)
        kind = _need(obj, "kind", lambda v: isinstance(v, str), lineno, path)
        token = _need(obj, "event", lambda v: isinstance(v, str), lineno, path)
        it = _need(obj, "iteration", _is_int, lineno, path)
        early = _need(obj, "early", lambda v: isinstance(v, bool), lineno, path)
        try:
            agent = AgentId(aid, AgentKind(kind))
            ev_type = EventType.from_token(token)
        except ValueError as exc:
            raise LogParseError(str(exc), lineno, 1, path) from None
        if ev_type.is_early != early:
            raise LogParseError(f"early flag disagrees with event {token!r}", lineno, 1, path)
        if aid not in known:
            known[aid] = agent
            events[aid] = []
        elif known[aid].kind is not agent.kind:
            raise LogParseError(f"agent {aid} changes kind", lineno, 1, path)
        if not 0 <= it < len(bounds) or not bounds[it][0] <= t < bounds[it][1]:
            raise LogParseError(f"time {t} is outside iteration {it}", lineno, 1, path)
        extra = tuple(sorted((k, _dumps(v)) for k, v in obj.items() if k not in _EVENT_FIELDS))
        try:
            ev = TimedEvent(agent, ev_type, float(t), it, extra)
        except ValueError as exc:
            raise LogParseError(str(exc), lineno, 1, path) from None
        prev = events[aid]
        if prev and prev[-1].t > ev.t:
            raise LogParseError(f"events of agent {aid} are out of time order", lineno, 1, path)
        prev.append(ev)
    series = tuple(EventSeries(known[i], tuple(evs)) for i, evs in events.items())
    try:
        return SessionRecording(series, tuple(bounds), method, meta)
    except ValueError as exc:
        raise LogParseError(str(exc), 1, 1, path) from None


def read_recording(path: str | Path) -> SessionRecording:
    p = Path(path)
    return loads_recording(p.read_text(encoding="utf-8"), str(p))


# -- run configuration ------------------------------------------------------------


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    runs: int = 30
    out_dir: str | None = None

    @property
    def params(self) -> SyncParams:
        return self.sim.params


_SYNC_KEYS = {"tau": float, "cluster_epsilon": float, "early_window_delta": float,
              "early_count_threshold": int}
_DANCER_KEYS = {"jitter_sd": float, "early_lead": float, "miss_rate": float}
_ROBOT_KEYS = {"actuation_latency": float, "drop_rate": float}
_CHOREO_KEYS = {"schedule": list, "iteration_count": int, "iteration_period": float}
_TOP_KEYS = {"seed", "controller", "sync", "choreography", "dancers", "robot", "runs", "output"}


def _section(obj: Any, where: str, spec: dict) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    out = {}
    for k, v in obj.items():
        if k not in spec:
            raise ConfigError(f"{where}.{k}: unknown key")
        typ = spec[k]
        if typ is float and isinstance(v, int) and not isinstance(v, bool):
            v = float(v)
        if not isinstance(v, typ) or isinstance(v, bool):
            raise ConfigError(f"{where}.{k}: expected {typ.__name__}")
        out[k] = v
    return out


def parse_config(obj: Any) -> RunConfig:
    """Build a RunConfig from decoded JSON; unknown keys are rejected with
    their dotted location."""
    if not isinstance(obj, dict):
        raise ConfigError("config: expected an object")
    for k in obj:
        if k not in _TOP_KEYS:
            raise ConfigError(f"config.{k}: unknown key")
    try:
        params = SyncParams(**_section(obj.get("sync", {}), "config.sync", _SYNC_KEYS))
        ch = _section(obj.get("choreography", {}), "config.choreography", _CHOREO_KEYS)
        if "schedule" in ch:
            try:
                ch["schedule"] = tuple((EventType.from_token(e), float(t)) for e, t in ch["schedule"])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"config.choreography.schedule: {exc}") from None
        choreo = Choreography(**ch)
        dancers_raw = obj.get("dancers", [{}, {}, {}])
        if not isinstance(dancers_raw, list):
            raise ConfigError("config.dancers: expected a list")
        dancers = tuple(DancerModel(**_section(d, f"config.dancers[{i}]", _DANCER_KEYS))
                        for i, d in enumerate(dancers_raw))
        robot_m = RobotModel(**_section(obj.get("robot", {}), "config.robot", _ROBOT_KEYS))
        ctrl = obj.get("controller", "SIA")
        if ctrl is None or ctrl == "None":
            method = None
        else:
            try:
                method = Method(ctrl)
            except ValueError:
                raise ConfigError(f"config.controller: unknown controller {ctrl!r}") from None
        seed = obj.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise ConfigError("config.seed: expected int")
        runs = obj.get("runs", 30)
        if not isinstance(runs, int) or isinstance(runs, bool):
            raise ConfigError("config.runs: expected int")
        out = _section(obj.get("output", {}), "config.output", {"dir": str})
        sim = SimConfig(choreo, dancers, robot_m, method, params, seed)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config: {exc}") from None
    return RunConfig(sim, runs, out.get("dir"))


def read_config(path: str | Path) -> RunConfig:
    p = Path(path)
    try:
        obj = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return parse_config(obj)


# -- analysis outputs -------------------------------------------------------------


def write_analysis(report, out_dir: str | Path) -> list[Path]:
    """Write gsi.csv, pairs.csv and report.json for an AnalysisReport."""
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    files = {"gsi.csv": report.gsi_csv(), "pairs.csv": report.pairs_csv(),
             "report.json": report.to_json()}
    out = []
    for name, body in files.items():
        (d / name).write_text(body, encoding="utf-8")
        out.append(d / name)
    return out
