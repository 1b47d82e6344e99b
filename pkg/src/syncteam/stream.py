"""Live event ingestion over a newline-delimited text protocol.

Grammar (whitespace separated, one message per line)::

    HELLO <client_id> <offset_seconds>
    EV    <client_id> <seq> <agent_id> <event_name> <t_client>
    ITER  <client_id> <index> <start_t> <end_t>
    META  <client_id> <key> <json_string>
    BYE   <client_id>

``agent_id`` is a non-negative integer for a human and ``r<int>`` for the
robot.  Client times are shifted by the offset declared in the client's
HELLO.  ITER declares iteration windows; events that arrive before their
window is known are buffered until it is.  META sets the session method
(key ``method``), declares an agent (key ``agent``) or stores a metadata
entry (key ``meta.<name>``).  BYE closes the session.

Everything funnels through :class:`LiveSession`, which serializes mutation;
the TCP server runs one reader per connection feeding a single queue.
"""
from __future__ import annotations

import asyncio
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator

from .model import (
    AgentId,
    AgentKind,
    EventSeries,
    EventType,
    Method,
    SessionRecording,
    SyncParams,
    TimedEvent,
    iteration_index,
)

log = logging.getLogger(__name__)


class ProtocolError(ValueError):
    pass


class MalformedLine(ProtocolError):
    def __init__(self, line: str, why: str = "malformed line"):
        super().__init__(f"{why}: {line!r}")
        self.line = line


class UnknownEventName(ProtocolError):
    pass


class NonMonotoneSeq(ProtocolError):
    pass


class UnknownClient(ProtocolError):
    pass


@dataclass(frozen=True)
class Handshake:
    client_id: str
    offset: float


@dataclass(frozen=True)
class WireEvent:
    client_id: str
    seq: int
    agent: AgentId
    event: EventType
    t_client: float


@dataclass(frozen=True)
class IterationDecl:
    client_id: str
    index: int
    start: float
    end: float


@dataclass(frozen=True)
class MetaDecl:
    client_id: str
    key: str
    value: str


@dataclass(frozen=True)
class Bye:
    client_id: str


Message = Handshake | WireEvent | IterationDecl | MetaDecl | Bye


def _float(tok: str, line: str) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise MalformedLine(line, f"bad number {tok!r}") from None
    if not math.isfinite(v):
        raise MalformedLine(line, f"non-finite number {tok!r}")
    return v


def _int(tok: str, line: str) -> int:
    if not tok.isdigit():
        raise MalformedLine(line, f"bad integer {tok!r}")
    return int(tok)


def _agent(tok: str, line: str) -> AgentId:
    if tok[:1] in ("r", "R"):
        return AgentId(_int(tok[1:], line), AgentKind.ROBOT)
    return AgentId(_int(tok, line), AgentKind.HUMAN)


def parse_line(line: bytes | str) -> Message:
    """Parse one protocol line (without its terminator)."""
    if isinstance(line, bytes):
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError:
            raise MalformedLine(repr(line), "invalid utf-8") from None
    line = line.rstrip("\r\n")
    parts = line.split()
    if parts and parts[0] == "META":
        # the value is a JSON string and may contain spaces
        parts = line.split(None, 3)
        if len(parts) == 4:
            try:
                value = json.loads(parts[3])
            except json.JSONDecodeError:
                raise MalformedLine(line, "META value is not a JSON string") from None
            if not isinstance(value, str):
                raise MalformedLine(line, "META value is not a JSON string")
            return MetaDecl(parts[1], parts[2], value)
        raise MalformedLine(line)
    if not parts:
        raise MalformedLine(line, "empty line")
    verb, args = parts[0], parts[1:]
    if verb == "HELLO" and len(args) == 2:
        return Handshake(args[0], _float(args[1], line))
    if verb == "EV" and len(args) == 5:
        cid, seq, agent, name, t = args
        try:
            ev = EventType.from_token(name)
        except ValueError:
            raise UnknownEventName(f"unknown event name {name!r} in {line!r}") from None
        return WireEvent(cid, _int(seq, line), _agent(agent, line), ev, _float(t, line))
    if verb == "ITER" and len(args) == 4:
        return IterationDecl(args[0], _int(args[1], line), _float(args[2], line), _float(args[3], line))
    if verb == "BYE" and len(args) == 1:
        return Bye(args[0])
    raise MalformedLine(line)


def format_message(msg: Message) -> str:
    if isinstance(msg, Handshake):
        return f"HELLO {msg.client_id} {msg.offset!r}"
    if isinstance(msg, WireEvent):
        a = f"r{msg.agent.id}" if msg.agent.is_robot else str(msg.agent.id)
        return f"EV {msg.client_id} {msg.seq} {a} {msg.event.token} {msg.t_client!r}"
    if isinstance(msg, IterationDecl):
        return f"ITER {msg.client_id} {msg.index} {msg.start!r} {msg.end!r}"
    if isinstance(msg, MetaDecl):
        return f"META {msg.client_id} {msg.key} {json.dumps(msg.value, ensure_ascii=False)}"
    return f"BYE {msg.client_id}"


@dataclass
class ClientSession:
    client_id: str
    clock_offset: float
    last_seq: int = -1
    seen: set[int] = field(default_factory=set)


@dataclass
class _Ingested:
    ev: TimedEvent
    client_id: str
    seq: int


class LiveSession:
    """Serialized ingestion state: clients, iteration table, events.

    Optionally drives a controller (see :mod:`syncteam.anticipate`) with the
    session clock advanced by ingested event times; its commands collect in
    ``commands``.
    """

    def __init__(self, params: SyncParams | None = None, controller=None,
                 on_command: Callable | None = None):
        self.params = params or SyncParams()
        self.clients: dict[str, ClientSession] = {}
        self.bounds: dict[int, tuple[float, float]] = {}
        self.metadata: dict[str, str] = {}
        self.method = Method.HUMANS_ONLY
        self.agents: dict[int, AgentId] = {}
        self._tagged: list[_Ingested] = []
        self._pending: list[tuple[AgentId, EventType, float, str, int]] = []
        self.diagnostics: list[str] = []
        self.closed = False
        self.controller = controller
        self.commands: list = []
        self._on_command = on_command
        self._ctrl_iter = -1
        self._deadlines: list[float] = []

    # -- message handling --

    def handle_line(self, line: bytes | str) -> TimedEvent | None:
        """Parse and apply one line; protocol errors become diagnostics."""
        try:
            return self.handle(parse_line(line))
        except ProtocolError as exc:
            self.diagnostics.append(str(exc))
            log.warning("%s", exc)
            return None

    def handle(self, msg: Message) -> TimedEvent | None:
        if isinstance(msg, Handshake):
            if msg.client_id not in self.clients:
                self.clients[msg.client_id] = ClientSession(msg.client_id, msg.offset)
            elif self.clients[msg.client_id].clock_offset != msg.offset:
                raise ProtocolError(f"client {msg.client_id} re-declared its clock offset")
            return None
        if isinstance(msg, WireEvent):
            return self.ingest(msg)
        client = self._client(msg.client_id)
        if isinstance(msg, IterationDecl):
            s, e = msg.start + client.clock_offset, msg.end + client.clock_offset
            if not s < e:
                raise ProtocolError(f"empty iteration window {msg.index}")
            self.bounds[msg.index] = (s, e)
            self._retag()
        elif isinstance(msg, MetaDecl):
            if msg.key == "method":
                try:
                    self.method = Method(msg.value)
                except ValueError:
                    raise ProtocolError(f"unknown method {msg.value!r}") from None
            elif msg.key == "agent":
                # META <cid> agent <id|r<id>> declares an agent with no events yet
                a = _agent(msg.value, msg.value)
                self.agents.setdefault(a.id, a)
            elif msg.key.startswith("meta."):
                self.metadata[msg.key[5:]] = msg.value
            else:
                raise ProtocolError(f"unknown META key {msg.key!r}")
        elif isinstance(msg, Bye):
            self.closed = True
        return None

    def _client(self, cid: str) -> ClientSession:
        try:
            return self.clients[cid]
        except KeyError:
            raise UnknownClient(f"client {cid!r} has not sent HELLO") from None

    def ingest(self, we: WireEvent) -> TimedEvent | None:
        """Apply the clock offset, tag the iteration and store the event.

        A repeated (client, seq) is ignored.  Returns the tagged event, or
        None when the event was a duplicate or is waiting for its window.
        """
        client = self._client(we.client_id)
        if we.seq in client.seen:
            return None
        if we.seq < client.last_seq:
            raise NonMonotoneSeq(f"client {we.client_id}: seq {we.seq} after {client.last_seq}")
        client.seen.add(we.seq)
        client.last_seq = we.seq
        known = self.agents.setdefault(we.agent.id, we.agent)
        if known.kind is not we.agent.kind:
            raise ProtocolError(f"agent {we.agent.id} changes kind")
        t = we.t_client + client.clock_offset
        self._pending.append((we.agent, we.event, t, we.client_id, we.seq))
        tagged = self._retag()
        for ev in tagged:
            self._feed_controller(ev)
        return tagged[-1] if tagged and tagged[-1].t == t and tagged[-1].agent == we.agent else None

    def _retag(self) -> list[TimedEvent]:
        if not self.bounds:
            return []
        order = sorted(self.bounds)
        table = [self.bounds[k] for k in order]
        keep, out = [], []
        for agent, ev, t, cid, seq in self._pending:
            pos = iteration_index(table, t)
            if pos is None:
                keep.append((agent, ev, t, cid, seq))
                continue
            te = TimedEvent(agent, ev, t, order[pos])
            self._tagged.append(_Ingested(te, cid, seq))
            out.append(te)
        self._pending = keep
        return out

    # -- controller --

    def _emit(self, cmds):
        for c in cmds:
            self.commands.append(c)
            if self._on_command:
                self._on_command(c)

    def advance(self, now: float) -> None:
        """Advance the controller clock: iteration rollovers and deadlines."""
        if self.controller is None or not self.bounds:
            return
        rec = None
        while True:
            due = [d for d in self._deadlines if d <= now]
            nxt = self._ctrl_iter + 1
            start = self.bounds[nxt][0] if nxt in self.bounds else math.inf
            if due and min(due) < start:
                t = min(due)
                self._deadlines = [d for d in self._deadlines if d > t]
                self._emit(self.controller.tick(t))
                continue
            if nxt in self.bounds and start <= now:
                rec = self.recording(until=start)
                self._emit(self.controller.begin_iteration(rec, nxt))
                self._ctrl_iter = nxt
                self._deadlines = self.controller.deadlines()
                continue
            break

    def _feed_controller(self, ev: TimedEvent) -> None:
        if self.controller is None:
            return
        self.advance(ev.t)
        self._emit(self.controller.on_event(ev, ev.t))

    # -- snapshots --

    def recording(self, until: float | None = None) -> SessionRecording:
        """Immutable snapshot of everything ingested (optionally only t < until)."""
        order = sorted(self.bounds)
        if order != list(range(len(order))):
            raise ProtocolError(f"iteration table is not contiguous from 0: {order}")
        items = sorted(self._tagged, key=lambda x: (x.ev.t, x.client_id, x.seq))
        per_agent: dict[int, list[TimedEvent]] = {a: [] for a in self.agents}
        for it in items:
            if until is None or it.ev.t < until:
                per_agent[it.ev.agent.id].append(it.ev)
        series = tuple(EventSeries(self.agents[a], tuple(v)) for a, v in per_agent.items())
        return SessionRecording(series, tuple(self.bounds[k] for k in order),
                                self.method, dict(self.metadata))

    def untagged(self) -> int:
        return len(self._pending)


# -- replay -----------------------------------------------------------------


def recording_messages(rec: SessionRecording, client_id: str = "replay") -> Iterator[tuple[float | None, Message]]:
    """(time, message) pairs re-creating `rec`; header messages carry None."""
    yield None, Handshake(client_id, 0.0)
    yield None, MetaDecl(client_id, "method", rec.method_label.value)
    for k, v in sorted(rec.metadata.items()):
        yield None, MetaDecl(client_id, "meta." + k, v)
    for a in rec.agents:
        yield None, MetaDecl(client_id, "agent", f"r{a.id}" if a.is_robot else str(a.id))
    for i, (s, e) in enumerate(rec.iteration_boundaries):
        yield None, IterationDecl(client_id, i, s, e)
    order = {id(e): k for s in rec.series for k, e in enumerate(s.events)}
    evs = sorted((e for s in rec.series for e in s.events),
                 key=lambda e: (e.t, e.agent.id, order[id(e)]))
    for seq, e in enumerate(evs):
        yield e.t, WireEvent(client_id, seq, e.agent, e.event, e.t)
    yield None, Bye(client_id)


def replay(rec: SessionRecording, speed: float = math.inf,
           sleep: Callable[[float], None] = time.sleep) -> Iterator[str]:
    """Yield protocol lines for `rec`, pacing events at `speed` x real time.

    ``speed=math.inf`` emits as fast as possible.
    """
    if not speed > 0:
        raise ValueError("speed must be positive")
    t0 = None
    wall0 = time.monotonic()
    for t, msg in recording_messages(rec):
        if t is not None and math.isfinite(speed):
            if t0 is None:
                t0, wall0 = t, time.monotonic()
            wait = (t - t0) / speed - (time.monotonic() - wall0)
            if wait > 0:
                sleep(wait)
        yield format_message(msg)


def replay_into(rec: SessionRecording, session: LiveSession, speed: float = math.inf) -> LiveSession:
    """Replay `rec` through the live ingest path of `session`."""
    for line in replay(rec, speed):
        session.handle_line(line)
    return session


# -- TCP transport ------------------------------------------------------------------


def parse_hostport(s: str) -> tuple[str, int]:
    host, sep, port = s.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"expected HOST:PORT, got {s!r}")
    return host or "127.0.0.1", int(port)


async def _serve(host: str, port: int, new_session: Callable[[], LiveSession],
                 on_close: Callable[[LiveSession], None], once: bool,
                 ready: Callable[[str, int], None] | None) -> None:
    queue: asyncio.Queue = asyncio.Queue()
    done = asyncio.Event()
    state = {"session": new_session()}

    async def reader(r: asyncio.StreamReader, w: asyncio.StreamWriter):
        # one reader per connection; all lines go through the single queue
        loop = asyncio.get_running_loop()
        try:
            while True:
                line = await r.readline()
                if not line:
                    break
                reply = loop.create_future()
                await queue.put((line, reply))
                err = await reply
                if err:
                    w.write(f"ERR {err}\n".encode())
                    await w.drain()
        except ConnectionError:
            pass
        finally:
            w.close()

    async def consumer():
        while True:
            line, reply = await queue.get()
            session = state["session"]
            n_diag = len(session.diagnostics)
            session.handle_line(line)
            err = session.diagnostics[n_diag] if len(session.diagnostics) > n_diag else ""
            if session.closed:
                on_close(session)
                reply.set_result(err)
                if once:
                    done.set()
                    return
                state["session"] = new_session()
            else:
                reply.set_result(err)

    server = await asyncio.start_server(reader, host, port)
    if ready is not None:
        h, prt = server.sockets[0].getsockname()[:2]
        ready(h, prt)
    task = asyncio.create_task(consumer())
    async with server:
        if once:
            await done.wait()
        else:
            await asyncio.Future()
    task.cancel()


def serve(host: str, port: int, new_session: Callable[[], LiveSession],
          on_close: Callable[[LiveSession], None], once: bool = True,
          ready: Callable[[str, int], None] | None = None) -> None:
    """Run the ingestion server.

    Each BYE closes the current session and hands it to `on_close`; with
    `once` the server then stops, otherwise a fresh session starts.
    """
    asyncio.run(_serve(host, port, new_session, on_close, once, ready))


def send_lines(host: str, port: int, lines: Iterable[str], timeout: float = 10.0) -> list[str]:
    """Connect, stream `lines`, and return any ERR replies received."""
    import socket

    errors: list[str] = []
    with socket.create_connection((host, port), timeout=timeout) as sock:
        f = sock.makefile("rwb")
        for line in lines:
            f.write(line.encode("utf-8") + b"\n")
            f.flush()
        sock.shutdown(socket.SHUT_WR)
        for raw in f:
            errors.append(raw.decode("utf-8", "replace").rstrip("\n"))
    return errors


def write_session_outputs(session: LiveSession, out_dir: str | Path) -> list[Path]:
    """Final report of a closed live session (same files as offline analysis)."""
    from .logformat import dumps_recording, write_analysis
    from .metrics import gsi_table

    rec = session.recording()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = write_analysis(gsi_table([rec], session.params), out)
    (out / "session.log").write_text(dumps_recording(rec), encoding="utf-8")
    if session.diagnostics:
        (out / "stream_diagnostics.txt").write_text("\n".join(session.diagnostics) + "\n",
                                                    encoding="utf-8")
    return files + [out / "session.log"]
