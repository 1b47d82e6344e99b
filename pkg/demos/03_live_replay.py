#!/usr/bin/env python3
# Stream a simulated session through the TCP ingest server and check that the
# live report matches the offline one.

import threading

from syncteam.metrics import gsi_table
from syncteam.model import SyncParams
from syncteam.sim import SimConfig, run_session
from syncteam.stream import LiveSession, replay, send_lines, serve

p = SyncParams()
rec = run_session(SimConfig(seed=11))

box = {}
up = threading.Event()


def ready(host, port):
    box["addr"] = (host, port)
    up.set()


def closed(session):
    box["live"] = session.recording()


th = threading.Thread(target=serve, args=("127.0.0.1", 0, lambda: LiveSession(p), closed),
                      kwargs={"once": True, "ready": ready}, daemon=True)
th.start()
up.wait()

lines = list(replay(rec))
print(f"sending {len(lines)} protocol lines to {box['addr']}, first few:")
for line in lines[:8]:
    print("  ", line)
errors = send_lines(*box["addr"], lines)
th.join()

offline = gsi_table([rec], p).to_json()
online = gsi_table([box["live"]], p).to_json()
print("server errors:", errors or "none")
print("live report identical to offline:", online == offline)
