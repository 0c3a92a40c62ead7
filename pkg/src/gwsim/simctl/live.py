"""Live-wire mode: the network server on a real UDP socket.

A reader thread only receives datagrams and queues them with their arrival
time; the loop in ``serve`` is the single thread that touches server state.
It advances the simulation clock to wall-clock time, fires due events (ACK
decisions after the dedup window) and hands queued datagrams to the server.
"""

from __future__ import annotations

import logging
import queue
import socket
import threading
import time

from ..codec import GatewayEui
from ..ids import IdsEngine
from ..mac import DevAddr, MicMode
from ..nodes.registry import Registry, RegistryEntry
from ..nodes.server import NetworkServer
from .runner import _ids_config, device_key
from .scenario import load_scenario
from .scheduler import Scheduler, Trace

log = logging.getLogger(__name__)


def parse_hostport(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not host:
        raise ValueError(f"expected host:port, got {text!r}")
    return host, int(port)


class LiveNetwork:
    """Just enough of ``Network`` for the server: bind a handler, send to ``host:port``."""

    def __init__(self, sock: socket.socket, trace: Trace):
        self.sock = sock
        self.trace = trace
        self.handler = None
        self.sent = 0

    def bind(self, address: str, handler, link=None) -> None:
        self.handler = handler

    def send(self, src: str, dst: str, raw: bytes) -> None:
        self.trace.record("datagram_out", dst=dst, raw=raw.hex())
        try:
            self.sock.sendto(raw, parse_hostport(dst))
            self.sent += 1
        except OSError as exc:
            log.warning("send to %s failed: %s", dst, exc)


class _LiveSim:
    def __init__(self, seed: int, sock: socket.socket):
        self.scheduler = Scheduler(seed)
        self.trace = Trace(self.scheduler)
        self.network = LiveNetwork(sock, self.trace)

    def rng(self, name: str):
        return self.scheduler.rng(name)


class LiveServer:
    def __init__(self, scenario="baseline", host: str = "127.0.0.1", port: int = 1700):
        scn = load_scenario(scenario)
        doc = scn.doc
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.bind((host, port))
        self.sock.settimeout(0.05)
        self.address = "%s:%d" % self.sock.getsockname()[:2]
        self.sim = _LiveSim(doc["seed"], self.sock)
        registry = Registry()
        for g in doc["gateways"]:
            if g["registered"]:
                registry.register(RegistryEntry(GatewayEui.parse(g["eui"]), g["description"], g["location"]))
        srv = doc["server"]
        self.ids = IdsEngine(_ids_config(srv["ids"]))
        self.server = NetworkServer(self.sim, self.address, registry, route_policy=doc["route_policy"],
                                    require_registration=srv["require_registration"],
                                    require_authenticated_link=srv["require_authenticated_link"],
                                    dedup_window=float(srv["dedup_window_ms"]),
                                    most_frequent_window=float(srv["most_frequent_window_ms"]), ids=self.ids)
        self.keys = {}
        for d in doc["devices"]:
            key = device_key(self.sim, d["id"])
            self.keys[d["id"]] = key
            self.server.add_device(DevAddr.parse(d["dev_addr"]), key, MicMode(d.get("mic_mode", doc["mic_mode"])))
        self._inbox: queue.Queue = queue.Queue()
        self._stop = threading.Event()
        self._t0 = time.monotonic()
        self._reader = threading.Thread(target=self._intake, name="gwsim-udp-intake", daemon=True)
        self._reader.start()

    def _elapsed_ms(self) -> float:
        return (time.monotonic() - self._t0) * 1000.0

    def _intake(self) -> None:
        while not self._stop.is_set():
            try:
                raw, addr = self.sock.recvfrom(65535)
            except socket.timeout:
                continue
            except OSError:
                break
            self._inbox.put((self._elapsed_ms(), raw, "%s:%d" % addr[:2]))

    def serve(self, duration_ms: float | None = None) -> None:
        """Process traffic until ``duration_ms`` of wall time has passed or ``stop()`` is called."""
        sched = self.sim.scheduler
        while not self._stop.is_set():
            now = self._elapsed_ms()
            if duration_ms is not None and now >= duration_ms:
                break
            try:
                at, raw, src = self._inbox.get(timeout=0.01)
            except queue.Empty:
                sched.run(max(now, sched.now))
                continue
            sched.run(max(at, sched.now))
            self.server.on_datagram(raw, src, False)

    def stop(self) -> None:
        self._stop.set()

    def close(self) -> None:
        self._stop.set()
        self._reader.join(timeout=1.0)
        self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
