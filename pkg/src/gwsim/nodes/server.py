"""Network server: PUSH/PULL handling, deduplication, ACK generation, downlink routing."""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, field

from ..codec import (CodecError, Datagram, DatagramKind, GatewayEui, TxPacketMeta, ack_for, decode_datagram,
                     encode_datagram, parse_rxpk, pull_resp)
from ..ids import Observation
from ..mac import DevAddr, FrameError, MicMode, NwkSKey, build_ack, parse_frame, serialize_frame, verify_uplink

ROUTE_POLICIES = ("last_pull_wins", "sticky_first", "most_frequent")


@dataclass
class Route:
    address: str
    last_pull: float


@dataclass
class DeviceRecord:
    dev_addr: DevAddr
    key: NwkSKey
    mic_mode: MicMode
    down_fcnt: int = 0
    last_fcnt: int | None = None


@dataclass
class _Attempt:
    dev_addr: DevAddr
    fcnt: int
    first_seen: float
    confirmed: bool
    freq: float
    sf: int
    retransmission: bool
    euis: list[GatewayEui] = field(default_factory=list)


class NetworkServer:
    def __init__(self, sim, address: str, registry, *, route_policy: str = "last_pull_wins",
                 require_registration: bool = False, require_authenticated_link: bool = False,
                 dedup_window: float = 200.0, most_frequent_window: float = 60_000.0, ids=None):
        if route_policy not in ROUTE_POLICIES:
            raise ValueError(f"route_policy must be one of {ROUTE_POLICIES}")
        self.sim = sim
        self.address = address
        self.registry = registry
        self.route_policy = route_policy
        self.require_registration = require_registration
        self.require_authenticated_link = require_authenticated_link
        self.dedup_window = dedup_window
        self.most_frequent_window = most_frequent_window
        self.ids = ids
        self._rng = sim.rng("server")

        self.devices: dict[bytes, DeviceRecord] = {}
        self.routes: dict[GatewayEui, Route] = {}
        self._pulls: dict[GatewayEui, deque] = {}
        self._attempts: dict[tuple[bytes, int], _Attempt] = {}
        self._ack_gateway: dict[tuple[bytes, int], GatewayEui] = {}
        self.delivered: dict[tuple[bytes, int], float] = {}
        # (dev_addr, downlink fcnt) -> uplink fcnt the ACK was generated for
        self.ack_ledger: dict[tuple[bytes, int], int] = {}
        self.downlinks: list[dict] = []
        self.push_log: list[tuple[float, str, str, int]] = []
        self.stats = Counter()

        sim.network.bind(address, self.on_datagram)

    def add_device(self, dev_addr: DevAddr, key: NwkSKey, mic_mode: MicMode = MicMode.V1_0) -> None:
        self.devices[dev_addr.raw] = DeviceRecord(dev_addr, key, mic_mode)

    @property
    def now(self) -> float:
        return self.sim.scheduler.now

    def _reply(self, d: Datagram, dst: str) -> None:
        self.sim.network.send(self.address, dst, encode_datagram(d))

    def _observe(self, eui, src, kind, stat=None) -> None:
        if self.ids is not None:
            self.ids.observe(Observation(self.now, eui, src, kind, stat))

    # -- intake -------------------------------------------------------------------
    def on_datagram(self, raw: bytes, src: str, authenticated: bool = False) -> None:
        if self.require_authenticated_link and not authenticated:
            self.stats["discarded_unauthenticated"] += 1
            self.sim.trace.record("server_discard", src=src, reason="unauthenticated_link")
            return
        try:
            d = decode_datagram(raw)
        except CodecError as exc:
            self.stats["undecodable"] += 1
            self.sim.trace.record("server_discard", src=src, reason=type(exc).__name__)
            return
        if d.kind is DatagramKind.PUSH_DATA:
            self.server_on_push_data(d, src)
        elif d.kind is DatagramKind.PULL_DATA:
            self.server_on_pull_data(d, src)
        elif d.kind is DatagramKind.TX_ACK:
            self.stats["tx_ack"] += 1
            self._observe(d.eui, src, d.kind)
        else:
            self.stats["unexpected_kind"] += 1

    def server_on_push_data(self, d: Datagram, src: str) -> None:
        self._reply(ack_for(d), src)
        self.stats["push_data"] += 1
        try:
            pkts = parse_rxpk(d.body)
        except CodecError:
            self.stats["undecodable_body"] += 1
            return
        self.registry.touch(d.eui, self.now)
        trusted = self.registry.is_trusted(d.eui)
        for pkt in pkts:
            self._observe(d.eui, src, d.kind, pkt.stat)
            self.push_log.append((self.now, str(d.eui), src, pkt.stat))
            if not trusted:
                self.stats["untrusted"] += 1
                if self.require_registration:
                    continue
            if pkt.stat == -1:
                self.stats["corrupt"] += 1
                continue
            self._uplink(pkt, d.eui, trusted)

    def _uplink(self, pkt, eui: GatewayEui, trusted: bool) -> None:
        try:
            frame = parse_frame(pkt.payload())
        except FrameError:
            self.stats["bad_frame"] += 1
            return
        rec = self.devices.get(frame.dev_addr.raw)
        if rec is None or not frame.is_uplink:
            self.stats["unknown_device"] += 1
            return
        if not verify_uplink(rec.key, frame):
            self.stats["bad_mic"] += 1
            return
        key = (frame.dev_addr.raw, frame.fcnt)
        if rec.last_fcnt is not None and frame.fcnt < rec.last_fcnt:
            self.stats["stale"] += 1
            return
        attempt = self._attempts.get(key)
        if attempt is not None and self.now - attempt.first_seen <= self.dedup_window:
            self.stats["duplicates"] += 1
            if eui not in attempt.euis:
                attempt.euis.append(eui)
            return
        retransmission = key in self.delivered
        if retransmission:
            self.stats["retransmissions"] += 1
        else:
            self.delivered[key] = self.now
            self.stats["delivered"] += 1
            self.sim.trace.record("server_deliver", dev_addr=str(frame.dev_addr), fcnt=frame.fcnt, eui=str(eui))
        rec.last_fcnt = frame.fcnt
        attempt = _Attempt(frame.dev_addr, frame.fcnt, self.now, frame.is_confirmed_up, pkt.freq, pkt.sf,
                           retransmission, [eui])
        self._attempts[key] = attempt
        if attempt.confirmed and trusted:
            self.sim.scheduler.after(self.dedup_window, self._ack_decision, attempt)

    def _ack_decision(self, attempt: _Attempt) -> None:
        key = (attempt.dev_addr.raw, attempt.fcnt)
        eui = attempt.euis[0]
        if attempt.retransmission:
            # previous ACK evidently did not arrive: try another gateway that heard this copy
            last = self._ack_gateway.get(key)
            eui = next((e for e in attempt.euis if e != last), eui)
        self._ack_gateway[key] = eui
        rec = self.devices[attempt.dev_addr.raw]
        frame = build_ack(rec.key, rec.dev_addr, rec.down_fcnt, rec.mic_mode, acked_fcnt=attempt.fcnt)
        self.ack_ledger[(rec.dev_addr.raw, rec.down_fcnt)] = attempt.fcnt
        rec.down_fcnt += 1
        self.server_send_downlink(eui, frame, attempt.freq, attempt.sf)

    # -- routing ------------------------------------------------------------------
    def server_on_pull_data(self, d: Datagram, src: str) -> None:
        self._reply(ack_for(d), src)
        self.stats["pull_data"] += 1
        self._observe(d.eui, src, d.kind)
        hist = self._pulls.setdefault(d.eui, deque())
        hist.append((self.now, src))
        route = self.routes.get(d.eui)
        before = route.address if route else None
        if route is None:
            self.routes[d.eui] = Route(src, self.now)
        elif self.route_policy == "last_pull_wins":
            route.address, route.last_pull = src, self.now
        elif self.route_policy == "sticky_first":
            if route.address == src:
                route.last_pull = self.now
        else:
            self._most_frequent(d.eui)
        after = self.routes[d.eui].address
        if after != before:
            self.sim.trace.record("route_change", eui=str(d.eui), address=after, previous=before)

    def _most_frequent(self, eui: GatewayEui) -> None:
        hist = self._pulls.get(eui)
        route = self.routes.get(eui)
        if not hist or route is None:
            return
        while hist and hist[0][0] <= self.now - self.most_frequent_window:
            hist.popleft()
        if not hist:
            return
        counts = Counter(addr for _, addr in hist)
        latest = {addr: t for t, addr in hist}
        best = max(counts, key=lambda a: (counts[a], latest[a]))
        route.address, route.last_pull = best, latest[best]

    def current_route(self, eui: GatewayEui) -> str | None:
        if self.route_policy == "most_frequent":
            self._most_frequent(eui)
        route = self.routes.get(eui)
        return route.address if route else None

    def server_send_downlink(self, eui: GatewayEui, frame, freq: float = 868.1, sf: int = 7) -> bool:
        address = self.current_route(eui)
        if address is None:
            self.stats["downlinks_dropped_no_route"] += 1
            self.sim.trace.record("downlink_dropped", eui=str(eui), reason="no_route")
            return False
        raw_frame = serialize_frame(frame)
        d = pull_resp(int(self._rng.integers(0, 0x10000)), TxPacketMeta.from_frame(raw_frame, freq=freq, sf=sf))
        self.downlinks.append({"t": self.now, "eui": str(eui), "address": address,
                               "dev_addr": str(frame.dev_addr), "down_fcnt": frame.fcnt})
        self.stats["downlinks"] += 1
        self._reply(d, address)
        return True
