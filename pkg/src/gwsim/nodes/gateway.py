"""Packet-forwarding gateway speaking the Semtech UDP protocol."""

from __future__ import annotations

from ..codec import (CodecError, Datagram, DatagramKind, GatewayEui, RxPacketMeta, decode_datagram,
                     encode_datagram, parse_txpk, pull_data, push_data, tx_ack)
from ..mac import peek_dev_addr
from ..radio import RadioFrame, Reception, airtime_model

CRC_FORWARD_POLICIES = ("forward_with_stat", "drop")
PULL_MODES = ("periodic", "poisson")


class Gateway:
    """One PUSH_DATA per radio reception, PULL_DATA keepalives, PULL_RESP -> radio + TX_ACK.

    Downlinks carry no timestamp on the wire, so the forwarder aims them at
    the addressed device's next receive window, measured from the end of the
    last uplink it heard from that DevAddr.
    """

    def __init__(self, sim, node_id: str, eui: GatewayEui, address: str, server_address: str, *,
                 pull_interval: float = 10_000.0, pull_mode: str = "periodic",
                 crc_forward_policy: str = "forward_with_stat", alive: bool = True,
                 physically_protected: bool = False, link=None, rx1_delay: float = 1000.0,
                 rx2_delay: float = 2000.0, start_offset: float | None = None):
        if pull_interval <= 0:
            raise ValueError("pull_interval must be positive")
        if crc_forward_policy not in CRC_FORWARD_POLICIES:
            raise ValueError(f"crc_forward_policy must be one of {CRC_FORWARD_POLICIES}")
        if pull_mode not in PULL_MODES:
            raise ValueError(f"pull_mode must be one of {PULL_MODES}")
        self.sim = sim
        self.node_id = node_id
        self.eui = eui
        self.address = address
        self.server_address = server_address
        self.pull_interval = pull_interval
        self.pull_mode = pull_mode
        self.crc_forward_policy = crc_forward_policy
        self.alive = alive
        self.physically_protected = physically_protected
        self.rx1_delay = rx1_delay
        self.rx2_delay = rx2_delay
        self._rng = sim.rng(f"gateway:{node_id}")
        self.start_offset = float(self._rng.uniform(0, pull_interval)) if start_offset is None else start_offset
        self._keepalive_ev = None
        self._last_rx_end: dict[bytes, float] = {}
        self.stats = {"pushes": 0, "pushes_corrupt": 0, "pulls": 0, "push_acks": 0, "pull_acks": 0,
                      "pull_resps": 0, "tx_acks": 0, "downlinks_tx": 0, "radio_rx": 0, "radio_rx_corrupt": 0}

        sim.ether.attach(node_id, self.on_radio_rx, hears_downlink=False)
        sim.network.bind(address, self.on_datagram, link)

    # -- lifecycle ----------------------------------------------------------------
    def start(self) -> None:
        self._keepalive_ev = self.sim.scheduler.schedule(self.sim.scheduler.now + self.start_offset,
                                                         self.gateway_keepalive)

    def disable(self) -> None:
        self.alive = False
        self.sim.scheduler.cancel(self._keepalive_ev)
        self._keepalive_ev = None
        self.sim.trace.record("gateway_disabled", gateway=self.node_id)

    def _token(self) -> int:
        return int(self._rng.integers(0, 0x10000))

    def _send(self, d: Datagram) -> None:
        self.sim.network.send(self.address, self.server_address, encode_datagram(d))

    # -- keepalive ----------------------------------------------------------------
    def next_pull_delay(self) -> float:
        if self.pull_mode == "poisson":
            return float(self._rng.exponential(self.pull_interval))
        return self.pull_interval

    def gateway_keepalive(self) -> None:
        if not self.alive:
            return
        self._send(pull_data(self._token(), self.eui))
        self.stats["pulls"] += 1
        self._keepalive_ev = self.sim.scheduler.after(self.next_pull_delay(), self.gateway_keepalive)

    # -- uplink -------------------------------------------------------------------
    def on_radio_rx(self, rx: Reception) -> None:
        if not self.alive or rx.frame.downlink:
            return
        self.stats["radio_rx"] += 1
        if not rx.crc_ok:
            self.stats["radio_rx_corrupt"] += 1
        addr = peek_dev_addr(rx.payload)
        if addr is not None:
            self._last_rx_end[addr.raw] = rx.frame.end
        d = self.gateway_on_radio_rx(rx)
        if d is not None:
            self._send(d)

    def gateway_on_radio_rx(self, rx: Reception) -> Datagram | None:
        """PUSH_DATA for a reception, or None when a CRC failure is dropped by policy."""
        if rx.crc_ok:
            stat = 1
        elif self.crc_forward_policy == "forward_with_stat":
            stat = -1
        else:
            return None
        self.stats["pushes"] += 1
        if stat == -1:
            self.stats["pushes_corrupt"] += 1
        meta = RxPacketMeta.from_frame(rx.payload, stat=stat, freq=rx.frame.channel, sf=rx.frame.sf)
        return push_data(self._token(), self.eui, [meta])

    # -- downlink -----------------------------------------------------------------
    def on_datagram(self, raw: bytes, src: str, authenticated: bool) -> None:
        if not self.alive:
            return
        try:
            d = decode_datagram(raw)
        except CodecError:
            return
        if d.kind is DatagramKind.PUSH_ACK:
            self.stats["push_acks"] += 1
        elif d.kind is DatagramKind.PULL_ACK:
            self.stats["pull_acks"] += 1
        elif d.kind is DatagramKind.PULL_RESP:
            self.stats["pull_resps"] += 1
            self.on_pull_resp(d)

    def on_pull_resp(self, d: Datagram) -> None:
        try:
            txpk = parse_txpk(d.body)
        except CodecError:
            self._send(tx_ack(d.token, self.eui, b'{"txpk_ack":{"error":"BAD_PAYLOAD"}}'))
            return
        self.transmit_downlink(txpk.payload(), txpk.freq, txpk.sf)
        self.stats["tx_acks"] += 1
        self._send(tx_ack(d.token, self.eui))

    def downlink_time(self, payload: bytes) -> float:
        now = self.sim.scheduler.now
        addr = peek_dev_addr(payload)
        last = self._last_rx_end.get(addr.raw) if addr is not None else None
        if last is not None:
            for delay in (self.rx1_delay, self.rx2_delay):
                if now <= last + delay:
                    return last + delay
        return now

    def transmit_downlink(self, payload: bytes, freq: float, sf: int, at: float | None = None) -> RadioFrame:
        start = self.downlink_time(payload) if at is None else at
        self.stats["downlinks_tx"] += 1
        return self.sim.ether.transmit(RadioFrame(payload, sf, freq, self.node_id, start,
                                                  airtime_model(sf, len(payload)), downlink=True))
