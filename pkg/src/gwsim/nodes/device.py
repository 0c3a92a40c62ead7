"""Class A end device sending confirmed uplinks."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..mac import (AckVerdict, DevAddr, FrameError, MicMode, NwkSKey, build_uplink, parse_frame,
                   serialize_frame, verify_ack)
from ..radio import RadioFrame, Reception, airtime_model

_WINDOW_EPS = 1e-6


class DeviceBusy(RuntimeError):
    """A confirmed uplink is still waiting for its ACK."""


@dataclass
class UplinkOutcome:
    fcnt: int
    first_tx: float
    confirmed: bool = True
    attempts: int = 0
    status: str = "pending"  # pending | acked | presumed_lost | sent
    ack_down_fcnt: int | None = None
    acked_at: float | None = None
    verdicts: list[str] = field(default_factory=list)


@dataclass
class _Pending:
    fcnt: int
    payload: bytes
    attempts: int = 0
    tx_end: float = 0.0
    windows: list[tuple[float, float]] = field(default_factory=list)


class EndDevice:
    def __init__(self, sim, node_id: str, dev_addr: DevAddr, key: NwkSKey, *, sf: int = 7,
                 channel: float = 868.1, mic_mode: MicMode = MicMode.V1_0, retransmit_limit: int = 3,
                 rx1_delay: float = 1000.0, rx2_delay: float = 2000.0, rx_window: float = 200.0,
                 retransmit_backoff: float = 500.0, payload_len: int = 25, confirmed: bool = True,
                 uplink_interval: float = 60_000.0, max_uplinks: int | None = None,
                 start_offset: float | None = None):
        if retransmit_limit < 0:
            raise ValueError("retransmit_limit must be >= 0")
        self.sim = sim
        self.node_id = node_id
        self.dev_addr = dev_addr
        self.key = key
        self.sf = sf
        self.channel = channel
        self.mic_mode = mic_mode
        self.retransmit_limit = retransmit_limit
        self.rx1_delay = rx1_delay
        self.rx2_delay = rx2_delay
        self.rx_window = rx_window
        self.retransmit_backoff = retransmit_backoff
        self.payload_len = payload_len
        self.confirmed = confirmed
        self.uplink_interval = uplink_interval
        self.max_uplinks = max_uplinks
        self._rng = sim.rng(f"device:{node_id}")
        self.start_offset = float(self._rng.uniform(0, min(uplink_interval, 10_000.0))) \
            if start_offset is None else float(start_offset)

        self.fcnt_up = 0
        self.last_down_fcnt: int | None = None
        self.pending: _Pending | None = None
        self.outcomes: dict[int, UplinkOutcome] = {}
        self.uplinks_sent = 0
        self.verdict_counts = {v.value: 0 for v in AckVerdict}
        self._window_events = []

        sim.ether.attach(node_id, self.on_radio_rx, hears_downlink=True)

    def start(self) -> None:
        self.sim.scheduler.schedule(self.start_offset, self._next_uplink)

    # -- uplink side ------------------------------------------------------------
    def _next_uplink(self) -> None:
        if self.max_uplinks is not None and self.uplinks_sent >= self.max_uplinks:
            return
        payload = bytes(int(b) for b in self._rng.integers(0, 256, size=self.payload_len))
        if self.confirmed:
            self.device_send_confirmed(payload)
        else:
            self._send_unconfirmed(payload)

    def device_send_confirmed(self, payload: bytes) -> None:
        if self.pending is not None:
            raise DeviceBusy(f"{self.node_id} still awaits an ACK for FCnt {self.pending.fcnt}")
        fcnt = self.fcnt_up
        self.fcnt_up += 1
        self.uplinks_sent += 1
        self.pending = _Pending(fcnt, payload)
        self.outcomes[fcnt] = UplinkOutcome(fcnt, self.sim.scheduler.now)
        self._attempt()

    def _send_unconfirmed(self, payload: bytes) -> None:
        fcnt = self.fcnt_up
        self.fcnt_up += 1
        self.uplinks_sent += 1
        frame = build_uplink(self.key, self.dev_addr, fcnt, payload, confirmed=False)
        rf = self._radio(serialize_frame(frame))
        self.outcomes[fcnt] = UplinkOutcome(fcnt, rf.start, confirmed=False, attempts=1, status="sent")
        self.sim.scheduler.schedule(rf.end + self.uplink_interval, self._next_uplink)

    def _radio(self, raw: bytes) -> RadioFrame:
        now = self.sim.scheduler.now
        return self.sim.ether.transmit(RadioFrame(raw, self.sf, self.channel, self.node_id, now,
                                                  airtime_model(self.sf, len(raw))))

    def _attempt(self) -> None:
        p = self.pending
        p.attempts += 1
        self.outcomes[p.fcnt].attempts = p.attempts
        frame = build_uplink(self.key, self.dev_addr, p.fcnt, p.payload, confirmed=True)
        rf = self._radio(serialize_frame(frame))
        p.tx_end = rf.end
        p.windows = [(rf.end + d, rf.end + d + self.rx_window) for d in (self.rx1_delay, self.rx2_delay)]
        self.sim.trace.record("device_uplink", device=self.node_id, fcnt=p.fcnt, attempt=p.attempts,
                              frame_id=rf.frame_id)
        close = p.windows[-1][1]
        self._window_events = [self.sim.scheduler.schedule(close, self._windows_closed, p.fcnt, p.attempts)]

    def _windows_closed(self, fcnt: int, attempt: int) -> None:
        p = self.pending
        if p is None or p.fcnt != fcnt or p.attempts != attempt:
            return
        if p.attempts < 1 + self.retransmit_limit:
            self.sim.scheduler.after(self.retransmit_backoff, self._retransmit, fcnt)
            return
        self._finish("presumed_lost")

    def _retransmit(self, fcnt: int) -> None:
        if self.pending is not None and self.pending.fcnt == fcnt:
            self._attempt()

    def _finish(self, status: str, down_fcnt: int | None = None) -> None:
        p = self.pending
        out = self.outcomes[p.fcnt]
        out.status = status
        if status == "acked":
            out.ack_down_fcnt = down_fcnt
            out.acked_at = self.sim.scheduler.now
        self.pending = None
        for ev in self._window_events:
            self.sim.scheduler.cancel(ev)
        self._window_events = []
        self.sim.trace.record("device_outcome", device=self.node_id, fcnt=out.fcnt, status=status,
                              attempts=out.attempts, ack_down_fcnt=down_fcnt)
        self.sim.scheduler.after(self.uplink_interval, self._next_uplink)

    # -- downlink side ----------------------------------------------------------
    def in_window(self, t: float) -> bool:
        if self.pending is None:
            return False
        return any(lo - _WINDOW_EPS <= t < hi for lo, hi in self.pending.windows)

    def on_radio_rx(self, rx: Reception) -> None:
        if not self.in_window(rx.frame.start) or not rx.crc_ok:
            return
        try:
            frame = parse_frame(rx.payload)
        except FrameError:
            return
        if frame.dev_addr != self.dev_addr:
            return
        self.device_handle_downlink(frame)

    def device_handle_downlink(self, frame) -> str:
        """Counter rule and MIC check against the pending uplink; returns ``acked`` or ``ignored``."""
        p = self.pending
        if p is None:
            return "ignored"
        verdict = verify_ack(self.key, frame, self.last_down_fcnt, self.mic_mode, p.fcnt)
        self.verdict_counts[verdict.value] += 1
        self.outcomes[p.fcnt].verdicts.append(verdict.value)
        self.sim.trace.record("device_downlink", device=self.node_id, fcnt=p.fcnt, down_fcnt=frame.fcnt,
                              verdict=verdict.value)
        if verdict is not AckVerdict.ACCEPTED:
            return "ignored"
        self.last_down_fcnt = frame.fcnt
        if not frame.is_ack:
            return "ignored"
        self._finish("acked", frame.fcnt)
        return "acked"
