"""Jammer kinds: constant, triggered, selective and wormhole.

Every kind turns into ``JamBurst`` intervals on the ether; the channel model
decides per reception whether an overlapping burst actually corrupts it.

Timing per uplink frame ``[start, end)``:

* constant   - one burst spanning the whole active period
* triggered  - ``[start + latency, end)`` for any frame the jammer hears
* selective  - ``[start + header_fraction * airtime + latency, end)`` for target DevAddrs
* wormhole   - the recorder needs the frame up to its trailing CRC; the burst is
  ``[record_done + latency, end)`` with ``record_done = end - crc_bytes * airtime / len``.
  With short frames at low SF that tail is shorter than the latency and no
  burst reaches the frame at all.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..mac import DevAddr, peek_dev_addr
from ..radio import JamBurst, RadioFrame

JAMMER_KINDS = ("constant", "triggered", "selective", "wormhole")


@dataclass(frozen=True)
class JammerConfig:
    kind: str
    target_dev_addrs: frozenset = frozenset()
    trigger_latency: float = 5.0
    header_fraction: float = 0.25
    crc_bytes: int = 2
    channel: float = 868.1

    def __post_init__(self):
        if self.kind not in JAMMER_KINDS:
            raise ValueError(f"jammer kind must be one of {JAMMER_KINDS}")
        object.__setattr__(self, "target_dev_addrs", frozenset(self.target_dev_addrs))
        if self.kind in ("selective", "wormhole") and not self.target_dev_addrs:
            raise ValueError(f"{self.kind} jamming needs at least one target DevAddr")
        if self.trigger_latency < 0:
            raise ValueError("trigger_latency must be >= 0")
        if not 0.0 <= self.header_fraction < 1.0:
            raise ValueError("header_fraction must be in [0, 1)")
        if self.crc_bytes < 0:
            raise ValueError("crc_bytes must be >= 0")

    def targets(self, frame: RadioFrame) -> bool:
        addr = peek_dev_addr(frame.payload)
        return addr is not None and addr in self.target_dev_addrs


def record_done(cfg: JammerConfig, frame: RadioFrame) -> float:
    """Time at which a recorder has captured everything but the trailing CRC."""
    tail = frame.airtime * min(cfg.crc_bytes, len(frame.payload)) / len(frame.payload)
    return frame.end - tail


def plan_burst(cfg: JammerConfig, frame: RadioFrame, jammer_id: str, recorder: str | None = None) -> JamBurst | None:
    """Burst a reactive jammer would emit against ``frame``, or None if it ignores it."""
    if frame.downlink or frame.channel != cfg.channel:
        return None
    if cfg.kind == "triggered":
        return JamBurst(jammer_id, frame.channel, frame.start + cfg.trigger_latency, frame.end)
    if not cfg.targets(frame):
        return None
    if cfg.kind == "selective":
        start = frame.start + cfg.header_fraction * frame.airtime + cfg.trigger_latency
        return JamBurst(jammer_id, frame.channel, start, frame.end)
    if cfg.kind == "wormhole":
        return wormhole_record_and_trigger(cfg, frame, jammer_id, recorder)
    return None


def wormhole_record_and_trigger(cfg: JammerConfig, frame: RadioFrame, jammer_id: str,
                                recorder: str) -> JamBurst:
    """Trigger fired once ``recorder`` finished recording; the ether voids the
    burst if that recording was itself damaged."""
    done = record_done(cfg, frame)
    return JamBurst(jammer_id, frame.channel, done + cfg.trigger_latency, frame.end,
                    recorder=recorder, frame_id=frame.frame_id, record_done=done)


class Jammer:
    """Jamming device attached to the ether.

    Reactive kinds listen with their own radio (triggered, selective) or rely
    on the recorder's radio (wormhole), so the respective listener has to be
    in coverage of the transmitting device.
    """

    def __init__(self, sim, node_id: str, cfg: JammerConfig, *, recorder: str | None = None):
        if cfg.kind == "wormhole" and recorder is None:
            raise ValueError("wormhole jamming needs a recorder node")
        self.sim = sim
        self.node_id = node_id
        self.cfg = cfg
        self.recorder = recorder
        self.active = False
        self.bursts = 0
        self._constant_until: float | None = None
        sim.ether.add_frame_observer(self.on_frame_start)

    def start(self, until: float) -> None:
        if self.active:
            return
        self.active = True
        now = self.sim.scheduler.now
        self.sim.trace.record("jammer_on", jammer=self.node_id, jam_kind=self.cfg.kind)
        if self.cfg.kind == "constant":
            self._constant_until = until
            self._emit(JamBurst(self.node_id, self.cfg.channel, now, until))

    def stop(self) -> None:
        if not self.active:
            return
        self.active = False
        now = self.sim.scheduler.now
        self.sim.trace.record("jammer_off", jammer=self.node_id)
        if self._constant_until is not None:
            self.sim.ether.truncate_bursts(self.node_id, now)
            self._constant_until = None

    def _listener(self) -> str:
        return self.recorder if self.cfg.kind == "wormhole" else self.node_id

    def on_frame_start(self, frame: RadioFrame) -> None:
        if not self.active or self.cfg.kind == "constant":
            return
        if not self.sim.ether.model.coverage.adjacent(frame.source, self._listener()):
            return
        burst = plan_burst(self.cfg, frame, self.node_id, self.recorder)
        if burst is not None:
            self._emit(burst)

    def _emit(self, burst: JamBurst) -> None:
        if burst.end > burst.start:
            self.bursts += 1
        self.sim.ether.add_burst(burst)


def dev_addrs(values) -> frozenset:
    return frozenset(v if isinstance(v, DevAddr) else DevAddr.parse(v) for v in values)
