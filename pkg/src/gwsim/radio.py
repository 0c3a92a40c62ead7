"""Virtual ether: airtime, coverage, collisions and jam resolution.

Coverage is an explicit symmetric adjacency between node ids.  A frame is
heard by every attached node adjacent to its source that listens in the
frame's direction (gateways hear uplinks, devices hear downlinks).  All
intervals are half-open ``[start, start + airtime)``.

Reception outcomes are resolved when a frame ends:

* another frame with the same SF and channel overlapping in time and audible
  at the receiver corrupts both (different SFs coexist);
* a jam burst audible at the receiver that overlaps the frame triggers a
  Bernoulli draw with the channel model's per-SF success probability; a hit
  corrupts the frame (``crc_policy_on_jam="corrupt"``) or erases it (``"lose"``).
"""

from __future__ import annotations

import zlib
from collections import defaultdict
from dataclasses import dataclass, field, replace

import numpy as np

BASE_AIRTIME_MS = 40.0
REFERENCE_LEN = 37
SF_RANGE = range(7, 13)

# Table of wormhole-jammer success per SF; 9 sits inside a 0-95% band with no
# distribution given, 0.5 is a placeholder.
DEFAULT_JAM_SUCCESS = {7: 0.0, 8: 0.0, 9: 0.5, 10: 0.97, 11: 0.97, 12: 0.97}

CRC_POLICIES = ("corrupt", "lose")
_RETENTION_MS = 60_000.0


class RadioError(ValueError):
    pass


def airtime_model(sf: int, payload_len: int, base_ms: float = BASE_AIRTIME_MS,
                  reference_len: int = REFERENCE_LEN) -> float:
    """Airtime in ms: ``base_ms`` for a ``reference_len``-byte frame at SF7,
    doubling per SF step and proportional to length."""
    if sf not in SF_RANGE:
        raise RadioError(f"spreading factor {sf} outside 7..12")
    if payload_len <= 0:
        raise RadioError("payload must be at least one byte")
    return base_ms * 2 ** (sf - 7) * payload_len / reference_len


@dataclass(frozen=True)
class RadioFrame:
    payload: bytes
    sf: int
    channel: float
    source: str
    start: float
    airtime: float
    downlink: bool = False
    frame_id: int = -1

    @property
    def end(self) -> float:
        return self.start + self.airtime

    def overlaps(self, start: float, end: float) -> bool:
        return self.start < end and start < self.end


@dataclass(frozen=True)
class Reception:
    frame: RadioFrame
    at: str
    crc_ok: bool
    payload: bytes
    cause: str = ""


@dataclass(frozen=True)
class JamBurst:
    jammer: str
    channel: float
    start: float
    end: float
    # wormhole bursts only exist if this node recorded the triggering frame intact
    recorder: str | None = None
    frame_id: int | None = None
    record_done: float | None = None

    def overlaps(self, frame: RadioFrame) -> bool:
        return self.channel == frame.channel and self.start < frame.end and frame.start < self.end


class Coverage:
    """Symmetric who-hears-whom relation."""

    def __init__(self, pairs=()):
        self._adj: dict[str, set[str]] = defaultdict(set)
        for a, b in pairs:
            self.add(a, b)

    def add(self, a: str, b: str) -> None:
        if a == b:
            raise RadioError(f"node {a!r} cannot be adjacent to itself")
        self._adj[a].add(b)
        self._adj[b].add(a)

    def adjacent(self, a: str, b: str) -> bool:
        return b in self._adj.get(a, ())

    def neighbors(self, a: str) -> list[str]:
        return sorted(self._adj.get(a, ()))

    def nodes(self) -> set[str]:
        return set(self._adj)

    def pairs(self) -> list[tuple[str, str]]:
        return sorted({tuple(sorted((a, b))) for a, nbrs in self._adj.items() for b in nbrs})


@dataclass
class ChannelModel:
    jam_success: dict[int, float] = field(default_factory=lambda: dict(DEFAULT_JAM_SUCCESS))
    coverage: Coverage = field(default_factory=Coverage)
    crc_policy_on_jam: str = "corrupt"

    def __post_init__(self):
        self.jam_success = {int(k): float(v) for k, v in self.jam_success.items()}
        for sf, p in self.jam_success.items():
            if sf not in SF_RANGE:
                raise RadioError(f"jam_success has spreading factor {sf} outside 7..12")
            if not 0.0 <= p <= 1.0:
                raise RadioError(f"jam_success[{sf}]={p} is not a probability")
        if self.crc_policy_on_jam not in CRC_POLICIES:
            raise RadioError(f"crc_policy_on_jam must be one of {CRC_POLICIES}")

    def success(self, sf: int) -> float:
        return self.jam_success.get(sf, 0.0)


def corrupt_tail(payload: bytes, rng, nbytes: int = 2) -> bytes:
    """Damage the trailing bytes, where CRC and MIC live."""
    if not payload:
        return payload
    n = min(nbytes, len(payload))
    noise = bytes(int(x) for x in rng.integers(1, 256, size=n))
    tail = bytes(a ^ b for a, b in zip(payload[-n:], noise))
    return payload[:-n] + tail


def resolve_reception(frame: RadioFrame, jam_overlap: bool, rng, model: ChannelModel,
                      at: str = "") -> Reception | None:
    """Outcome of a collision-free reception that may overlap a jam burst.

    ``None`` means the jam erased the frame (``crc_policy_on_jam="lose"``).
    """
    if not jam_overlap:
        return Reception(frame, at, True, frame.payload)
    if rng.random() >= model.success(frame.sf):
        return Reception(frame, at, True, frame.payload)
    if model.crc_policy_on_jam == "lose":
        return None
    return Reception(frame, at, False, corrupt_tail(frame.payload, rng), cause="jam")


class Ether:
    """Shared medium driven by the scheduler.

    ``scheduler`` needs ``now`` and ``schedule(at, fn, *args)``; ``trace`` (optional)
    needs ``record(kind, **fields)``.
    """

    def __init__(self, scheduler, model: ChannelModel, seed: int = 0, trace=None):
        self.scheduler = scheduler
        self.model = model
        self.trace = trace
        self._seed = int(seed)
        self._listeners: dict[str, tuple[object, bool]] = {}
        self._observers = []
        self._frames: dict[int, RadioFrame] = {}
        self._bursts: list[JamBurst] = []
        self._next_id = 0
        self._status_cache: dict[tuple, Reception | None] = {}

    # -- wiring -----------------------------------------------------------------
    def attach(self, node_id: str, on_receive, *, hears_downlink: bool) -> None:
        self._listeners[node_id] = (on_receive, hears_downlink)

    def detach(self, node_id: str) -> None:
        self._listeners.pop(node_id, None)

    def add_frame_observer(self, fn) -> None:
        """``fn(frame)`` is called when a frame starts (jammers, scanners)."""
        self._observers.append(fn)

    def add_burst(self, burst: JamBurst) -> None:
        if burst.end > burst.start:
            self._bursts.append(burst)
            if self.trace is not None:
                self.trace.record("jam_burst", jammer=burst.jammer, start=burst.start, end=burst.end,
                                  frame_id=burst.frame_id)

    def truncate_bursts(self, jammer: str, at: float) -> None:
        """End every burst of ``jammer`` no later than ``at``."""
        cut = [replace(b, end=min(b.end, at)) if b.jammer == jammer else b for b in self._bursts]
        self._bursts = [b for b in cut if b.end > b.start]

    # -- transmission -----------------------------------------------------------
    def transmit(self, frame: RadioFrame) -> RadioFrame:
        if frame.start < self.scheduler.now:
            raise RadioError("cannot transmit in the past")
        frame = replace(frame, frame_id=self._next_id)
        self._next_id += 1
        self._frames[frame.frame_id] = frame
        self.scheduler.schedule(frame.start, self._on_start, frame)
        self.scheduler.schedule(frame.end, self._on_end, frame)
        return frame

    def carrier_busy(self, channel: float, at_time: float) -> bool:
        return any(f.channel == channel and f.start <= at_time < f.end for f in self._frames.values())

    def _on_start(self, frame: RadioFrame) -> None:
        if self.trace is not None:
            self.trace.record("radio_tx", frame_id=frame.frame_id, source=frame.source, sf=frame.sf,
                              channel=frame.channel, airtime=frame.airtime, downlink=frame.downlink,
                              payload=frame.payload.hex())
        for fn in list(self._observers):
            fn(frame)

    def _on_end(self, frame: RadioFrame) -> None:
        for node in self.model.coverage.neighbors(frame.source):
            entry = self._listeners.get(node)
            if entry is None or entry[1] != frame.downlink:
                continue
            rx = self.reception(frame, node)
            if self.trace is not None:
                self.trace.record("radio_rx", frame_id=frame.frame_id, at=node,
                                  result="lost" if rx is None else ("ok" if rx.crc_ok else "corrupt"),
                                  cause="" if rx is None else rx.cause)
            if rx is not None:
                entry[0](rx)
        self._prune()

    # -- outcome model -----------------------------------------------------------
    def _draws(self, frame_id: int, node: str):
        return np.random.default_rng([self._seed, frame_id, zlib.crc32(node.encode())])

    def reception(self, frame: RadioFrame, node: str, cutoff: float | None = None) -> Reception | None:
        """Reception of ``frame`` at ``node`` counting only interference that
        starts before ``cutoff`` (``None``: all of it)."""
        key = (frame.frame_id, node, cutoff)
        if key in self._status_cache:
            return self._status_cache[key]
        rx = self._resolve(frame, node, cutoff)
        self._status_cache[key] = rx
        return rx

    def _resolve(self, frame, node, cutoff):
        cov = self.model.coverage
        for other in self._frames.values():
            if (other.frame_id == frame.frame_id or other.channel != frame.channel or other.sf != frame.sf
                    or not other.overlaps(frame.start, frame.end) or other.source == node
                    or not cov.adjacent(other.source, node)):
                continue
            if cutoff is not None and other.start >= cutoff:
                continue
            rng = self._draws(frame.frame_id, node)
            return Reception(frame, node, False, corrupt_tail(frame.payload, rng), cause="collision")
        jam_overlap = any(self._burst_hits(b, frame, node, cutoff) for b in self._bursts)
        return resolve_reception(frame, jam_overlap, self._draws(frame.frame_id, node), self.model, at=node)

    def _burst_hits(self, b: JamBurst, frame: RadioFrame, node: str, cutoff) -> bool:
        if not b.overlaps(frame) or b.recorder == node or not self.model.coverage.adjacent(b.jammer, node):
            return False
        if cutoff is not None and b.start >= cutoff:
            return False
        if b.recorder is None:
            return True
        recorded = self._frames.get(b.frame_id)
        if recorded is None:
            return False
        rec = self.reception(recorded, b.recorder, cutoff=b.record_done)
        return rec is not None and rec.crc_ok

    def _prune(self) -> None:
        horizon = self.scheduler.now - _RETENTION_MS
        stale = [fid for fid, f in self._frames.items() if f.end < horizon]
        for fid in stale:
            del self._frames[fid]
        if stale:
            gone = set(stale)
            self._status_cache = {k: v for k, v in self._status_cache.items() if k[0] not in gone}
        self._bursts = [b for b in self._bursts if b.end >= horizon]
