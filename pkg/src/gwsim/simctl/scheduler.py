"""Deterministic discrete-event core: event queue, seeded RNG streams, trace."""

from __future__ import annotations

import heapq
import io
import json
import zlib
from dataclasses import dataclass, field

import numpy as np


class SchedulerError(RuntimeError):
    pass


@dataclass(order=True)
class _Event:
    time: float
    seq: int
    fn: object = field(compare=False)
    args: tuple = field(compare=False)
    cancelled: bool = field(default=False, compare=False)


class Scheduler:
    """Events fire in (time, insertion sequence) order."""

    def __init__(self, seed: int = 0, start: float = 0.0):
        self.seed = int(seed)
        self.now = float(start)
        self._queue: list[_Event] = []
        self._seq = 0
        self.fired = 0

    def schedule(self, at: float, fn, *args) -> _Event:
        if at < self.now:
            raise SchedulerError(f"event at {at} is in the past (now={self.now})")
        ev = _Event(float(at), self._seq, fn, args)
        self._seq += 1
        heapq.heappush(self._queue, ev)
        return ev

    def after(self, delay: float, fn, *args) -> _Event:
        return self.schedule(self.now + delay, fn, *args)

    @staticmethod
    def cancel(ev: _Event | None) -> None:
        if ev is not None:
            ev.cancelled = True

    def next_time(self) -> float | None:
        while self._queue and self._queue[0].cancelled:
            heapq.heappop(self._queue)
        return self._queue[0].time if self._queue else None

    def step(self) -> bool:
        while self._queue:
            ev = heapq.heappop(self._queue)
            if ev.cancelled:
                continue
            self.now = ev.time
            self.fired += 1
            ev.fn(*ev.args)
            return True
        return False

    def run(self, until: float) -> None:
        """Fire every event with time < ``until``; the clock ends at ``until``."""
        while True:
            t = self.next_time()
            if t is None or t >= until:
                break
            self.step()
        self.now = max(self.now, float(until))

    def rng(self, name: str) -> np.random.Generator:
        """Independent stream per name; the same (seed, name) always yields the same draws."""
        return np.random.default_rng([self.seed & 0xFFFFFFFFFFFFFFFF, zlib.crc32(name.encode())])


class Trace:
    """Line-delimited JSON event log with a monotonic sequence number."""

    def __init__(self, clock: Scheduler | None = None):
        self.clock = clock
        self.records: list[dict] = []

    def record(self, kind: str, **fields) -> dict:
        rec = {"seq": len(self.records),
               "t": round(self.clock.now, 3) if self.clock is not None else 0.0,
               "kind": kind}
        for k, v in fields.items():
            rec[k] = round(v, 3) if isinstance(v, float) else v
        self.records.append(rec)
        return rec

    def of_kind(self, kind: str) -> list[dict]:
        return [r for r in self.records if r["kind"] == kind]

    def dumps(self) -> str:
        buf = io.StringIO()
        for rec in self.records:
            buf.write(json.dumps(rec, separators=(",", ":")))
            buf.write("\n")
        return buf.getvalue()
