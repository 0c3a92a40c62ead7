"""Server-side detection of gateway impersonation.

Four detectors read the stream of datagrams as the network server sees them
(EUI, source address, kind, CRC status) and a correlator escalates when two or
more different detectors fire for the same EUI close together.
"""

from __future__ import annotations

import json
from collections import Counter, defaultdict, deque
from dataclasses import asdict, dataclass

from .codec import DatagramKind, GatewayEui

ADDRESS_CHANGE = "address_change"
MIXED_ORIGIN = "mixed_origin"
PULL_RATE = "pull_rate"
CRC_RATE = "crc_rate"
CORRELATED = "correlated_impersonation"

SEVERITY = {
    ADDRESS_CHANGE: "hint",
    PULL_RATE: "warning",
    CRC_RATE: "warning",
    MIXED_ORIGIN: "critical",
    CORRELATED: "critical",
}
DETECTORS = tuple(SEVERITY)


class OutOfOrderObservation(ValueError):
    pass


@dataclass(frozen=True)
class Observation:
    time: float
    eui: GatewayEui
    source: str
    kind: DatagramKind
    stat: int | None = None

    def __post_init__(self):
        if (self.stat is not None) != (self.kind is DatagramKind.PUSH_DATA):
            raise ValueError("stat is carried by PUSH_DATA packets only")


@dataclass(frozen=True)
class Alert:
    time: float
    detector: str
    eui: str
    severity: str
    evidence: str

    def to_dict(self) -> dict:
        d = asdict(self)
        d["time"] = round(d["time"], 3)
        return d


@dataclass
class IdsConfig:
    window_ms: float = 60_000.0
    min_samples: int = 5
    concentration: float = 0.8
    crc_window_packets: int = 40
    crc_baseline_max: float = 0.05
    crc_alarm_fraction: float = 0.35
    pull_factor: float = 1.5
    warmup_ms: float = 300_000.0
    correlation_window_ms: float = 300_000.0


def _alert(obs: Observation, detector: str, evidence: str) -> Alert:
    return Alert(obs.time, detector, str(obs.eui), SEVERITY[detector], evidence)


class _Edge:
    """Rising-edge latch per EUI; re-arms once the condition stayed clear for ``rearm_ms``."""

    def __init__(self, rearm_ms: float):
        self.rearm_ms = rearm_ms
        self.raised: dict[GatewayEui, bool] = defaultdict(bool)
        self.clear_since: dict[GatewayEui, float | None] = {}

    def update(self, eui: GatewayEui, condition: bool, t: float) -> bool:
        if condition:
            self.clear_since[eui] = None
            if self.raised[eui]:
                return False
            self.raised[eui] = True
            return True
        if self.raised[eui]:
            since = self.clear_since.get(eui)
            if since is None:
                self.clear_since[eui] = t
            elif t - since >= self.rearm_ms:
                self.raised[eui] = False
        return False


class AddressChangeDetector:
    """Hint when a known EUI shows up from an address never seen for it before."""

    def __init__(self, cfg: IdsConfig):
        self.seen: dict[GatewayEui, list[str]] = defaultdict(list)

    def observe(self, obs: Observation) -> list[Alert]:
        seen = self.seen[obs.eui]
        if obs.source in seen:
            return []
        seen.append(obs.source)
        if len(seen) == 1:
            return []
        return [_alert(obs, ADDRESS_CHANGE, f"{seen[-2]} -> {obs.source}")]


class MixedOriginDetector:
    def __init__(self, cfg: IdsConfig):
        self.cfg = cfg
        self.recent: dict[GatewayEui, deque] = defaultdict(deque)
        self.edge = _Edge(cfg.window_ms)

    def condition(self, eui: GatewayEui) -> tuple[str, str] | None:
        counts: dict[str, Counter] = defaultdict(Counter)
        for _, src, stat in self.recent[eui]:
            counts[src][stat] += 1
        n, conc = self.cfg.min_samples, self.cfg.concentration
        bad = [s for s, c in counts.items() if c[-1] >= n and c[-1] >= conc * sum(c.values())]
        good = [s for s, c in counts.items() if c[1] >= n and c[1] >= conc * sum(c.values())]
        for b in bad:
            for g in good:
                if g != b:
                    return b, g
        return None

    def observe(self, obs: Observation) -> list[Alert]:
        if obs.kind is not DatagramKind.PUSH_DATA or obs.stat == 0:
            return []
        q = self.recent[obs.eui]
        q.append((obs.time, obs.source, obs.stat))
        while q and q[0][0] <= obs.time - self.cfg.window_ms:
            q.popleft()
        hit = self.condition(obs.eui)
        if not self.edge.update(obs.eui, hit is not None, obs.time):
            return []
        return [_alert(obs, MIXED_ORIGIN, f"CRC failures from {hit[0]}, intact packets from {hit[1]}")]


class PullRateDetector:
    """PULL_DATA rate in a sliding window against the rate learned during warm-up."""

    def __init__(self, cfg: IdsConfig):
        self.cfg = cfg
        self.first: dict[GatewayEui, float] = {}
        self.warm_count: Counter = Counter()
        self.baseline: dict[GatewayEui, float] = {}
        self.recent: dict[GatewayEui, deque] = defaultdict(deque)
        self.edge = _Edge(cfg.window_ms)

    def observe(self, obs: Observation) -> list[Alert]:
        if obs.kind is not DatagramKind.PULL_DATA:
            return []
        eui, t = obs.eui, obs.time
        t0 = self.first.setdefault(eui, t)
        if eui not in self.baseline:
            if t < t0 + self.cfg.warmup_ms:
                self.warm_count[eui] += 1
            else:
                self.baseline[eui] = self.warm_count[eui] / self.cfg.warmup_ms
        q = self.recent[eui]
        q.append(t)
        while q and q[0] <= t - self.cfg.window_ms:
            q.popleft()
        base = self.baseline.get(eui)
        if not base:
            return []
        rate = len(q) / self.cfg.window_ms
        if not self.edge.update(eui, rate >= self.cfg.pull_factor * base, t):
            return []
        per_min = 60_000.0
        return [_alert(obs, PULL_RATE, f"{rate * per_min:.1f} PULL_DATA/min vs baseline "
                                       f"{base * per_min:.1f}/min (x{rate / base:.2f})")]


class CrcRateDetector:
    """Corrupt share of the last N packets jumps while the learned baseline was clean."""

    def __init__(self, cfg: IdsConfig):
        self.cfg = cfg
        self.first: dict[GatewayEui, float] = {}
        self.warm: dict[GatewayEui, Counter] = defaultdict(Counter)
        self.baseline: dict[GatewayEui, float] = {}
        self.recent: dict[GatewayEui, deque] = {}
        self.edge = _Edge(cfg.window_ms)

    def observe(self, obs: Observation) -> list[Alert]:
        if obs.kind is not DatagramKind.PUSH_DATA:
            return []
        eui, cfg = obs.eui, self.cfg
        bad = obs.stat == -1
        t0 = self.first.setdefault(eui, obs.time)
        if eui not in self.baseline:
            warm = self.warm[eui]
            if obs.time < t0 + cfg.warmup_ms or warm["n"] < cfg.min_samples:
                warm["n"] += 1
                warm["bad"] += bad
                return []
            self.baseline[eui] = warm["bad"] / warm["n"]
        q = self.recent.setdefault(eui, deque(maxlen=cfg.crc_window_packets))
        q.append(bad)
        if len(q) < cfg.crc_window_packets:
            return []
        frac = sum(q) / len(q)
        base = self.baseline[eui]
        hit = base <= cfg.crc_baseline_max and frac >= cfg.crc_alarm_fraction
        if not self.edge.update(eui, hit, obs.time):
            return []
        return [_alert(obs, CRC_RATE, f"corrupt share {frac:.2f} over last {len(q)} packets, "
                                      f"baseline {base:.2f}")]


class Correlator:
    """One critical verdict per episode once two distinct detectors agree on an EUI."""

    def __init__(self, cfg: IdsConfig):
        self.cfg = cfg
        self.recent: dict[str, deque] = defaultdict(deque)
        self.in_episode: dict[str, bool] = defaultdict(bool)

    def correlate(self, alert: Alert) -> list[Alert]:
        q = self.recent[alert.eui]
        w = self.cfg.correlation_window_ms
        if q and alert.time - q[-1][0] > w:
            self.in_episode[alert.eui] = False
        q.append((alert.time, alert.detector))
        while q and q[0][0] < alert.time - w:
            q.popleft()
        kinds = sorted({k for _, k in q})
        if len(kinds) < 2 or self.in_episode[alert.eui]:
            return []
        self.in_episode[alert.eui] = True
        return [Alert(alert.time, CORRELATED, alert.eui, SEVERITY[CORRELATED],
                      "co-occurring traces: " + ", ".join(kinds))]


class IdsEngine:
    def __init__(self, cfg: IdsConfig | None = None):
        self.cfg = cfg or IdsConfig()
        self.detectors = [AddressChangeDetector(self.cfg), MixedOriginDetector(self.cfg),
                          PullRateDetector(self.cfg), CrcRateDetector(self.cfg)]
        self.correlator = Correlator(self.cfg)
        self.alerts: list[Alert] = []
        self._last_time = float("-inf")

    def observe(self, obs: Observation) -> list[Alert]:
        if obs.time < self._last_time:
            raise OutOfOrderObservation(f"observation at {obs.time} after {self._last_time}")
        self._last_time = obs.time
        raised = []
        for det in self.detectors:
            for alert in det.observe(obs):
                raised.append(alert)
                raised.extend(self.correlator.correlate(alert))
        self.alerts.extend(raised)
        return raised

    def counts(self) -> dict[str, int]:
        c = Counter(a.detector for a in self.alerts)
        return {k: c.get(k, 0) for k in DETECTORS}

    def log_lines(self) -> str:
        return "".join(json.dumps(a.to_dict(), separators=(",", ":")) + "\n" for a in self.alerts)
