"""The attacker's rogue gateway and the four-step impersonation sequence.

1. obtain the victim's EUI (sniffing its server link, or a public registry export)
2. disable the victim (pull the plug, or jam it from a distance)
3. forward device traffic under the stolen EUI, optionally flooding PULL_DATA
4. optionally spoof ACKs: hold back one genuine ACK and replay it for a later uplink
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from ..codec import CodecError, Datagram, GatewayEui, RxPacketMeta, parse_txpk, push_data, tx_ack
from ..mac import DevAddr, FrameError, MacFrame, parse_frame
from ..nodes.gateway import Gateway
from ..radio import Reception
from .jammer import Jammer
from .steps import AttackError, DisconnectRefused, SniffError, StepOrderError, disconnect_gateway, \
    eui_from_registry, sniff_eui

MODES = ("idle", "impostor_disconnect", "impostor_jam")
EUI_SOURCES = ("sniff", "registry", "sniff_or_registry")
DISABLE_METHODS = ("disconnect", "jam", "none")
SPOOF_PHASES = ("await_target", "withholding", "replaying", "done")


@dataclass
class AckSpoofState:
    target: DevAddr | None = None
    phase: str = "await_target"
    recorded_ack: bytes | None = None
    withheld_for_fcnt: int | None = None
    dropped_fcnt: int | None = None
    result: str | None = None

    def __post_init__(self):
        if self.phase not in SPOOF_PHASES:
            raise ValueError(f"phase must be one of {SPOOF_PHASES}")
        if self.phase == "replaying" and self.recorded_ack is None:
            raise ValueError("replaying needs a recorded ACK")


@dataclass
class AttackerState:
    stolen_eui: GatewayEui | None = None
    mode: str = "idle"
    jammer: Jammer | None = None
    ack_spoof: AckSpoofState | None = None
    pull_flood_factor: float = 1.0
    log: list[dict] = field(default_factory=list)

    def __post_init__(self):
        self.check()

    def check(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.mode != "idle" and self.stolen_eui is None:
            raise StepOrderError("impostor modes need a stolen EUI")
        if self.pull_flood_factor < 1:
            raise ValueError("pull_flood_factor must be >= 1")


class Attacker(Gateway):
    """Rogue packet forwarder with the attacker's own server link.

    It listens on the radio from the start (that is how it counts
    retransmissions and records frames for the wormhole), but sends nothing
    until the impersonation is switched on.  Only intact frames are forwarded,
    always from the attacker's own address.
    """

    def __init__(self, sim, node_id: str, address: str, server_address: str, *, victim: Gateway,
                 eui_source: str = "sniff", registry_export=None, victim_location: str = "",
                 disable: str = "disconnect", impostor: bool = True, jammer: Jammer | None = None,
                 pull_flood_factor: float = 1.0, spoof_target: DevAddr | None = None,
                 spoof_repeat: bool = False, expected_attempts: int = 4,
                 start_ms: float = 60_000.0, stop_ms: float | None = None, link=None):
        if eui_source not in EUI_SOURCES:
            raise ValueError(f"eui_source must be one of {EUI_SOURCES}")
        if disable not in DISABLE_METHODS:
            raise ValueError(f"disable must be one of {DISABLE_METHODS}")
        if disable == "jam" and jammer is None:
            raise ValueError("disable='jam' needs a jammer")
        super().__init__(sim, node_id, GatewayEui(bytes(8)), address, server_address,
                         pull_interval=victim.pull_interval, pull_mode=victim.pull_mode, alive=False,
                         link=link, rx1_delay=victim.rx1_delay, rx2_delay=victim.rx2_delay)
        self.victim = victim
        self.eui_source = eui_source
        self.registry_export = registry_export
        self.victim_location = victim_location
        self.disable_method = disable
        self.impostor = impostor
        self.start_ms = start_ms
        self.stop_ms = stop_ms
        self.spoof_repeat = spoof_repeat
        self.expected_attempts = expected_attempts
        self.state = AttackerState(jammer=jammer, pull_flood_factor=pull_flood_factor,
                                   ack_spoof=AckSpoofState(spoof_target) if spoof_target else None)
        self.captured: list[bytes] = []
        self.sniffing = False
        self.heard = Counter()  # (dev_addr, fcnt) -> attempts heard on the radio
        self.recordings: list[bytes] = []
        self.spoofs: list[dict] = []
        self._last_radio = (868.1, 7)

    # -- orchestration ------------------------------------------------------------
    def start(self) -> None:
        self.sniffing = self.sim.network.tap(self.victim.address, self._capture)
        sched = self.sim.scheduler
        sched.schedule(max(self.start_ms, sched.now), self.begin)
        if self.stop_ms is not None:
            sched.schedule(max(self.stop_ms, sched.now), self.end)

    def _capture(self, raw: bytes, src: str, dst: str) -> None:
        if src == self.victim.address:
            self.captured.append(raw)

    def _step(self, step: str, ok: bool, **info) -> None:
        entry = {"t": self.sim.scheduler.now, "step": step, "ok": ok, **info}
        self.state.log.append(entry)
        self.sim.trace.record("attack_step", attacker=self.node_id, step=step, ok=ok, **info)

    def acquire_eui(self) -> GatewayEui:
        errors = []
        if self.eui_source in ("sniff", "sniff_or_registry"):
            try:
                eui = sniff_eui(self.captured)
                self._step("acquire_eui", True, method="sniff", eui=str(eui))
                return eui
            except SniffError as exc:
                errors.append(f"sniff: {exc}" if self.sniffing else "sniff: link not eavesdroppable")
                self._step("acquire_eui", False, method="sniff", reason=errors[-1])
        if self.eui_source in ("registry", "sniff_or_registry"):
            try:
                if self.registry_export is None:
                    raise AttackError("no registry export available")
                export = self.registry_export() if callable(self.registry_export) else self.registry_export
                eui = eui_from_registry(export, self.victim_location)
                self._step("acquire_eui", True, method="registry", eui=str(eui))
                return eui
            except AttackError as exc:
                errors.append(f"registry: {exc}")
                self._step("acquire_eui", False, method="registry", reason=errors[-1])
        raise SniffError("; ".join(errors))

    def begin(self) -> None:
        if self.impostor:
            try:
                self.state.stolen_eui = self.acquire_eui()
            except SniffError:
                return
        jammer = self.state.jammer
        if self.disable_method == "disconnect":
            try:
                disconnect_gateway(self.victim)
            except DisconnectRefused as exc:
                self._step("disable", False, method="disconnect", reason=str(exc))
                return
            self._step("disable", True, method="disconnect")
        elif self.disable_method == "jam":
            jammer.start(until=self.sim.horizon)
            self._step("disable", True, method="jam")
        if self.impostor:
            self.activate()

    def victim_disabled(self) -> bool:
        jammer = self.state.jammer
        return not self.victim.alive or (jammer is not None and jammer.active)

    def activate(self) -> None:
        if self.state.stolen_eui is None or not self.victim_disabled():
            raise StepOrderError("impersonation needs a stolen EUI and a disabled victim")
        self.eui = self.state.stolen_eui
        self.state.mode = "impostor_disconnect" if not self.victim.alive else "impostor_jam"
        self.state.check()
        self.alive = True
        self.pull_flood(self.state.pull_flood_factor)
        self._keepalive_ev = self.sim.scheduler.after(float(self._rng.uniform(0, self.pull_interval)),
                                                      self.gateway_keepalive)
        self._step("impersonate", True, mode=self.state.mode, pull_interval=self.pull_interval)

    def end(self) -> None:
        if self.state.jammer is not None:
            self.state.jammer.stop()
        if self.alive:
            self.alive = False
            self.sim.scheduler.cancel(self._keepalive_ev)
            self._keepalive_ev = None
        self.state.mode = "idle"
        self._step("stop", True)

    def _require_impostor(self) -> None:
        if self.state.mode == "idle" or self.state.stolen_eui is None or not self.victim_disabled():
            raise StepOrderError("not impersonating: steal the EUI and disable the victim first")

    def pull_flood(self, factor: float) -> None:
        """Send PULL_DATA ``factor`` times as often as the victim does."""
        self._require_impostor()
        if factor < 1:
            raise ValueError("pull flood factor must be >= 1")
        self.state.pull_flood_factor = factor
        self.pull_interval = self.victim.pull_interval / factor

    # -- radio side ---------------------------------------------------------------
    def on_radio_rx(self, rx: Reception) -> None:
        if rx.frame.downlink:
            return
        self._last_radio = (rx.frame.channel, rx.frame.sf)
        if rx.crc_ok:
            self.recordings.append(rx.payload)
            try:
                frame = parse_frame(rx.payload)
            except FrameError:
                frame = None
            if frame is not None:
                self.heard[(frame.dev_addr.raw, frame.fcnt)] += 1
        super().on_radio_rx(rx)

    def gateway_on_radio_rx(self, rx: Reception) -> Datagram | None:
        if not rx.crc_ok:
            return None
        return self.impostor_forward(rx)

    def impostor_forward(self, rx: Reception) -> Datagram | None:
        """PUSH_DATA under the stolen EUI, or None if the frame is being suppressed."""
        self._require_impostor()
        try:
            frame = parse_frame(rx.payload)
        except FrameError:
            frame = None
        if frame is not None and not self.ack_spoof_step("uplink", frame, rx.payload):
            return None
        self.stats["pushes"] += 1
        meta = RxPacketMeta.from_frame(rx.payload, stat=1, freq=rx.frame.channel, sf=rx.frame.sf)
        return push_data(self._token(), self.eui, [meta])

    # -- downlink side ------------------------------------------------------------
    def on_pull_resp(self, d: Datagram) -> None:
        try:
            txpk = parse_txpk(d.body)
            frame = parse_frame(txpk.payload())
        except (CodecError, FrameError):
            super().on_pull_resp(d)
            return
        if self.ack_spoof_step("downlink", frame, txpk.payload()):
            super().on_pull_resp(d)
            return
        # withheld, but the server is told the transmission went fine
        self.stats["tx_acks"] += 1
        self._send(tx_ack(d.token, self.eui))

    # -- ACK spoofing ---------------------------------------------------------------
    def ack_spoof_step(self, event: str, frame: MacFrame, raw: bytes) -> bool:
        """Advance the spoofing state machine; True means pass the packet on."""
        st = self.state.ack_spoof
        if st is None or frame.dev_addr != st.target:
            return True
        if event == "downlink":
            if st.phase == "await_target" and frame.is_ack and st.withheld_for_fcnt is not None:
                st.recorded_ack = raw
                st.phase = "withholding"
                self._spoof_event("withhold", fcnt=st.withheld_for_fcnt, down_fcnt=frame.fcnt)
                return False
            return st.phase not in ("withholding", "replaying")
        # uplink
        if st.phase == "await_target":
            st.withheld_for_fcnt = frame.fcnt
            return True
        if st.phase == "withholding":
            if frame.fcnt == st.withheld_for_fcnt:
                return False
            heard = self.heard[(frame.dev_addr.raw, st.withheld_for_fcnt)]
            if heard < self.expected_attempts:
                # the device got its ACK some other way; start over
                self._spoof_event("abort", fcnt=st.withheld_for_fcnt, heard=heard)
                self._reset_spoof(st, frame.fcnt)
                return True
            st.dropped_fcnt = frame.fcnt
            st.phase = "replaying"
            at = self.downlink_time(st.recorded_ack)
            channel, sf = self._last_radio
            self.transmit_downlink(st.recorded_ack, channel, sf, at=at)
            self._spoof_event("replay", fcnt=frame.fcnt, withheld=st.withheld_for_fcnt, at=at)
            return False
        if st.phase == "replaying":
            st.result = "rejected" if frame.fcnt == st.dropped_fcnt else "accepted"
            st.phase = "done"
            self._spoof_event("done", result=st.result, fcnt=frame.fcnt)
            if self.spoof_repeat:
                self._reset_spoof(st, frame.fcnt)
            return True
        return True

    def _reset_spoof(self, st: AckSpoofState, fcnt: int) -> None:
        st.phase = "await_target"
        st.recorded_ack = None
        st.dropped_fcnt = None
        st.withheld_for_fcnt = fcnt

    def _spoof_event(self, what: str, **info) -> None:
        self.spoofs.append({"t": self.sim.scheduler.now, "event": what, **info})
        self.sim.trace.record("ack_spoof", attacker=self.node_id, event=what, **info)
