"""Build a simulation from a scenario and run it to its horizon."""

from __future__ import annotations

from dataclasses import dataclass, fields

from ..attacks import Attacker, Jammer, JammerConfig
from ..attacks.jammer import dev_addrs
from ..codec import GatewayEui
from ..ids import IdsConfig, IdsEngine
from ..mac import DevAddr, MicMode, NwkSKey
from ..nodes.device import EndDevice
from ..nodes.gateway import Gateway
from ..nodes.registry import Registry, RegistryEntry
from ..nodes.server import NetworkServer
from ..radio import DEFAULT_JAM_SUCCESS, ChannelModel, Coverage, Ether
from .network import LinkAttrs, Network
from .scenario import Scenario, ScenarioError, load_scenario
from .scheduler import Scheduler, Trace


class Sim:
    """Shared context handed to every node: clock, RNG streams, trace, ether, network."""

    def __init__(self, seed: int, horizon: float, model: ChannelModel):
        self.seed = seed
        self.horizon = horizon
        self.scheduler = Scheduler(seed)
        self.trace = Trace(self.scheduler)
        self.ether = Ether(self.scheduler, model, seed=seed, trace=self.trace)
        self.network = Network(self.scheduler, self.trace)

    def rng(self, name: str):
        return self.scheduler.rng(name)


@dataclass
class RunResult:
    scenario: Scenario
    params: dict
    sim: Sim
    server: NetworkServer
    devices: dict
    gateways: dict
    attacker: Attacker | None
    ids: IdsEngine

    @property
    def trace(self) -> Trace:
        return self.sim.trace

    @property
    def alerts(self):
        return self.ids.alerts

    def metrics(self) -> dict:
        from .metrics import collect_metrics
        return collect_metrics(self)


def _link(spec: dict) -> LinkAttrs:
    return LinkAttrs(spec["eavesdroppable"], spec["authenticated"], float(spec["latency_ms"]))


def _ids_config(overrides: dict) -> IdsConfig:
    known = {f.name for f in fields(IdsConfig)}
    bad = set(overrides) - known
    if bad:
        raise ScenarioError(f"unknown ids settings: {sorted(bad)}")
    return IdsConfig(**overrides)


def device_key(sim: Sim, device_id: str) -> NwkSKey:
    return NwkSKey(bytes(int(b) for b in sim.rng(f"key:{device_id}").integers(0, 256, size=16)))


def build(scenario: Scenario, params: dict | None = None) -> RunResult:
    doc = scenario.doc
    if doc.get("sweep"):
        raise ScenarioError("scenario has a sweep; run its points() one by one")
    jam_success = dict(DEFAULT_JAM_SUCCESS)
    jam_success.update({int(k): v for k, v in doc["channel"].get("jam_success", {}).items()})
    model = ChannelModel(jam_success, Coverage(tuple(p) for p in doc["adjacency"]),
                         doc["channel"]["crc_policy_on_jam"])
    sim = Sim(doc["seed"], float(doc["horizon_ms"]), model)

    srv = doc["server"]
    ids = IdsEngine(_ids_config(srv["ids"]))
    registry = Registry()
    server = NetworkServer(sim, srv["address"], registry, route_policy=doc["route_policy"],
                           require_registration=srv["require_registration"],
                           require_authenticated_link=srv["require_authenticated_link"],
                           dedup_window=float(srv["dedup_window_ms"]),
                           most_frequent_window=float(srv["most_frequent_window_ms"]), ids=ids)

    gateways = {}
    for g in doc["gateways"]:
        eui = GatewayEui.parse(g["eui"])
        if g["registered"]:
            registry.register(RegistryEntry(eui, g["description"], g["location"]))
        gateways[g["id"]] = Gateway(sim, g["id"], eui, g["address"], srv["address"],
                                    pull_interval=float(g["pull_interval_ms"]), pull_mode=g["pull_mode"],
                                    crc_forward_policy=g["crc_forward_policy"],
                                    physically_protected=g["physically_protected"], link=_link(g["link"]))

    devices = {}
    for d in doc["devices"]:
        addr = DevAddr.parse(d["dev_addr"])
        mode = MicMode(d.get("mic_mode", doc["mic_mode"]))
        key = device_key(sim, d["id"])
        server.add_device(addr, key, mode)
        devices[d["id"]] = EndDevice(sim, d["id"], addr, key, sf=d["sf"], channel=float(d["channel"]),
                                     mic_mode=mode, retransmit_limit=d["retransmit_limit"],
                                     payload_len=d["payload_len"], confirmed=d["confirmed"],
                                     uplink_interval=float(d["uplink_interval_ms"]),
                                     max_uplinks=d["max_uplinks"], start_offset=d["start_offset_ms"])

    attacker = None
    att = doc["attacker"]
    if att is not None:
        jammer = None
        if att["jammer"] is not None:
            j = att["jammer"]
            cfg = JammerConfig(j["kind"], dev_addrs(j["targets"]), float(j["trigger_latency_ms"]),
                               float(j["header_fraction"]), j["crc_bytes"], float(j["channel"]))
            jammer = Jammer(sim, j["id"], cfg, recorder=att["id"] if j["kind"] == "wormhole" else None)
        spoof = att["ack_spoof"]
        attacker = Attacker(sim, att["id"], att["address"], srv["address"], victim=gateways[att["victim"]],
                            eui_source=att["eui_source"], registry_export=registry.registry_export,
                            victim_location=att["victim_location"], disable=att["disable"],
                            impostor=att["impostor"], jammer=jammer,
                            pull_flood_factor=float(att["pull_flood_factor"]),
                            spoof_target=DevAddr.parse(spoof["target"]) if spoof else None,
                            spoof_repeat=spoof["repeat"] if spoof else False,
                            expected_attempts=spoof["expected_attempts"] if spoof else 4,
                            start_ms=float(att["start_ms"]),
                            stop_ms=None if att["stop_ms"] is None else float(att["stop_ms"]),
                            link=_link(att["link"]))

    return RunResult(scenario, params or {}, sim, server, devices, gateways, attacker, ids)


def run(scenario, params: dict | None = None) -> RunResult:
    """Run a single-point scenario to its horizon."""
    result = build(load_scenario(scenario), params)
    sim = result.sim
    sim.trace.record("scenario_start", name=result.scenario.name, seed=sim.seed, horizon=sim.horizon)
    for gw in result.gateways.values():
        gw.start()
    for dev in result.devices.values():
        dev.start()
    if result.attacker is not None:
        result.attacker.start()
    sim.scheduler.run(sim.horizon)
    sim.trace.record("scenario_end", events=sim.scheduler.fired)
    return result


def run_all(scenario) -> list[RunResult]:
    """Run every sweep point (a scenario without a sweep is a single point)."""
    return [run(point, params) for params, point in load_scenario(scenario).points()]
