"""Built-in experiments.

Shared cast: one device ``dev1`` (DevAddr 26011BDA), the legitimate gateway
``gw1`` and, where present, an attacker running a rogue forwarder plus a
jammer placed next to ``gw1`` only.
"""

from __future__ import annotations

import copy

from .scenario import SCHEMA_ID

DEV_ADDR = "26011BDA"
VICTIM_EUI = "0016c001ff10a235"
SECOND_EUI = "0016c001ff10a236"
VICTIM_ADDRESS = "203.0.113.10:1700"
SECOND_ADDRESS = "203.0.113.20:1700"
ATTACKER_ADDRESS = "198.51.100.66:1700"
VICTIM_LOCATION = "52.5200,13.4050 rooftop"


def _device(**kw) -> dict:
    dev = {"id": "dev1", "dev_addr": DEV_ADDR, "sf": 7, "uplink_interval_ms": 60_000}
    dev.update(kw)
    return dev


def _victim(**kw) -> dict:
    gw = {"id": "gw1", "eui": VICTIM_EUI, "address": VICTIM_ADDRESS, "pull_interval_ms": 10_000,
          "location": VICTIM_LOCATION, "description": "community gateway"}
    gw.update(kw)
    return gw


def _wormhole() -> dict:
    return {"id": "jammer", "kind": "wormhole", "targets": [DEV_ADDR], "trigger_latency_ms": 5.0}


def baseline() -> dict:
    return {
        "schema": SCHEMA_ID, "name": "baseline",
        "description": "one device, one gateway, no attacker",
        "seed": 1, "horizon_ms": 1_200_000,
        "devices": [_device()],
        "gateways": [_victim()],
        "adjacency": [["dev1", "gw1"]],
    }


def disconnect_impersonation(mic_mode: str = "v1_0") -> dict:
    return {
        "schema": SCHEMA_ID, "name": "disconnect-impersonation" + ("-v1_1" if mic_mode == "v1_1" else ""),
        "description": "victim unplugged, rogue forwarder under the sniffed EUI, ACK spoofing",
        "seed": 1, "horizon_ms": 300_000, "mic_mode": mic_mode,
        "devices": [_device(sf=9, uplink_interval_ms=20_000)],
        "gateways": [_victim()],
        "attacker": {"id": "attacker", "address": ATTACKER_ADDRESS, "victim": "gw1",
                     "eui_source": "sniff", "disable": "disconnect", "start_ms": 60_000,
                     "ack_spoof": {"target": DEV_ADDR}},
        "adjacency": [["dev1", "gw1"], ["dev1", "attacker"]],
    }


def jam_impersonation() -> dict:
    return {
        "schema": SCHEMA_ID, "name": "jam-impersonation",
        "description": "victim stays up but is wormhole-jammed; rogue forwarder floods PULL_DATA",
        "seed": 1, "horizon_ms": 2_400_000,
        "devices": [_device(sf=10, uplink_interval_ms=5_000)],
        "gateways": [_victim()],
        "attacker": {"id": "attacker", "address": ATTACKER_ADDRESS, "victim": "gw1",
                     "eui_source": "sniff", "disable": "jam", "start_ms": 600_000,
                     "pull_flood_factor": 3, "jammer": _wormhole(),
                     "ack_spoof": {"target": DEV_ADDR}},
        "adjacency": [["dev1", "gw1"], ["dev1", "attacker"], ["jammer", "gw1"]],
        "sweep": {"route_policy": ["last_pull_wins", "most_frequent", "sticky_first"]},
    }


def redundancy_defense() -> dict:
    doc = disconnect_impersonation()
    doc["name"] = "redundancy-defense"
    doc["description"] = "disconnect impersonation with a second legitimate gateway covering the device"
    doc["gateways"].append({"id": "gw2", "eui": SECOND_EUI, "address": SECOND_ADDRESS,
                            "pull_interval_ms": 10_000, "location": "52.5210,13.4100 tower"})
    doc["adjacency"].append(["dev1", "gw2"])
    return doc


def authenticated_link_defense() -> dict:
    doc = disconnect_impersonation()
    doc["name"] = "authenticated-link-defense"
    doc["description"] = "gateway link is authenticated and encrypted; server drops anything else"
    doc["gateways"][0]["link"] = {"eavesdroppable": False, "authenticated": True}
    doc["server"] = {"require_authenticated_link": True}
    doc["attacker"]["eui_source"] = "sniff_or_registry"
    doc["attacker"]["victim_location"] = VICTIM_LOCATION
    return doc


def sf_sweep() -> dict:
    return {
        "schema": SCHEMA_ID, "name": "sf-sweep",
        "description": "wormhole jamming of 1000 unconfirmed uplinks per spreading factor",
        "seed": 1, "horizon_ms": 2_400_000,
        "devices": [_device(confirmed=False, uplink_interval_ms=1_000, max_uplinks=1000)],
        "gateways": [_victim()],
        "attacker": {"id": "attacker", "address": ATTACKER_ADDRESS, "victim": "gw1",
                     "disable": "jam", "impostor": False, "start_ms": 0, "jammer": _wormhole()},
        "adjacency": [["dev1", "gw1"], ["dev1", "attacker"], ["jammer", "gw1"]],
        "sweep": {"sf": [7, 8, 9, 10, 11, 12]},
    }


def pull_flood_sweep() -> dict:
    doc = jam_impersonation()
    doc["name"] = "pull-flood-sweep"
    doc["description"] = "downlink route capture per route policy and PULL_DATA flood factor"
    doc["horizon_ms"] = 8_000_000
    doc["gateways"][0]["pull_mode"] = "poisson"
    doc["server"] = {"most_frequent_window_ms": 300_000}
    doc["attacker"]["ack_spoof"] = None
    doc["sweep"] = {"route_policy": ["last_pull_wins", "most_frequent", "sticky_first"],
                    "pull_flood_factor": [1, 2, 3]}
    return doc


CANNED = {
    "baseline": baseline,
    "disconnect-impersonation": disconnect_impersonation,
    "disconnect-impersonation-v1_1": lambda: disconnect_impersonation("v1_1"),
    "jam-impersonation": jam_impersonation,
    "redundancy-defense": redundancy_defense,
    "authenticated-link-defense": authenticated_link_defense,
    "sf-sweep": sf_sweep,
    "pull-flood-sweep": pull_flood_sweep,
}


def canned_scenario(name: str) -> dict:
    try:
        return copy.deepcopy(CANNED[name]())
    except KeyError:
        raise KeyError(f"no canned scenario {name!r}; choose from {sorted(CANNED)}") from None
