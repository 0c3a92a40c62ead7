"""Scenario documents: JSON with a versioned ``schema`` field.

A document is structurally validated against ``SCENARIO_SCHEMA`` and then
checked for references (adjacency, victim, jammer) and value ranges.  Missing
optional fields are filled with defaults, so a loaded ``Scenario`` carries a
complete, self-describing document.
"""

from __future__ import annotations

import copy
import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from ..codec import GatewayEui
from ..mac import DevAddr, MicMode
from ..nodes.server import ROUTE_POLICIES
from ..radio import SF_RANGE

SCHEMA_ID = "gwsim.scenario/1"
SWEEP_AXES = ("sf", "route_policy", "pull_flood_factor", "mic_mode", "seed")


class ScenarioError(ValueError):
    pass


_link = {
    "type": "object",
    "properties": {
        "eavesdroppable": {"type": "boolean"},
        "authenticated": {"type": "boolean"},
        "latency_ms": {"type": "number", "minimum": 0},
    },
    "additionalProperties": False,
}

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["schema", "devices", "gateways"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": SCHEMA_ID},
        "name": {"type": "string"},
        "description": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "horizon_ms": {"type": "number", "exclusiveMinimum": 0},
        "mic_mode": {"enum": [m.value for m in MicMode]},
        "route_policy": {"enum": list(ROUTE_POLICIES)},
        "server": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "address": {"type": "string"},
                "require_registration": {"type": "boolean"},
                "require_authenticated_link": {"type": "boolean"},
                "dedup_window_ms": {"type": "number", "minimum": 0},
                "most_frequent_window_ms": {"type": "number", "exclusiveMinimum": 0},
                "ids": {"type": "object"},
            },
        },
        "channel": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "jam_success": {"type": "object", "additionalProperties": {"type": "number"}},
                "crc_policy_on_jam": {"enum": ["corrupt", "lose"]},
            },
        },
        "devices": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "dev_addr"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "dev_addr": {"type": "string"},
                    "sf": {"type": "integer"},
                    "channel": {"type": "number"},
                    "confirmed": {"type": "boolean"},
                    "uplink_interval_ms": {"type": "number", "exclusiveMinimum": 0},
                    "retransmit_limit": {"type": "integer", "minimum": 0},
                    "payload_len": {"type": "integer", "minimum": 0, "maximum": 222},
                    "max_uplinks": {"type": ["integer", "null"], "minimum": 0},
                    "start_offset_ms": {"type": ["number", "null"], "minimum": 0},
                    "mic_mode": {"enum": [m.value for m in MicMode]},
                },
            },
        },
        "gateways": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "eui", "address"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "eui": {"type": "string"},
                    "address": {"type": "string"},
                    "pull_interval_ms": {"type": "number", "exclusiveMinimum": 0},
                    "pull_mode": {"enum": ["periodic", "poisson"]},
                    "crc_forward_policy": {"enum": ["forward_with_stat", "drop"]},
                    "physically_protected": {"type": "boolean"},
                    "registered": {"type": "boolean"},
                    "location": {"type": "string"},
                    "description": {"type": "string"},
                    "link": _link,
                },
            },
        },
        "attacker": {
            "type": ["object", "null"],
            "required": ["victim"],
            "additionalProperties": False,
            "properties": {
                "id": {"type": "string"},
                "address": {"type": "string"},
                "victim": {"type": "string"},
                "victim_location": {"type": "string"},
                "eui_source": {"enum": ["sniff", "registry", "sniff_or_registry"]},
                "disable": {"enum": ["disconnect", "jam", "none"]},
                "impostor": {"type": "boolean"},
                "pull_flood_factor": {"type": "number", "minimum": 1},
                "start_ms": {"type": "number", "minimum": 0},
                "stop_ms": {"type": ["number", "null"], "minimum": 0},
                "link": _link,
                "jammer": {
                    "type": ["object", "null"],
                    "required": ["kind"],
                    "additionalProperties": False,
                    "properties": {
                        "id": {"type": "string"},
                        "kind": {"enum": ["constant", "triggered", "selective", "wormhole"]},
                        "targets": {"type": "array", "items": {"type": "string"}},
                        "trigger_latency_ms": {"type": "number", "minimum": 0},
                        "header_fraction": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                        "crc_bytes": {"type": "integer", "minimum": 0},
                        "channel": {"type": "number"},
                    },
                },
                "ack_spoof": {
                    "type": ["object", "null"],
                    "required": ["target"],
                    "additionalProperties": False,
                    "properties": {
                        "target": {"type": "string"},
                        "repeat": {"type": "boolean"},
                        "expected_attempts": {"type": "integer", "minimum": 1},
                    },
                },
            },
        },
        "adjacency": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 2},
        },
        "sweep": {
            "type": "object",
            "propertyNames": {"enum": list(SWEEP_AXES)},
            "additionalProperties": {"type": "array", "minItems": 1},
        },
    },
}

DEVICE_DEFAULTS = {"sf": 7, "channel": 868.1, "confirmed": True, "uplink_interval_ms": 60_000.0,
                   "retransmit_limit": 3, "payload_len": 25, "max_uplinks": None, "start_offset_ms": None}
GATEWAY_DEFAULTS = {"pull_interval_ms": 10_000.0, "pull_mode": "periodic",
                    "crc_forward_policy": "forward_with_stat", "physically_protected": False,
                    "registered": True, "location": "", "description": "", "link": {}}
LINK_DEFAULTS = {"eavesdroppable": True, "authenticated": False, "latency_ms": 20.0}
SERVER_DEFAULTS = {"address": "ns.example:1700", "require_registration": False,
                   "require_authenticated_link": False, "dedup_window_ms": 200.0,
                   "most_frequent_window_ms": 60_000.0, "ids": {}}
ATTACKER_DEFAULTS = {"id": "attacker", "address": "198.51.100.66:1700", "victim_location": "",
                     "eui_source": "sniff", "disable": "disconnect", "impostor": True,
                     "pull_flood_factor": 1.0, "start_ms": 60_000.0, "stop_ms": None, "link": {},
                     "jammer": None, "ack_spoof": None}
JAMMER_DEFAULTS = {"id": "jammer", "targets": [], "trigger_latency_ms": 5.0, "header_fraction": 0.25,
                   "crc_bytes": 2, "channel": 868.1}
SPOOF_DEFAULTS = {"repeat": False, "expected_attempts": 4}


@dataclass
class Scenario:
    """A validated, defaults-filled scenario document."""

    doc: dict

    @property
    def name(self) -> str:
        return self.doc.get("name", "inline")

    @property
    def seed(self) -> int:
        return self.doc["seed"]

    @property
    def horizon_ms(self) -> float:
        return self.doc["horizon_ms"]

    @property
    def sweep(self) -> dict:
        return self.doc.get("sweep") or {}

    def with_overrides(self, **overrides) -> "Scenario":
        """Copy with top-level or sweep-axis overrides applied, re-validated."""
        doc = copy.deepcopy(self.doc)
        for key, value in overrides.items():
            if value is None:
                continue
            _apply_axis(doc, key, value)
            doc.get("sweep", {}).pop(key, None)
        if "sweep" in doc and not doc["sweep"]:
            del doc["sweep"]
        return load_scenario(doc)

    def points(self) -> list[tuple[dict, "Scenario"]]:
        """Expand the sweep into (parameters, single-run scenario) pairs."""
        if not self.sweep:
            return [({}, self)]
        axes = list(self.sweep)
        out = []
        for values in itertools.product(*(self.sweep[a] for a in axes)):
            params = dict(zip(axes, values))
            doc = copy.deepcopy(self.doc)
            del doc["sweep"]
            for axis, value in params.items():
                _apply_axis(doc, axis, value)
            out.append((params, load_scenario(doc)))
        return out

    def to_json(self) -> str:
        return json.dumps(self.doc, indent=2, sort_keys=True)


def _apply_axis(doc: dict, axis: str, value) -> None:
    if axis == "sf":
        for dev in doc["devices"]:
            dev["sf"] = value
    elif axis == "pull_flood_factor":
        if not doc.get("attacker"):
            raise ScenarioError("pull_flood_factor needs an attacker")
        doc["attacker"]["pull_flood_factor"] = value
    elif axis in ("route_policy", "mic_mode", "seed", "horizon_ms"):
        doc[axis] = value
    else:
        raise ScenarioError(f"unknown override {axis!r}")


def _filled(item: dict, defaults: dict) -> dict:
    out = copy.deepcopy(defaults)
    out.update(item)
    return out


def load_scenario(document) -> Scenario:
    """Parse and validate a scenario.

    ``document`` may be a dict, JSON text, a path to a JSON file, or the name
    of a canned scenario.
    """
    if isinstance(document, Scenario):
        return document
    if isinstance(document, Path) or (isinstance(document, str) and not document.lstrip().startswith("{")):
        from .canned import CANNED, canned_scenario
        if str(document) in CANNED:
            document = canned_scenario(str(document))
        else:
            try:
                document = Path(document).read_text()
            except OSError as exc:
                raise ScenarioError(f"cannot read scenario {document!s}: {exc}") from exc
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"scenario is not valid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise ScenarioError("scenario must be a JSON object")
    try:
        jsonschema.validate(document, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ScenarioError(f"{where}: {exc.message}") from exc
    return Scenario(_normalize(copy.deepcopy(document)))


def _normalize(doc: dict) -> dict:
    doc.setdefault("name", "inline")
    doc.setdefault("seed", 0)
    doc.setdefault("horizon_ms", 600_000.0)
    doc.setdefault("mic_mode", MicMode.V1_0.value)
    doc.setdefault("route_policy", "last_pull_wins")
    doc["server"] = _filled(doc.get("server", {}), SERVER_DEFAULTS)
    channel = doc.setdefault("channel", {})
    channel.setdefault("crc_policy_on_jam", "corrupt")
    doc["devices"] = [_filled(d, DEVICE_DEFAULTS) for d in doc["devices"]]
    doc["gateways"] = [_filled(g, GATEWAY_DEFAULTS) for g in doc["gateways"]]
    for g in doc["gateways"]:
        g["link"] = _filled(g["link"], LINK_DEFAULTS)
    att = doc.get("attacker")
    if att is not None:
        att = doc["attacker"] = _filled(att, ATTACKER_DEFAULTS)
        att["link"] = _filled(att["link"], LINK_DEFAULTS)
        if att["jammer"] is not None:
            att["jammer"] = _filled(att["jammer"], JAMMER_DEFAULTS)
        if att["ack_spoof"] is not None:
            att["ack_spoof"] = _filled(att["ack_spoof"], SPOOF_DEFAULTS)
    else:
        doc["attacker"] = None
    doc.setdefault("adjacency", [])
    _check(doc)
    return doc


def _check(doc: dict) -> None:
    ids = []
    for d in doc["devices"]:
        ids.append(d["id"])
        _parse(DevAddr.parse, d["dev_addr"], f"device {d['id']} dev_addr")
        if d["sf"] not in SF_RANGE:
            raise ScenarioError(f"device {d['id']}: sf {d['sf']} outside 7..12")
    euis = set()
    for g in doc["gateways"]:
        ids.append(g["id"])
        eui = _parse(GatewayEui.parse, g["eui"], f"gateway {g['id']} eui")
        if eui in euis:
            raise ScenarioError(f"gateway {g['id']}: duplicate EUI {g['eui']}")
        euis.add(eui)
    att = doc["attacker"]
    if att is not None:
        ids.append(att["id"])
        if att["victim"] not in {g["id"] for g in doc["gateways"]}:
            raise ScenarioError(f"attacker victim {att['victim']!r} is not a gateway")
        jam = att["jammer"]
        if jam is not None:
            ids.append(jam["id"])
            for t in jam["targets"]:
                _parse(DevAddr.parse, t, "jammer target")
            if jam["kind"] in ("selective", "wormhole") and not jam["targets"]:
                raise ScenarioError(f"{jam['kind']} jammer needs targets")
        if att["disable"] == "jam" and jam is None:
            raise ScenarioError("attacker disable='jam' needs a jammer")
        if att["ack_spoof"] is not None:
            _parse(DevAddr.parse, att["ack_spoof"]["target"], "ack_spoof target")
    dup = {i for i in ids if ids.count(i) > 1}
    if dup:
        raise ScenarioError(f"duplicate node ids: {sorted(dup)}")
    known = set(ids)
    for a, b in doc["adjacency"]:
        for n in (a, b):
            if n not in known:
                raise ScenarioError(f"adjacency names unknown node {n!r}")
        if a == b:
            raise ScenarioError(f"adjacency pairs {a!r} with itself")
    addresses = [g["address"] for g in doc["gateways"]] + ([att["address"]] if att else [])
    if doc["server"]["address"] in addresses or len(set(addresses)) != len(addresses):
        raise ScenarioError("network addresses must be distinct")
    for sf, p in doc["channel"].get("jam_success", {}).items():
        try:
            sf_int = int(sf)
        except ValueError:
            raise ScenarioError(f"jam_success key {sf!r} is not a spreading factor") from None
        if sf_int not in SF_RANGE:
            raise ScenarioError(f"jam_success key {sf} outside 7..12")
        if not 0.0 <= p <= 1.0:
            raise ScenarioError(f"jam_success[{sf}]={p} is not a probability")
    for axis, values in doc.get("sweep", {}).items():
        for v in values:
            probe = copy.deepcopy(doc)
            probe.pop("sweep")
            _apply_axis(probe, axis, v)
            try:
                jsonschema.validate(probe, SCENARIO_SCHEMA)
            except jsonschema.ValidationError as exc:
                raise ScenarioError(f"sweep {axis}={v!r}: {exc.message}") from exc
            if axis == "sf" and v not in SF_RANGE:
                raise ScenarioError(f"sweep sf={v} outside 7..12")


def _parse(fn, text, what):
    try:
        return fn(text)
    except ValueError as exc:
        raise ScenarioError(f"{what}: {exc}") from exc
