import math
from collections import defaultdict

import pytest

from gwsim.attacks import (AckSpoofState, AttackError, AttackerState, DisconnectRefused, SniffError, StepOrderError,
                           disconnect_gateway, eui_from_registry, sniff_eui)
from gwsim.codec import GatewayEui, decode_datagram, encode_datagram, parse_rxpk, parse_txpk, pull_data
from gwsim.mac import DevAddr, FrameError, parse_frame
from gwsim.nodes.registry import Registry, RegistryEntry
from gwsim.simctl import load_scenario, run
from gwsim.simctl.canned import ATTACKER_ADDRESS, DEV_ADDR, VICTIM_ADDRESS, VICTIM_EUI, canned_scenario

EUI = GatewayEui.parse(VICTIM_EUI)


def scenario(name, **changes):
    doc = canned_scenario(name)
    doc.pop("sweep", None)
    for path, value in changes.items():
        node = doc
        keys = path.split("__")
        for k in keys[:-1]:
            node = node[k] if not isinstance(node, list) else node[int(k)]
        node[keys[-1]] = value
    return load_scenario(doc)


# -- identifier theft -----------------------------------------------------------

def test_sniff_eui_examples():
    assert sniff_eui([encode_datagram(pull_data(1, EUI))]) == EUI
    assert sniff_eui([b"junk", pull_data(2, EUI)]) == EUI
    with pytest.raises(SniffError):
        sniff_eui([])
    with pytest.raises(SniffError):
        sniff_eui([b"\x02\x00\x01\x01"])


def test_registry_lookup():
    reg = Registry()
    reg.register(RegistryEntry(EUI, "gw", "roof"))
    assert eui_from_registry(reg.export_json(), "roof") == EUI
    with pytest.raises(AttackError):
        eui_from_registry(reg.registry_export(), "cellar")


def test_protected_link_forces_registry_fallback():
    r = run(load_scenario("authenticated-link-defense"))
    steps = [(s["step"], s["ok"], s.get("method")) for s in r.attacker.state.log]
    assert ("acquire_eui", False, "sniff") in steps and ("acquire_eui", True, "registry") in steps
    assert not r.attacker.sniffing


def test_protected_link_without_registry_fails():
    r = run(scenario("authenticated-link-defense", attacker__eui_source="sniff"))
    assert r.attacker.state.stolen_eui is None and r.attacker.state.mode == "idle"
    assert r.attacker.stats["pushes"] == 0


# -- disabling ------------------------------------------------------------------

def test_disconnect_examples():
    r = run(scenario("disconnect-impersonation", horizon_ms=30_000))
    gw = r.gateways["gw1"]
    assert disconnect_gateway(gw) is True and not gw.alive
    assert disconnect_gateway(gw) is False
    pulls = gw.stats["pulls"]
    r.sim.scheduler.run(200_000)
    assert gw.stats["pulls"] == pulls


def test_disconnect_refused_for_protected_gateway():
    r = run(scenario("disconnect-impersonation", gateways__0__physically_protected=True))
    assert r.gateways["gw1"].alive
    assert r.sim.trace.of_kind("disconnect_refused")
    assert r.attacker.state.mode == "idle"
    assert r.metrics()["devices"]["dev1"]["acked_spoofed"] == 0
    with pytest.raises(DisconnectRefused):
        disconnect_gateway(r.gateways["gw1"])


# -- step ordering --------------------------------------------------------------

def test_impostor_steps_out_of_order_rejected():
    r = run(scenario("disconnect-impersonation", horizon_ms=30_000))
    att = r.attacker
    with pytest.raises(StepOrderError):
        att.pull_flood(3)
    with pytest.raises(StepOrderError):
        att.activate()
    att.state.stolen_eui = EUI
    with pytest.raises(StepOrderError):
        att.activate()  # victim still alive
    with pytest.raises(StepOrderError):
        AttackerState(mode="impostor_jam")
    with pytest.raises(ValueError):
        AckSpoofState(phase="replaying")


def test_idle_attacker_forwards_nothing():
    r = run(scenario("disconnect-impersonation", attacker__start_ms=10_000_000))
    assert r.attacker.stats["pushes"] == 0 and r.attacker.stats["pulls"] == 0
    assert all(d["address"] == VICTIM_ADDRESS for d in r.server.downlinks)


def test_disconnect_all_traffic_from_attacker_after_start():
    r = run(scenario("disconnect-impersonation", attacker__ack_spoof=None))
    after = [(t, src) for t, eui, src, _ in r.server.push_log if t > 60_000 + 100]
    assert after and all(src == ATTACKER_ADDRESS for _, src in after)
    assert all(eui == str(EUI) for _, eui, _, _ in r.server.push_log)
    late = [d for d in r.server.downlinks if d["t"] > 60_000 + 100]
    assert late and all(d["address"] == ATTACKER_ADDRESS for d in late)


# -- jamming --------------------------------------------------------------------

def test_constant_jammer_sf10_band():
    r = run(scenario("sf-sweep", devices__0__sf=10, devices__0__max_uplinks=100,
                     attacker__jammer__kind="constant", attacker__jammer__targets=[]))
    e = r.metrics()["euis"][str(EUI)]
    n, k = e["pushes"], e["corrupt"]
    assert n == 100
    assert abs(k - 97) <= 3 * math.sqrt(100 * 0.97 * 0.03)


def test_wormhole_sf10_two_copies():
    r = run(scenario("sf-sweep", devices__0__sf=10, devices__0__max_uplinks=50))
    rec = r.attacker.recordings
    assert len(rec) == 50
    frames = [parse_frame(p) for p in rec]
    assert [f.fcnt for f in frames] == list(range(50))
    # the attacker's copy is the original frame, MIC untouched
    tx = {rx["frame_id"]: bytes.fromhex(rx["payload"]) for rx in r.sim.trace.of_kind("radio_tx")}
    assert set(rec) <= set(tx.values())


def test_wormhole_sf7_ineffective():
    r = run(scenario("sf-sweep", devices__0__sf=7, devices__0__max_uplinks=50))
    assert r.metrics()["euis"][str(EUI)]["corrupt"] == 0
    assert len(r.attacker.recordings) == 50


def test_jam_scenario_copies_by_address():
    r = run(scenario("jam-impersonation", horizon_ms=900_000))
    by = r.metrics()["euis"][str(EUI)]["by_address"]
    assert by[ATTACKER_ADDRESS]["corrupt"] == 0 and by[ATTACKER_ADDRESS]["pushes"] > 0
    assert by[VICTIM_ADDRESS]["corrupt"] > 0


def _copies_per_uplink(r):
    copies = defaultdict(list)
    for rec in r.sim.trace.of_kind("datagram"):
        if rec["dg"] != "PUSH_DATA" or rec["dst"] != r.server.address:
            continue
        d = decode_datagram(bytes.fromhex(rec["raw"]))
        for pkt in parse_rxpk(d.body):
            try:
                f = parse_frame(pkt.payload())
            except FrameError:
                continue
            copies[(f.dev_addr.raw, f.fcnt)].append((rec["src"], pkt.stat))
    return copies


def test_jam_invariant_never_two_intact_copies():
    r = run(scenario("jam-impersonation", horizon_ms=900_000, attacker__ack_spoof=None,
                     channel={"jam_success": {"10": 1.0}}))
    copies = _copies_per_uplink(r)
    attacked = [v for v in copies.values() if any(src == ATTACKER_ADDRESS for src, _ in v)]
    assert len(attacked) > 30
    for seen in copies.values():
        assert len({src for src, stat in seen if stat == 1}) <= 1
    for seen in attacked:
        assert {stat for src, stat in seen if src == ATTACKER_ADDRESS} == {1}
        assert {stat for src, stat in seen if src == VICTIM_ADDRESS} <= {-1}


def test_jammer_stop_restores_delivery():
    start, stop = 600_000, 900_000
    r = run(scenario("jam-impersonation", horizon_ms=1_200_000, attacker__stop_ms=stop,
                     attacker__ack_spoof=None, channel={"jam_success": {"10": 1.0}}))
    dev = r.devices["dev1"]
    cycle = (1 + dev.retransmit_limit) * (dev.rx2_delay + dev.rx_window + dev.retransmit_backoff + 1000)
    victim_ok = [t for t, _, src, stat in r.server.push_log if src == VICTIM_ADDRESS and stat == 1]
    assert not any(start + 100 < t < stop for t in victim_ok)
    assert min(t for t in victim_ok if t >= stop) <= stop + cycle + dev.uplink_interval
    late = [o for o in dev.outcomes.values() if o.first_tx > stop + cycle]
    assert late and all(o.status == "acked" for o in late[:-1])
    assert all(d["address"] == VICTIM_ADDRESS for d in r.server.downlinks if d["t"] > stop + cycle)


# -- ACK spoofing ---------------------------------------------------------------

def _spoof_events(r):
    return [e["event"] for e in r.attacker.spoofs]


def test_v1_0_replay_accepted_with_inversion():
    r = run(load_scenario("disconnect-impersonation"))
    m = r.metrics()["devices"]["dev1"]
    assert r.attacker.state.ack_spoof.result == "accepted"
    assert m["acked_spoofed"] == 1 and m["inversions"] == 1
    st = r.attacker.state.ack_spoof
    withheld = r.devices["dev1"].outcomes[st.withheld_for_fcnt]
    dropped = r.devices["dev1"].outcomes[st.dropped_fcnt]
    assert withheld.status == "presumed_lost" and dropped.status == "acked"
    assert (r.server.ack_ledger[(DevAddr.parse(DEV_ADDR).raw, dropped.ack_down_fcnt)]
            == withheld.fcnt)


def test_v1_1_replay_rejected():
    r = run(load_scenario("disconnect-impersonation-v1_1"))
    m = r.metrics()["devices"]["dev1"]
    assert m["acked_spoofed"] == 0 and m["ack_verdicts"]["rejected_mic"] >= 1
    assert "replay" in _spoof_events(r)


def test_redundant_gateway_aborts_spoof():
    r = run(load_scenario("redundancy-defense"))
    assert "replay" not in _spoof_events(r) and "abort" in _spoof_events(r)
    assert r.metrics()["devices"]["dev1"]["acked_spoofed"] == 0


def test_replay_byte_identical_to_recorded_pull_resp():
    r = run(load_scenario("disconnect-impersonation"))
    to_attacker = [bytes.fromhex(d["raw"]) for d in r.sim.trace.of_kind("datagram")
                   if d["dst"] == ATTACKER_ADDRESS and d["dg"] == "PULL_RESP"]
    recorded = {parse_txpk(decode_datagram(raw).body).payload() for raw in to_attacker}
    replay = next(e for e in r.attacker.spoofs if e["event"] == "replay")
    sent = [bytes.fromhex(t["payload"]) for t in r.sim.trace.of_kind("radio_tx")
            if t["source"] == "attacker" and t["t"] >= replay["t"]]
    assert sent and sent[0] == r.attacker.state.ack_spoof.recorded_ack
    assert sent[0] in recorded


def test_withheld_downlink_still_tx_acked():
    r = run(load_scenario("disconnect-impersonation"))
    resps = [d for d in r.sim.trace.of_kind("datagram") if d["dst"] == ATTACKER_ADDRESS and d["dg"] == "PULL_RESP"]
    acks = [d for d in r.sim.trace.of_kind("datagram") if d["src"] == ATTACKER_ADDRESS and d["dg"] == "TX_ACK"]
    tokens = lambda rows: [decode_datagram(bytes.fromhex(d["raw"])).token for d in rows]
    assert tokens(resps) == tokens(acks)


def test_pull_flood_interval():
    r = run(scenario("jam-impersonation", horizon_ms=900_000))
    assert r.attacker.pull_interval == pytest.approx(r.gateways["gw1"].pull_interval / 3)
    assert r.attacker.stats["pulls"] >= 3 * r.gateways["gw1"].stats["pulls"] * 300 / 900 - 5


def test_pull_flood_factor_one_vs_dead_victim():
    r = run(scenario("disconnect-impersonation", attacker__ack_spoof=None))
    late = [d for d in r.server.downlinks if d["t"] > 60_000 + 10_000]
    assert late and all(d["address"] == ATTACKER_ADDRESS for d in late)
