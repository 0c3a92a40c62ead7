import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gwsim.attacks.jammer import Jammer, JammerConfig, dev_addrs, plan_burst, record_done
from gwsim.mac import DevAddr, build_uplink, NwkSKey, serialize_frame
from gwsim.radio import (DEFAULT_JAM_SUCCESS, ChannelModel, Coverage, Ether, JamBurst, RadioError, RadioFrame,
                         airtime_model, resolve_reception)
from gwsim.simctl.scheduler import Scheduler, Trace

CH = 868.1
ADDR = DevAddr.parse("26011BDA")
UPLINK = serialize_frame(build_uplink(NwkSKey(bytes(16)), ADDR, 1, b"abcde"))


def frame(source="dev", start=0.0, sf=7, payload=UPLINK, channel=CH, downlink=False):
    return RadioFrame(payload, sf, channel, source, start, airtime_model(sf, len(payload)), downlink)


def make_ether(pairs, model=None, seed=0):
    sched = Scheduler(seed)
    trace = Trace(sched)
    model = model or ChannelModel(coverage=Coverage(pairs))
    ether = Ether(sched, model, seed=seed, trace=trace)
    got = {}

    def listen(node, downlink=False):
        got[node] = []
        ether.attach(node, got[node].append, hears_downlink=downlink)

    return SimpleNamespace(scheduler=sched, trace=trace, ether=ether, got=got, listen=listen)


def test_airtime_examples():
    assert airtime_model(7, 37) == 40.0
    assert airtime_model(8, 37) == 80.0
    assert airtime_model(12, 37) == 1280.0
    with pytest.raises(RadioError):
        airtime_model(6, 37)
    with pytest.raises(RadioError):
        airtime_model(13, 37)
    with pytest.raises(RadioError):
        airtime_model(7, 0)


@given(st.integers(1, 255))
def test_airtime_strictly_monotone(n):
    times = [airtime_model(sf, n) for sf in range(7, 13)]
    assert all(b == 2 * a for a, b in zip(times, times[1:]))


def test_reception_counts_follow_adjacency():
    for pairs, expected in (([("dev", "gw1")], {"gw1": 1, "gw2": 0}),
                            ([("dev", "gw1"), ("dev", "gw2")], {"gw1": 1, "gw2": 1}),
                            ([("gw1", "gw2")], {"gw1": 0, "gw2": 0})):
        s = make_ether(pairs)
        s.listen("gw1")
        s.listen("gw2")
        s.ether.transmit(frame())
        s.scheduler.run(1000)
        assert {k: len(v) for k, v in s.got.items()} == expected
    payloads = {rx.payload for rxs in s.got.values() for rx in rxs}
    assert len(payloads) <= 1


def test_two_gateways_identical_payload():
    s = make_ether([("dev", "gw1"), ("dev", "gw2")])
    s.listen("gw1")
    s.listen("gw2")
    s.ether.transmit(frame())
    s.scheduler.run(1000)
    assert s.got["gw1"][0].payload == s.got["gw2"][0].payload == UPLINK


def test_downlinks_only_reach_downlink_listeners():
    s = make_ether([("gw", "dev"), ("gw", "gw2")])
    s.listen("dev", downlink=True)
    s.listen("gw2")
    s.ether.transmit(frame(source="gw", downlink=True))
    s.scheduler.run(1000)
    assert len(s.got["dev"]) == 1 and s.got["gw2"] == []


def test_carrier_busy_half_open():
    s = make_ether([("dev", "gw")])
    f = s.ether.transmit(frame(start=100.0))
    assert s.ether.carrier_busy(CH, 100.0)
    assert s.ether.carrier_busy(CH, f.end - 1e-9)
    assert not s.ether.carrier_busy(CH, f.end)
    assert not s.ether.carrier_busy(CH, 99.999)
    assert not s.ether.carrier_busy(868.3, 120.0)


def test_same_sf_collision_corrupts_both():
    s = make_ether([("a", "gw"), ("b", "gw")])
    s.listen("gw")
    s.ether.transmit(frame("a", 0.0))
    s.ether.transmit(frame("b", 10.0))
    s.scheduler.run(1000)
    assert [rx.crc_ok for rx in s.got["gw"]] == [False, False]
    assert all(rx.cause == "collision" and rx.payload != UPLINK for rx in s.got["gw"])


def test_different_sf_coexist():
    s = make_ether([("a", "gw"), ("b", "gw")])
    s.listen("gw")
    s.ether.transmit(frame("a", 0.0, sf=7))
    s.ether.transmit(frame("b", 10.0, sf=8))
    s.scheduler.run(1000)
    assert [rx.crc_ok for rx in s.got["gw"]] == [True, True]


def test_back_to_back_frames_do_not_collide():
    s = make_ether([("a", "gw"), ("b", "gw")])
    s.listen("gw")
    f = s.ether.transmit(frame("a", 0.0))
    s.ether.transmit(frame("b", f.end))
    s.scheduler.run(1000)
    assert [rx.crc_ok for rx in s.got["gw"]] == [True, True]


def test_collision_needs_interferer_audible_at_receiver():
    s = make_ether([("a", "gw"), ("b", "gw2")])
    s.listen("gw")
    s.listen("gw2")
    s.ether.transmit(frame("a", 0.0))
    s.ether.transmit(frame("b", 5.0))
    s.scheduler.run(1000)
    assert s.got["gw"][0].crc_ok and s.got["gw2"][0].crc_ok


def test_resolve_reception_examples():
    model = ChannelModel()
    rng = np.random.default_rng(1)
    f7 = frame(sf=7)
    assert all(resolve_reception(f7, True, rng, model).crc_ok for _ in range(200))
    assert resolve_reception(frame(sf=12), False, rng, model).crc_ok
    certain = ChannelModel(jam_success={10: 1.0})
    assert not any(resolve_reception(frame(sf=10), True, rng, certain).crc_ok for _ in range(200))
    lose = ChannelModel(jam_success={10: 1.0}, crc_policy_on_jam="lose")
    assert resolve_reception(frame(sf=10), True, rng, lose) is None


def _binomial_ok(k, n, p):
    sd = math.sqrt(n * p * (1 - p))
    return abs(k - n * p) <= 3 * sd + 1e-9


@pytest.mark.parametrize("sf", range(7, 13))
def test_jam_success_monte_carlo(sf):
    model = ChannelModel()
    rng = np.random.default_rng(100 + sf)
    n = 1000
    corrupted = sum(not resolve_reception(frame(sf=sf), True, rng, model).crc_ok for _ in range(n))
    p = DEFAULT_JAM_SUCCESS[sf]
    assert _binomial_ok(corrupted, n, p)
    rate = corrupted / n
    if sf <= 8:
        assert rate < 0.05
    elif sf == 9:
        assert 0 < rate < 0.95
    else:
        assert rate > 0.95


def test_channel_model_validation():
    with pytest.raises(RadioError):
        ChannelModel(jam_success={7: 1.5})
    with pytest.raises(RadioError):
        ChannelModel(jam_success={6: 0.5})
    with pytest.raises(RadioError):
        ChannelModel(crc_policy_on_jam="erase")
    with pytest.raises(RadioError):
        Coverage([("a", "a")])


def test_coverage_symmetric():
    cov = Coverage([("a", "b"), ("c", "a")])
    assert cov.adjacent("b", "a") and cov.adjacent("a", "c") and not cov.adjacent("b", "c")
    assert cov.neighbors("a") == ["b", "c"]


def test_ether_deterministic_per_seed():
    def outcomes(seed):
        s = make_ether([("dev", "gw"), ("jam", "gw")], seed=seed)
        s.listen("gw")
        for i in range(50):
            f = s.ether.transmit(frame(start=i * 1000.0, sf=9))
            s.ether.add_burst(JamBurst("jam", CH, f.start + 5, f.end))
        s.scheduler.run(60_000)
        return [rx.crc_ok for rx in s.got["gw"]]

    assert outcomes(3) == outcomes(3)
    assert 0 < sum(outcomes(3)) < 50


def test_jam_lose_policy_erases():
    model = ChannelModel(jam_success={9: 1.0}, crc_policy_on_jam="lose",
                         coverage=Coverage([("dev", "gw"), ("jam", "gw")]))
    s = make_ether(None, model=model)
    s.listen("gw")
    f = s.ether.transmit(frame(sf=9))
    s.ether.add_burst(JamBurst("jam", CH, f.start, f.end))
    s.scheduler.run(5000)
    assert s.got["gw"] == []
    assert s.trace.of_kind("radio_rx")[0]["result"] == "lost"


# -- jammer kinds ---------------------------------------------------------------

def jam_setup(kind, sf, success=None, recorder_hears=True, **cfg):
    pairs = [("dev", "gw"), ("jam", "gw"), ("jam", "dev")]
    if recorder_hears:
        pairs.append(("dev", "rec"))
    model = ChannelModel(jam_success=success or {s: 1.0 for s in range(7, 13)}, coverage=Coverage(pairs))
    s = make_ether(None, model=model)
    s.listen("gw")
    s.listen("rec")
    sim = SimpleNamespace(scheduler=s.scheduler, trace=s.trace, ether=s.ether)
    targets = cfg.pop("targets", [ADDR])
    jc = JammerConfig(kind, dev_addrs(targets), **cfg)
    s.jammer = Jammer(sim, "jam", jc, recorder="rec" if kind == "wormhole" else None)
    s.jammer.start(until=1e9)
    return s


@pytest.mark.parametrize("sf", range(7, 13))
def test_wormhole_tail_versus_latency(sf):
    # the burst only reaches the frame when the CRC tail outlasts the trigger latency
    s = jam_setup("wormhole", sf)
    f = s.ether.transmit(frame(sf=sf))
    s.scheduler.run(10_000)
    tail = f.airtime * 2 / len(f.payload)
    expect_hit = tail > 5.0
    assert (not s.got["gw"][0].crc_ok) == expect_hit
    assert s.got["rec"][0].crc_ok  # the recorder is outside jamming range
    assert record_done(s.jammer.cfg, f) == pytest.approx(f.end - tail)


def test_wormhole_feasible_from_sf9():
    cfg = JammerConfig("wormhole", dev_addrs([ADDR]))
    feasible = {}
    for sf in range(7, 13):
        f = frame(sf=sf)
        b = plan_burst(cfg, f, "jam", "rec")
        feasible[sf] = b.start < b.end
    assert feasible == {7: False, 8: False, 9: True, 10: True, 11: True, 12: True}


def test_wormhole_needs_intact_recording():
    s = jam_setup("wormhole", 10, recorder_hears=False)
    s.ether.transmit(frame(sf=10))
    s.scheduler.run(10_000)
    assert s.got["gw"][0].crc_ok and s.got["rec"] == []


def test_constant_jamming_defeats_wormhole_recording():
    pairs = [("dev", "gw"), ("dev", "rec"), ("wjam", "gw"), ("cjam", "rec")]
    model = ChannelModel(jam_success={10: 1.0}, coverage=Coverage(pairs))
    s = make_ether(None, model=model)
    s.listen("gw")
    s.listen("rec")
    sim = SimpleNamespace(scheduler=s.scheduler, trace=s.trace, ether=s.ether)
    Jammer(sim, "wjam", JammerConfig("wormhole", dev_addrs([ADDR])), recorder="rec").start(1e9)
    Jammer(sim, "cjam", JammerConfig("constant")).start(1e9)
    s.ether.transmit(frame(sf=10))
    s.scheduler.run(10_000)
    assert not s.got["rec"][0].crc_ok
    assert s.got["gw"][0].crc_ok


def test_selective_hits_targets_only():
    other = serialize_frame(build_uplink(NwkSKey(bytes(16)), DevAddr.parse("01020304"), 1, b"abcde"))
    s = jam_setup("selective", 9)
    s.ether.transmit(frame(sf=9))
    s.ether.transmit(frame(sf=9, start=5000.0, payload=other))
    s.scheduler.run(20_000)
    assert [rx.crc_ok for rx in s.got["gw"]] == [False, True]


def test_triggered_hits_everything_heard():
    other = serialize_frame(build_uplink(NwkSKey(bytes(16)), DevAddr.parse("01020304"), 1, b"abcde"))
    s = jam_setup("triggered", 9, targets=[])
    s.ether.transmit(frame(sf=9))
    s.ether.transmit(frame(sf=9, start=5000.0, payload=other))
    s.scheduler.run(20_000)
    assert [rx.crc_ok for rx in s.got["gw"]] == [False, False]


def test_constant_jammer_stop_truncates():
    s = jam_setup("constant", 9, targets=[])
    s.scheduler.run(1000)
    s.jammer.stop()
    s.ether.transmit(frame(sf=9, start=2000.0))
    s.scheduler.run(10_000)
    assert s.got["gw"][0].crc_ok


def test_jammer_config_validation():
    with pytest.raises(ValueError):
        JammerConfig("loud")
    with pytest.raises(ValueError):
        JammerConfig("selective")
    with pytest.raises(ValueError):
        JammerConfig("triggered", trigger_latency=-1)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 5000), st.integers(7, 9)), min_size=1, max_size=6))
def test_reception_only_at_adjacent_nodes(txs):
    s = make_ether([("a", "gw"), ("b", "far")])
    s.listen("gw")
    s.listen("far")
    for t, sf in txs:
        s.ether.transmit(frame("a", t, sf))
    s.scheduler.run(100_000)
    assert len(s.got["gw"]) == len(txs) and s.got["far"] == []
    # a receiver never corrupts a frame with no same-SF overlap
    for rx in s.got["gw"]:
        clash = any(o.frame_id != rx.frame.frame_id and o.sf == rx.frame.sf
                    and o.overlaps(rx.frame.start, rx.frame.end) for o in (r.frame for r in s.got["gw"]))
        assert rx.crc_ok == (not clash)
