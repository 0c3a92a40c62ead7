import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gwsim.codec import DatagramKind, GatewayEui
from gwsim.ids import (ADDRESS_CHANGE, CORRELATED, CRC_RATE, MIXED_ORIGIN, PULL_RATE, IdsConfig, IdsEngine,
                       Observation, OutOfOrderObservation)
from gwsim.simctl import load_scenario, run

EUI = GatewayEui.parse("0016c001ff10a235")
PUSH, PULL = DatagramKind.PUSH_DATA, DatagramKind.PULL_DATA
V, A = "10.0.0.1:1700", "10.6.6.6:1700"


def push(t, src=V, stat=1, eui=EUI):
    return Observation(t, eui, src, PUSH, stat)


def pull(t, src=V, eui=EUI):
    return Observation(t, eui, src, PULL)


def feed(obs, cfg=None):
    eng = IdsEngine(cfg)
    for o in sorted(obs, key=lambda o: o.time):
        eng.observe(o)
    return eng


def kinds(eng):
    return [a.detector for a in eng.alerts]


def test_observation_stat_only_on_push():
    with pytest.raises(ValueError):
        Observation(0, EUI, V, PULL, 1)
    with pytest.raises(ValueError):
        Observation(0, EUI, V, PUSH)


def test_single_address_is_quiet():
    obs = [pull(t) for t in range(0, 600_000, 10_000)] + [push(t + 5) for t in range(0, 600_000, 5_000)]
    assert feed(obs).alerts == []


def test_address_change_once_per_new_address():
    eng = feed([pull(0), pull(10_000), pull(20_000, A), pull(30_000, A), pull(40_000)])
    assert kinds(eng) == [ADDRESS_CHANGE]
    assert eng.alerts[0].severity == "hint" and A in eng.alerts[0].evidence


def test_mixed_origin_fires_once():
    obs = [pull(0), pull(1, A)]
    for i in range(40):
        obs += [push(1000 + i * 1000, V, -1), push(1000 + i * 1000 + 1, A, 1)]
    eng = feed(obs)
    assert kinds(eng).count(MIXED_ORIGIN) == 1
    alert = next(a for a in eng.alerts if a.detector == MIXED_ORIGIN)
    assert alert.severity == "critical" and V in alert.evidence and A in alert.evidence


def test_mixed_origin_needs_both_sides():
    obs = [push(i * 1000, V, -1) for i in range(30)]
    assert MIXED_ORIGIN not in kinds(feed(obs))
    obs = [push(i * 1000, V, 1) for i in range(30)] + [push(i * 1000 + 1, A, 1) for i in range(30)]
    assert MIXED_ORIGIN not in kinds(feed(obs))


def test_mixed_origin_ignores_unchecked_stat():
    obs = [push(i * 1000, V, 0) for i in range(30)] + [push(i * 1000 + 1, A, 1) for i in range(30)]
    assert MIXED_ORIGIN not in kinds(feed(obs))


def test_pull_rate_after_warmup():
    cfg = IdsConfig()
    obs = [pull(t) for t in range(0, 1_200_000, 10_000)]
    obs += [pull(t + 3, A) for t in range(600_000, 1_200_000, 10_000 // 3)]
    eng = feed(obs, cfg)
    hits = [a for a in eng.alerts if a.detector == PULL_RATE]
    assert len(hits) == 1 and 600_000 <= hits[0].time < 700_000


def test_pull_rate_quiet_during_warmup():
    obs = [pull(t) for t in range(0, 200_000, 1_000)]
    assert PULL_RATE not in kinds(feed(obs))


def test_crc_rate_jump():
    obs = [push(t) for t in range(0, 600_000, 5_000)]
    obs += [push(t + 1, V, -1) for t in range(600_000, 900_000, 5_000)]
    obs += [push(t + 2, V, 1) for t in range(600_000, 900_000, 5_000)]
    eng = feed(obs)
    assert kinds(eng).count(CRC_RATE) == 1


def test_crc_rate_silent_with_noisy_baseline():
    rng = np.random.default_rng(3)
    obs = [push(t, V, -1 if rng.random() < 0.4 else 1) for t in range(0, 1_200_000, 2_000)]
    assert CRC_RATE not in kinds(feed(obs))


def test_correlated_verdict_once_per_episode():
    obs = [pull(t) for t in range(0, 1_200_000, 10_000)]
    obs += [pull(t + 3, A) for t in range(600_000, 1_200_000, 10_000 // 3)]
    for t in range(0, 600_000, 5_000):
        obs.append(push(t + 1))
    for t in range(600_000, 1_200_000, 5_000):
        obs += [push(t + 1, V, -1), push(t + 2, A, 1)]
    eng = feed(obs)
    k = kinds(eng)
    assert {ADDRESS_CHANGE, MIXED_ORIGIN, PULL_RATE, CRC_RATE} <= set(k)
    assert k.count(CORRELATED) == 1
    verdict = next(a for a in eng.alerts if a.detector == CORRELATED)
    assert verdict.severity == "critical"


def test_out_of_order_rejected():
    eng = IdsEngine()
    eng.observe(pull(10))
    with pytest.raises(OutOfOrderObservation):
        eng.observe(pull(5))


def test_log_lines_and_counts():
    eng = feed([pull(0), pull(1, A)])
    (line,) = eng.log_lines().splitlines()
    assert json.loads(line)["detector"] == ADDRESS_CHANGE
    assert eng.counts()[ADDRESS_CHANGE] == 1 and eng.counts()[CRC_RATE] == 0


observations = st.lists(st.tuples(st.integers(0, 50), st.sampled_from([V, A, "x:1"]), st.booleans(),
                                  st.sampled_from([1, -1, 0])), max_size=200)


def _stream(rows):
    t, out = 0.0, []
    for dt, src, is_pull, stat in rows:
        t += dt * 1000.0
        out.append(pull(t, src) if is_pull else push(t, src, stat))
    return out


@settings(max_examples=100, deadline=None)
@given(observations)
def test_detectors_deterministic(rows):
    obs = _stream(rows)
    assert feed(obs).log_lines() == feed(obs).log_lines()


@settings(max_examples=100, deadline=None)
@given(observations)
def test_at_most_one_verdict_per_episode(rows):
    eng = feed(_stream(rows), IdsConfig(warmup_ms=20_000, correlation_window_ms=1e12))
    assert kinds(eng).count(CORRELATED) <= 1


@pytest.mark.parametrize("name,expected,absent", [
    ("baseline", set(), {ADDRESS_CHANGE, MIXED_ORIGIN, PULL_RATE, CRC_RATE}),
    ("disconnect-impersonation", {ADDRESS_CHANGE}, {MIXED_ORIGIN, CRC_RATE}),
])
def test_scenario_streams(name, expected, absent):
    eng = run(load_scenario(name)).ids
    got = set(kinds(eng))
    assert expected <= got and not (absent & got)


def test_jam_scenario_stream():
    scn = load_scenario("jam-impersonation").with_overrides(route_policy="last_pull_wins")
    got = set(kinds(run(scn).ids))
    assert {MIXED_ORIGIN, CRC_RATE, PULL_RATE, CORRELATED} <= got
