"""Simulator behavior: delivery, loss, ordering, determinism, adversaries."""

import math
from random import Random

import pytest

from pulldisc import scenario, simnet, wire
from pulldisc.agent import DiscardReason


class Sink(simnet.Node):
    def __init__(self, name):
        super().__init__(name)
        self.received = []

    def handle_deliver(self, frame, now):
        self.received.append((now, frame))


def test_broadcast_reaches_every_other_node():
    world = simnet.World(seed=1)
    a, b, c = (world.add_node(Sink(n)) for n in "abc")
    world.broadcast("a", b"DP-REQ" + bytes(12), 0.0)
    world.run_until(1.0)
    assert len(b.received) == 1 and len(c.received) == 1
    assert a.received == []


def test_total_loss_delivers_nothing():
    world = simnet.World(seed=1, link=simnet.LinkConfig(p_loss=1.0))
    world.add_node(Sink("a"))
    sink = world.add_node(Sink("b"))
    world.broadcast("a", b"x", 0.0)
    world.run_until(1.0)
    assert sink.received == []
    assert world.metrics.frames_dropped == 1


def test_loss_rate_within_binomial_band():
    """10^4 frames at 10 % loss: deliveries within 3 sigma of 9000."""
    world = simnet.World(seed=7, link=simnet.LinkConfig(p_loss=0.1))
    world.add_node(Sink("tx"))
    sink = world.add_node(Sink("rx"))
    for i in range(10_000):
        world.broadcast("tx", b"y", float(i))
    world.run_until(20_000.0)
    sigma = math.sqrt(10_000 * 0.1 * 0.9)
    assert abs(len(sink.received) - 9000) <= 3 * sigma


def test_latency_band_and_causality():
    world = simnet.World(seed=3)
    world.add_node(Sink("tx"))
    sink = world.add_node(Sink("rx"))
    for i in range(100):
        world.broadcast("tx", b"z", float(i))
    world.run_until(200.0)
    for sent, (received_at, _) in zip(range(100), sorted(sink.received)):
        assert 0.001 <= received_at - sent <= 0.010


def test_payload_over_budget_rejected():
    world = simnet.World(seed=4)
    world.add_node(Sink("a"))
    with pytest.raises(wire.CapacityError):
        world.broadcast("a", bytes(1651), 0.0)


def test_retransmit_schedule_and_byte_accounting():
    world = simnet.World(seed=5)
    world.add_node(Sink("dev"))
    sink = world.add_node(Sink("usr"))
    payload = bytes(114)
    world.retransmit("dev", payload, 1.0)
    world.run_until(2.0)
    assert len(sink.received) == 10
    times = sorted(t for t, _ in sink.received)
    for k in range(10):
        assert times[k] == pytest.approx(1.0 + 0.030 * k, abs=0.010)
    assert world.metrics.per_node["dev"].tx_bytes == 10 * 114


def test_address_randomization_per_frame():
    world = simnet.World(seed=6)
    world.add_node(Sink("dev"))
    sink = world.add_node(Sink("usr"))
    for i in range(50):
        world.broadcast("dev", b"q", float(i))
    world.run_until(100.0)
    addrs = {f.src_addr for _, f in sink.received}
    uuids = {f.uuid for _, f in sink.received}
    assert len(addrs) == 50 and len(uuids) == 50


def test_static_addresses_when_randomization_off():
    world = simnet.World(seed=6, link=simnet.LinkConfig(randomize_addresses=False))
    world.add_node(Sink("dev"))
    sink = world.add_node(Sink("usr"))
    for i in range(5):
        world.broadcast("dev", b"q", float(i))
    world.run_until(100.0)
    assert len({f.src_addr for _, f in sink.received}) == 1


def _hotel_config(**overrides):
    doc = {
        "seed": 99,
        "horizon": 120.0,
        "mode": "db",
        "devices": [{"name": "dev0", "t_gen": 1.0, "t_att": 300.0}],
        "users": [
            {"name": "user0", "arrival": {"kind": "periodic", "interval": 20.0, "start": 3.0}}
        ],
    }
    doc.update(overrides)
    return scenario.ScenarioConfig.from_dict(doc)


def test_determinism_byte_identical_metrics():
    run1 = scenario.run_scenario(_hotel_config())[1]
    run2 = scenario.run_scenario(_hotel_config())[1]
    assert run1.metrics.to_json() == run2.metrics.to_json()
    assert run1.to_json() == run2.to_json()


def test_seed_changes_change_the_run():
    run1 = scenario.run_scenario(_hotel_config())[1]
    run2 = scenario.run_scenario(_hotel_config(seed=100))[1]
    assert run1.metrics.to_json() != run2.metrics.to_json()


def test_attestation_count_one_hour():
    config = _hotel_config(horizon=3600.0, users=[])
    built, report = scenario.run_scenario(config)
    assert report.metrics.per_node["dev0"].attestations == 12


def test_conservation_lossless_single_domain():
    config = _hotel_config()
    built, report = scenario.run_scenario(config)
    metrics = report.metrics
    total_tx_frames = sum(m.tx_frames for m in metrics.per_node.values())
    total_rx_frames = sum(m.rx_frames for m in metrics.per_node.values())
    assert total_rx_frames == total_tx_frames * (len(metrics.per_node) - 1)
    assert metrics.frames_dropped == 0


def test_agent_receives_and_dedups():
    built, report = scenario.run_scenario(_hotel_config())
    node = built.agent_nodes[0]
    assert len(node.reports) == 6 * 10  # 6 rounds, 10 retransmissions each
    assert len(node.deduped_reports()) == 6
    assert node.discards == {}
    assert all(lat >= 1.0 for lat in node.latencies)  # response delay floor


def test_flood_adversary_bounded_response_rate():
    config = _hotel_config(
        horizon=30.0,
        users=[],
        adversaries=[{"name": "adv", "behavior": "flood", "rate": 500.0, "stop": 30.0}],
    )
    built, report = scenario.run_scenario(config)
    dev = built.device_nodes[0].device
    # pooling bound: ceil(arrived / pool_max) + 1
    assert dev.counters.responses <= math.ceil(500 * 30 / 129) + 1
    assert dev.counters.responses > 0


def test_replay_adversary_classified_stale():
    config = _hotel_config(
        horizon=120.0,
        users=[
            {"name": "user0", "arrival": {"kind": "periodic", "interval": 20.0, "start": 3.0, "count": 3}}
        ],
        adversaries=[
            {
                "name": "adv",
                "behavior": "replay",
                "record_until": 30.0,
                "replay_at": [50.0, 51.0],
            }
        ],
    )
    built, report = scenario.run_scenario(config)
    node = built.agent_nodes[0]
    # requests at 3, 23, 43: the third scan window is open when replays land
    assert node.discards.get("stale-or-replay", 0) > 0
    assert all(r.verified for r in node.reports)


def test_forged_responses_rejected_by_signature():
    config = _hotel_config(
        horizon=40.0,
        adversaries=[
            {"name": "adv", "behavior": "forge_response", "rate": 5.0, "stop": 40.0}
        ],
    )
    built, report = scenario.run_scenario(config)
    node = built.agent_nodes[0]
    reject_kinds = set(node.discards)
    assert reject_kinds <= {"manifest-unavailable", "signature-invalid", "stale-or-replay"}
    assert node.discards  # forged frames landed inside scan windows
    assert all(r.verified for r in node.reports)


def test_unknown_scenario_keys_rejected():
    with pytest.raises(scenario.ConfigError):
        scenario.ScenarioConfig.from_dict({"seed": 1, "horizon": 10.0, "typo": True})
    with pytest.raises(scenario.ConfigError):
        scenario.ScenarioConfig.from_dict({"horizon": 10.0})  # seed is mandatory
    with pytest.raises(scenario.ConfigError):
        scenario.ScenarioConfig.from_dict(
            {"seed": 1, "horizon": 10.0, "devices": [{"name": "d", "nope": 1}]}
        )


def test_capture_frames_record_payloads():
    built, report = scenario.run_scenario(_hotel_config(horizon=30.0), capture_frames=True)
    kinds = {bytes(f.payload[:6]) for _, _, f in built.world.captured}
    assert wire.ID_REQUEST in kinds and wire.ID_RESPONSE in kinds


def test_latency_includes_modeled_fetch_delay():
    built, report = scenario.run_scenario(_hotel_config(link={"manifest_fetch_delay": 1.3}))
    node = built.agent_nodes[0]
    # response delay floor (t_gen = 1.0) plus the modeled fetch cost
    assert all(lat >= 2.3 for lat in node.latencies)
    assert report.metrics.latencies["user0"] == node.latencies


def test_broadcast_domains_partition_the_medium():
    config = _hotel_config(
        devices=[
            {"name": "near", "t_gen": 1.0, "domain": "default"},
            {"name": "far", "t_gen": 1.0, "domain": "other-floor"},
        ]
    )
    built, report = scenario.run_scenario(config)
    assert report.metrics.per_node["near"].signatures > 0
    assert report.metrics.per_node["far"].signatures == 0  # out of range
    assert report.metrics.per_node["far"].rx_frames == 0
