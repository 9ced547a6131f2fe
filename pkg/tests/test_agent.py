"""User-side verification pipeline and its typed discard reasons."""

from random import Random

import pytest

from pulldisc import crypto, registration, wire
from pulldisc.agent import DeviceReport, DiscardReason, ReportSource, UserAgent, dedup
from pulldisc.device import Device


@pytest.fixture
def world(mfr, record, store):
    agent = UserAgent((mfr.public_key,), store, Random(21))
    device = Device(record, b"\x7fELF camera firmware v2.3" * 40, Random(22))
    device.boot(0.0)
    return agent, device


def run_device_round(device, request_payload, at):
    from pulldisc.device import TimerKind, Transmit

    device.on_frame(request_payload, at)
    deadline = device.gen_deadline
    device.on_timer(TimerKind.GEN_DEADLINE, deadline, deadline)
    actions = device.on_timer(TimerKind.GEN_COMPLETE, deadline + 0.233, deadline + 0.233)
    (tx,) = [a for a in actions if isinstance(a, Transmit)]
    return tx.payload


def test_make_request_shape(world):
    agent, _ = world
    payload, pending = agent.make_request(3.0)
    assert len(payload) == 18
    assert pending.sent_at == 3.0
    payload2, pending2 = agent.make_request(4.0)
    assert pending.nonce != pending2.nonce


def test_honest_round_verifies(world):
    agent, device = world
    payload, pending = agent.make_request(5.0)
    response = run_device_round(device, payload, 5.0)
    report = agent.on_response(pending, response, 6.5)
    assert isinstance(report, DeviceReport)
    assert report.verified and report.att_result == wire.ATT_SUCCESS
    assert report.source is ReportSource.RESPONSE
    assert report.manifest.device_type == "camera"


def test_foreign_nonce_is_stale_or_replay(world):
    agent, device = world
    payload, _ = agent.make_request(5.0)
    response = run_device_round(device, payload, 5.0)
    _, fresh_pending = agent.make_request(30.0)  # nonce rotated
    assert agent.on_response(fresh_pending, response, 31.0) is DiscardReason.STALE_OR_REPLAY


def test_tamper_sweep_never_verifies(world):
    agent, device = world
    payload, pending = agent.make_request(5.0)
    response = bytearray(run_device_round(device, payload, 5.0))
    rng = Random(23)
    for _ in range(300):
        mutated = bytearray(response)
        mutated[rng.randrange(len(mutated))] ^= 1 << rng.randrange(8)
        result = agent.on_response(pending, bytes(mutated), 6.0)
        assert not isinstance(result, DeviceReport)


def test_flipped_signature_byte_is_signature_invalid(world):
    agent, device = world
    payload, pending = agent.make_request(5.0)
    response = bytearray(run_device_round(device, payload, 5.0))
    response[-1] ^= 0x01
    assert agent.on_response(pending, bytes(response), 6.0) is DiscardReason.SIGNATURE_INVALID


def test_unknown_url_is_manifest_unavailable(mfr, record, store):
    empty_store = registration.ManifestStore()
    agent = UserAgent((mfr.public_key,), empty_store, Random(24))
    device = Device(record, b"\x7fELF camera firmware v2.3" * 40, Random(25))
    device.boot(0.0)
    payload, pending = agent.make_request(5.0)
    response = run_device_round(device, payload, 5.0)
    assert agent.on_response(pending, response, 6.0) is DiscardReason.MANIFEST_UNAVAILABLE


def test_tampered_manifest_is_manifest_invalid(mfr, record, store):
    manifest_bytes, signature = store.get(record.url)
    bad_store = registration.ManifestStore()
    tampered = bytearray(manifest_bytes)
    tampered[40] ^= 0x01
    bad_store.put(record.url, bytes(tampered), signature)
    agent = UserAgent((mfr.public_key,), bad_store, Random(26))
    device = Device(record, b"\x7fELF camera firmware v2.3" * 40, Random(27))
    device.boot(0.0)
    payload, pending = agent.make_request(5.0)
    response = run_device_round(device, payload, 5.0)
    assert agent.on_response(pending, response, 6.0) is DiscardReason.MANIFEST_INVALID


def test_garbage_is_malformed(world):
    agent, _ = world
    _, pending = agent.make_request(5.0)
    assert agent.on_response(pending, b"junk", 5.1) is DiscardReason.MALFORMED
    assert agent.on_response(pending, b"XX-XXX" + bytes(96), 5.1) is DiscardReason.MALFORMED


def test_announcement_skips_nonce_check(world):
    agent, device = world
    device.mode = device.mode  # pull device still signs announcements fine
    announcement = device._generate_announcement(7.0)
    _, pending = agent.make_request(5.0)
    report = agent.on_response(pending, announcement.encode(), 7.5)
    assert isinstance(report, DeviceReport)
    assert report.source is ReportSource.ANNOUNCEMENT


def make_report(manifest, nonce, at):
    return DeviceReport(
        manifest=manifest,
        att_result=wire.ATT_SUCCESS,
        att_age=0,
        verified=True,
        received_at=at,
        source=ReportSource.RESPONSE,
        device_nonce=nonce,
    )


def test_dedup(world, store, record, mfr):
    manifest = registration.verify_manifest(*store.get(record.url), [mfr.public_key])
    same = Random(28).randbytes(12)
    other = Random(29).randbytes(12)
    reports = [make_report(manifest, same, 1.0 + 0.03 * i) for i in range(10)]
    reports.append(make_report(manifest, other, 2.0))
    collapsed = dedup(reports)
    assert len(collapsed) == 2
    kept = {r.device_nonce: r for r in collapsed}
    assert kept[same].received_at == pytest.approx(1.27)
    # distinct device nonces from the same device stay distinct reports
    assert other in kept
