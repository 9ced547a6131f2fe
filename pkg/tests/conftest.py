"""Shared fixtures: a provisioned device, its store/trust set, and a tiny
action pump that drives a Device's timers outside the full simulator.

Also hosts the acceptance-criterion summary: tests in test_acceptance.py
record a line per criterion, printed at the end of the run whether or not
output capture is on.
"""

from __future__ import annotations

import heapq
import itertools
from random import Random

import pytest

from pulldisc import crypto, registration
from pulldisc.device import Device, SetTimer, Transmit

ACCEPTANCE_RESULTS: dict[int, str] = {}
ACCEPTANCE_EXPECTED: set[int] = set()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_EXPECTED:
        return
    write = terminalreporter.write_line
    write("")
    write("acceptance criteria:")
    for number in sorted(ACCEPTANCE_EXPECTED):
        line = ACCEPTANCE_RESULTS.get(number)
        if line is None:
            write(f"  FAIL criterion {number:2d}: did not complete")
        else:
            write(f"  {line}")


@pytest.fixture
def rng():
    return Random(1234)


@pytest.fixture
def mfr(rng):
    return crypto.generate_keypair(rng)


@pytest.fixture
def store():
    return registration.ManifestStore()


@pytest.fixture
def descriptor():
    return registration.DeviceDescriptor(
        device_type="camera",
        sensors_actuators=("video", "audio"),
        software_version="2.3",
        coarse_location="lobby",
        software_image=b"\x7fELF camera firmware v2.3" * 40,
        full_url="https://devices.example/cam/2",
    )


@pytest.fixture
def record(mfr, descriptor, store, rng):
    return registration.provision_db_device(
        mfr, descriptor, t_att=300.0, t_gen=1.0, pool_max=129, store=store, rng=rng
    )


class DevicePump:
    """Applies a device's actions and fires its timers in time order.

    A miniature, device-only event loop: transmissions are captured, timer
    requests are queued, and `run_until` pops them in (time, kind) order.
    Independent of the simulator so the state machine is tested on its own.
    """

    def __init__(self, device: Device, now: float = 0.0):
        self.device = device
        self.now = now
        self._timers = []
        self._seq = itertools.count()
        self.transmissions: list[tuple[float, bytes, bool]] = []
        self.apply(device.boot(now))

    def apply(self, actions) -> None:
        for action in actions:
            if isinstance(action, Transmit):
                self.transmissions.append((self.now, action.payload, action.retransmit))
            elif isinstance(action, SetTimer):
                heapq.heappush(self._timers, (action.at, action.kind.value, next(self._seq), action.kind))

    def frame(self, payload: bytes, at: float | None = None) -> None:
        if at is not None:
            self.now = at
        self.apply(self.device.on_frame(payload, self.now))

    def run_until(self, horizon: float) -> None:
        while self._timers and self._timers[0][0] <= horizon:
            at, _, _, kind = heapq.heappop(self._timers)
            self.now = max(self.now, at)
            self.apply(self.device.on_timer(kind, at, self.now))
        self.now = max(self.now, horizon)

    def step_timer(self) -> None:
        at, _, _, kind = heapq.heappop(self._timers)
        self.now = max(self.now, at)
        self.apply(self.device.on_timer(kind, at, self.now))

    @property
    def payloads(self) -> list[bytes]:
        return [p for _, p, _ in self.transmissions]


@pytest.fixture
def pump_factory():
    return DevicePump
