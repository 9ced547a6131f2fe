"""Seeded discrete-event broadcast network with cost accounting.

Stands in for the extended-advertisement radio: every node shares one
broadcast domain (multiple domains are configurable), frames arrive after
a small random latency and are lost independently with a configurable
probability. Event ordering is total and deterministic: (time, priority,
sequence), with deliveries processed before timers at equal timestamps
and generation timers before attestation timers. Two runs with the same
seed and configuration produce byte-identical metrics.

Per-frame source addresses and UUIDs are randomized when enabled, which
is what the unlinkability checks observe.
"""

from __future__ import annotations

import heapq
import itertools
import json
from dataclasses import dataclass, field
from random import Random
from typing import Callable

from . import agent as agent_mod
from . import device as device_mod
from . import wire
from .inventory import ImDevice, ImDiscard, ImReceipt, Owner

# Event priorities; deliveries strictly precede timers at equal times.
_PRIO_DELIVER = 0
_PRIO_TIMER_BASE = 1  # + TimerKind value
_PRIO_ACTION = 10

RETRANSMIT_INTERVAL = 0.030
RETRANSMIT_COUNT = 10


@dataclass(frozen=True)
class LinkConfig:
    p_loss: float = 0.0
    latency_min: float = 0.001
    latency_max: float = 0.010
    randomize_addresses: bool = True
    # User-side cost of fetching and checking a manifest before a report
    # can be shown; charged to request-to-report latency, not radio time.
    manifest_fetch_delay: float = 1.3


@dataclass(frozen=True)
class Frame:
    src_addr: bytes  # 6-byte link address
    uuid: bytes  # 16-byte value
    payload: bytes
    wire_size: int


@dataclass
class NodeMetrics:
    busy_seconds: float = 0.0
    signatures: int = 0
    attestations: int = 0
    tx_bytes: int = 0
    rx_bytes: int = 0
    tx_frames: int = 0
    rx_frames: int = 0


@dataclass
class Metrics:
    horizon: float
    per_node: dict[str, NodeMetrics] = field(default_factory=dict)
    frames_dropped: int = 0
    latencies: dict[str, list[float]] = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {
            "horizon": self.horizon,
            "frames_dropped": self.frames_dropped,
            "latencies": {k: [round(v, 9) for v in vs] for k, vs in sorted(self.latencies.items())},
            "per_node": {
                name: {
                    "busy_seconds": round(m.busy_seconds, 9),
                    "signatures": m.signatures,
                    "attestations": m.attestations,
                    "tx_bytes": m.tx_bytes,
                    "rx_bytes": m.rx_bytes,
                    "tx_frames": m.tx_frames,
                    "rx_frames": m.rx_frames,
                }
                for name, m in sorted(self.per_node.items())
            },
        }
        return json.dumps(doc, sort_keys=True, indent=2)


class Node:
    """Base class: a named participant in one broadcast domain."""

    def __init__(self, name: str, domain: str = "default"):
        self.name = name
        self.domain = domain
        self.world: "World | None" = None

    def start(self, now: float) -> None:
        """Schedule initial events; called once before the run."""

    def handle_deliver(self, frame: Frame, now: float) -> None:
        pass

    def handle_timer(self, kind, scheduled: float, now: float) -> None:
        pass


class World:
    """Event queue, shared medium, and metrics for one simulation run."""

    def __init__(self, seed: int, link: LinkConfig | None = None, capture_frames: bool = False):
        self.seed = seed
        self.link = link or LinkConfig()
        self.rng = Random(f"link/{seed}")
        self.nodes: dict[str, Node] = {}
        self._queue: list = []
        self._seq = itertools.count()
        self.now = 0.0
        self.metrics = Metrics(horizon=0.0)
        self.capture_frames = capture_frames
        self.captured: list[tuple[float, str, Frame]] = []
        self._static_addr: dict[str, bytes] = {}

    # -- topology ------------------------------------------------------------

    def add_node(self, node: Node) -> Node:
        if node.name in self.nodes:
            raise ValueError(f"duplicate node name {node.name!r}")
        node.world = self
        self.nodes[node.name] = node
        self.metrics.per_node[node.name] = NodeMetrics()
        return node

    def node_rng(self, name: str) -> Random:
        """Stable per-node generator derived from the world seed."""
        return Random(f"node/{self.seed}/{name}")

    # -- scheduling ----------------------------------------------------------

    def schedule_deliver(self, target: str, frame: Frame, at: float) -> None:
        heapq.heappush(
            self._queue, (at, _PRIO_DELIVER, next(self._seq), "deliver", target, frame)
        )

    def schedule_timer(self, node: str, kind, at: float) -> None:
        prio = _PRIO_TIMER_BASE + (kind.value if hasattr(kind, "value") else 0)
        heapq.heappush(self._queue, (at, prio, next(self._seq), "timer", node, kind))

    def schedule_action(self, at: float, fn: Callable[[float], None]) -> None:
        heapq.heappush(self._queue, (at, _PRIO_ACTION, next(self._seq), "action", None, fn))

    # -- medium ---------------------------------------------------------------

    def _frame_identity(self, sender: str) -> tuple[bytes, bytes]:
        if self.link.randomize_addresses:
            return self.rng.randbytes(6), self.rng.randbytes(16)
        if sender not in self._static_addr:
            self._static_addr[sender] = Random(f"addr/{self.seed}/{sender}").randbytes(6)
        return self._static_addr[sender], bytes(16)

    def broadcast(self, sender: str, payload: bytes, now: float, wire_size: int | None = None) -> None:
        """Deliver to every other node in the sender's domain, minus losses."""
        if len(payload) > wire.MAX_PAYLOAD:
            raise wire.CapacityError(
                f"payload of {len(payload)} bytes exceeds the {wire.MAX_PAYLOAD}-byte budget"
            )
        size = wire_size if wire_size is not None else len(payload)
        src, uuid = self._frame_identity(sender)
        frame = Frame(src_addr=src, uuid=uuid, payload=payload, wire_size=size)
        sender_node = self.nodes[sender]
        m = self.metrics.per_node[sender]
        m.tx_bytes += size
        m.tx_frames += 1
        if self.capture_frames:
            self.captured.append((now, sender, frame))
        for name, node in self.nodes.items():
            if name == sender or node.domain != sender_node.domain:
                continue
            if self.link.p_loss > 0.0 and self.rng.random() < self.link.p_loss:
                self.metrics.frames_dropped += 1
                continue
            latency = self.rng.uniform(self.link.latency_min, self.link.latency_max)
            self.schedule_deliver(name, frame, now + latency)

    def retransmit(self, sender: str, payload: bytes, now: float) -> None:
        """Reliability schedule: rebroadcast every 30 ms, ten copies total."""
        self.broadcast(sender, payload, now)
        for k in range(1, RETRANSMIT_COUNT):
            at = now + k * RETRANSMIT_INTERVAL

            def _again(t: float, _payload=payload, _sender=sender) -> None:
                self.broadcast(_sender, _payload, t)

            self.schedule_action(at, _again)

    # -- run loop -------------------------------------------------------------

    def run_until(self, horizon: float) -> Metrics:
        """Process events in deterministic order up to and including horizon."""
        for node in self.nodes.values():
            node.start(self.now)
        while self._queue and self._queue[0][0] <= horizon:
            time, _prio, _seq, kind, target, detail = heapq.heappop(self._queue)
            assert time >= self.now, "event queue went backwards"
            self.now = time
            if kind == "deliver":
                node = self.nodes[target]
                m = self.metrics.per_node[target]
                m.rx_bytes += detail.wire_size
                m.rx_frames += 1
                node.handle_deliver(detail, time)
            elif kind == "timer":
                self.nodes[target].handle_timer(detail, time, time)
            else:
                detail(time)
        self.now = horizon
        self.metrics.horizon = horizon
        return self.metrics


# -- standard node wrappers ----------------------------------------------------


class DeviceNode(Node):
    """Adapts a pull/push/blend device to the event loop."""

    def __init__(self, name: str, device: device_mod.Device, domain: str = "default"):
        super().__init__(name, domain)
        self.device = device

    def start(self, now: float) -> None:
        self._apply(self.device.boot(now), now)

    def handle_deliver(self, frame: Frame, now: float) -> None:
        self._apply(self.device.on_frame(frame.payload, now), now)

    def handle_timer(self, kind, scheduled: float, now: float) -> None:
        self._apply(self.device.on_timer(kind, scheduled, now), now)

    def _apply(self, actions, now: float) -> None:
        for action in actions:
            if isinstance(action, device_mod.Transmit):
                if action.retransmit:
                    self.world.retransmit(self.name, action.payload, now)
                else:
                    self.world.broadcast(
                        self.name, action.payload, now, wire_size=action.wire_size
                    )
            elif isinstance(action, device_mod.SetTimer):
                self.world.schedule_timer(self.name, action.kind, action.at)
        self._sync_metrics()

    def _sync_metrics(self) -> None:
        m = self.world.metrics.per_node[self.name]
        c = self.device.counters
        m.busy_seconds = c.busy_seconds
        m.signatures = c.signatures
        m.attestations = c.attestations


@dataclass(frozen=True)
class ArrivalModel:
    """Request schedule for one user: periodic, poisson, or burst."""

    kind: str  # periodic | poisson | burst
    interval: float = 10.0  # periodic spacing or 1/rate for poisson
    start: float = 0.0
    count: int | None = None  # burst size, or cap on total requests

    def times(self, rng: Random, horizon: float):
        if self.kind == "periodic":
            t = self.start
            emitted = 0
            while t <= horizon and (self.count is None or emitted < self.count):
                yield t
                emitted += 1
                t += self.interval
        elif self.kind == "poisson":
            t = self.start + rng.expovariate(1.0 / self.interval)
            emitted = 0
            while t <= horizon and (self.count is None or emitted < self.count):
                yield t
                emitted += 1
                t += rng.expovariate(1.0 / self.interval)
        elif self.kind == "burst":
            for _ in range(self.count or 0):
                yield self.start
        else:
            raise ValueError(f"unknown arrival kind {self.kind!r}")


class AgentNode(Node):
    """A user: sends requests on its arrival schedule, verifies replies."""

    def __init__(
        self,
        name: str,
        user_agent: agent_mod.UserAgent,
        arrivals: ArrivalModel,
        domain: str = "default",
    ):
        super().__init__(name, domain)
        self.agent = user_agent
        self.arrivals = arrivals
        self.pending: dict[bytes, agent_mod.PendingRequest] = {}
        self.sent_nonces: list[bytes] = []
        self.reports: list[agent_mod.DeviceReport] = []
        self.discards: dict[str, int] = {}
        self.latencies: list[float] = []
        self._seen_announcements: set[bytes] = set()
        self._times = None

    def start(self, now: float) -> None:
        # Arrival times are pulled lazily so an open-ended schedule never
        # preloads the queue past the horizon.
        self._times = self.arrivals.times(self.agent.rng, float("inf"))
        self._schedule_next(now)

    def _schedule_next(self, now: float) -> None:
        t = next(self._times, None)
        if t is not None:
            self.world.schedule_action(max(t, now), self._send_request)

    def _send_request(self, now: float) -> None:
        payload, pending = self.agent.make_request(now)
        self.pending[pending.nonce] = pending
        self.sent_nonces.append(pending.nonce)
        self.world.broadcast(self.name, payload, now)
        self._schedule_next(now)

    def handle_deliver(self, frame: Frame, now: float) -> None:
        payload = frame.payload
        if payload.startswith(wire.ID_RESPONSE):
            try:
                pooled = set(wire.decode(payload).pooled_nonces)
            except wire.WireError:
                if self._scanning(now):
                    self._discard(agent_mod.DiscardReason.MALFORMED)
                return
            for nonce, pending in self.pending.items():
                if now > pending.sent_at + pending.scan_window or nonce not in pooled:
                    continue
                result = self.agent.on_response(pending, payload, now)
                if isinstance(result, agent_mod.DeviceReport):
                    self.reports.append(result)
                    self.latencies.append(
                        now - pending.sent_at + self.world.link.manifest_fetch_delay
                    )
                else:
                    self._discard(result)
                return
            # no pending request owns any pooled nonce
            if self._scanning(now):
                self._discard(agent_mod.DiscardReason.STALE_OR_REPLAY)
        elif payload.startswith(wire.ID_ANNOUNCE):
            if not self._scanning(now):
                return
            if payload in self._seen_announcements:
                return
            self._seen_announcements.add(payload)
            anchor = next(iter(self.pending.values()), None)
            pending = anchor or agent_mod.PendingRequest(bytes(12), now, self.agent.scan_window)
            result = self.agent.on_response(pending, payload, now)
            if isinstance(result, agent_mod.DeviceReport):
                self.reports.append(result)
            else:
                self._discard(result)

    def _scanning(self, now: float) -> bool:
        return any(now <= p.sent_at + p.scan_window for p in self.pending.values())

    def _discard(self, reason: agent_mod.DiscardReason) -> None:
        self.discards[reason.value] = self.discards.get(reason.value, 0) + 1

    def deduped_reports(self) -> list[agent_mod.DeviceReport]:
        return agent_mod.dedup(self.reports)


class ImDeviceNode(Node):
    """Inventory device with a serialized processing queue."""

    def __init__(
        self, name: str, device: ImDevice, t_res: float = 0.233, domain: str = "default"
    ):
        super().__init__(name, domain)
        self.device = device
        self.t_res = t_res
        self._busy_until = 0.0

    def handle_deliver(self, frame: Frame, now: float) -> None:
        response = self.device.respond(frame.payload)
        if response is None:
            return
        start = max(now, self._busy_until)
        done = start + self.t_res
        self._busy_until = done
        self.world.metrics.per_node[self.name].busy_seconds += self.t_res

        def _send(t: float, payload=response) -> None:
            self.world.broadcast(self.name, payload, t)

        self.world.schedule_action(done, _send)


class OwnerNode(Node):
    """Inventory owner issuing solicitation rounds on a fixed schedule."""

    def __init__(
        self,
        name: str,
        owner: Owner,
        round_times: list[float],
        domain: str = "default",
    ):
        super().__init__(name, domain)
        self.owner = owner
        self.round_times = round_times
        self.receipts = []
        self.rejects: dict[str, int] = {}

    def start(self, now: float) -> None:
        for t in self.round_times:
            self.world.schedule_action(t, self._solicit)

    def _solicit(self, now: float) -> None:
        self.world.broadcast(self.name, self.owner.make_request(), now)

    def handle_deliver(self, frame: Frame, now: float) -> None:
        if not frame.payload.startswith(wire.ID_IM_RESPONSE):
            return
        result = self.owner.receive(frame.payload)
        if isinstance(result, ImReceipt):
            self.receipts.append((now, result))
        else:
            self.rejects[result.value] = self.rejects.get(result.value, 0) + 1


class AdversaryNode(Node):
    """Dolev-Yao participant on the shared medium, no side channels.

    Behaviors: flood (well-formed requests with random nonces at a fixed
    rate), replay (re-emit recorded frames verbatim), forge_response and
    forge_request (structurally valid messages, random signatures).
    """

    def __init__(
        self,
        name: str,
        behavior: str,
        rng: Random,
        rate: float = 100.0,
        stop: float = float("inf"),
        record_until: float = 0.0,
        replay_at: list[float] | None = None,
        domain: str = "default",
    ):
        super().__init__(name, domain)
        self.behavior = behavior
        self.rng = rng
        self.rate = rate
        self.stop = stop
        self.record_until = record_until
        self.replay_at = replay_at or []
        self.recorded: list[bytes] = []

    def start(self, now: float) -> None:
        if self.behavior in ("flood", "forge_response", "forge_request"):
            self.world.schedule_action(now + 1.0 / self.rate, self._emit)
        if self.behavior == "replay":
            for t in self.replay_at:
                self.world.schedule_action(t, self._replay_all)

    def _emit(self, now: float) -> None:
        self.world.broadcast(self.name, self._fabricate(), now)
        nxt = now + 1.0 / self.rate
        if nxt <= self.stop:
            self.world.schedule_action(nxt, self._emit)

    def _fabricate(self) -> bytes:
        if self.behavior == "flood":
            return wire.RequestMsg(self.rng.randbytes(12)).encode()
        if self.behavior == "forge_request":
            return wire.ImRequestMsg(self.rng.randbytes(12), self.rng.randbytes(64)).encode()
        att = wire.AttReport(wire.ATT_SUCCESS, self.rng.randrange(300))
        return wire.ResponseMsg(
            self.rng.randbytes(12),
            (self.rng.randbytes(12),),
            b"ZZzzZZzzZZzzZZ",
            att,
            self.rng.randbytes(64),
        ).encode()

    def handle_deliver(self, frame: Frame, now: float) -> None:
        if self.behavior == "replay" and now <= self.record_until:
            self.recorded.append(frame.payload)

    def _replay_all(self, now: float) -> None:
        for payload in self.recorded:
            self.world.broadcast(self.name, payload, now)
