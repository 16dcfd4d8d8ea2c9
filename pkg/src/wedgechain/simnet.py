"""Deterministic discrete-event network.

Every node is a serial server: deliveries queue at the node, each handled
message occupies it for ``processing_ms`` of its kind, and outputs leave
when the handling finishes. Events are ordered by (time, insertion seq),
and the only randomness is one seeded RNG owned by the network.
"""
from __future__ import annotations

import heapq
import logging
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Protocol

from .model import Kind, NodeId
from .wire import message_size

log = logging.getLogger(__name__)

# Round-trip times (ms) from the reference site C to each preset site.
PRESET_RTT_FROM_C = {"C": 0.0, "O": 19.0, "V": 61.0, "I": 141.0, "M": 238.0}


class ConfigError(ValueError):
    """A scenario or network configuration that cannot be run."""


class Node(Protocol):
    def on_message(self, src: NodeId, msg, now: float) -> list: ...

    def on_timer(self, now: float) -> list: ...

    def next_timer(self) -> Optional[float]: ...


@dataclass
class LatencyMatrix:
    rtt_ms: dict[frozenset, float] = field(default_factory=dict)
    placement: dict[NodeId, str] = field(default_factory=dict)
    jitter_pct: float = 0.0

    @classmethod
    def preset(cls, placement: dict[NodeId, str], overrides: Optional[dict[tuple[str, str], float]] = None,
               jitter_pct: float = 0.0) -> "LatencyMatrix":
        rtt = {frozenset(("C", s)): v for s, v in PRESET_RTT_FROM_C.items()}
        for (a, b), v in (overrides or {}).items():
            if v < 0:
                raise ConfigError(f"negative RTT for {a}-{b}")
            rtt[frozenset((a, b))] = float(v)
        return cls(rtt, dict(placement), jitter_pct)

    def rtt(self, a: NodeId, b: NodeId) -> float:
        try:
            sa, sb = self.placement[a], self.placement[b]
        except KeyError as exc:
            raise ConfigError(f"node {exc.args[0]} is not placed on any site") from None
        if sa == sb:
            return self.rtt_ms.get(frozenset((sa,)), 0.0)
        try:
            return self.rtt_ms[frozenset((sa, sb))]
        except KeyError:
            raise ConfigError(f"no RTT configured between sites {sa} and {sb}") from None


@dataclass(frozen=True)
class TraceRow:
    time: float
    src: NodeId
    dst: NodeId
    kind: str
    size: int


class Network:
    def __init__(
        self,
        latency: LatencyMatrix,
        *,
        seed: int = 0,
        processing_ms: Optional[dict[Kind, float]] = None,
        floor_ms: float = 1.0,
        drop_prob: float = 0.0,
        trace: bool = True,
    ):
        if not 0.0 <= drop_prob < 1.0:
            raise ConfigError("drop_prob must be in [0, 1)")
        self.latency = latency
        self.rng = random.Random(seed)
        self.seed = seed
        self.processing_ms = dict(processing_ms or {})
        self.floor_ms = floor_ms
        self.drop_prob = drop_prob
        self.nodes: dict[NodeId, Node] = {}
        self.now = 0.0
        self.events: list = []
        self.seq = 0
        self.inbox: dict[NodeId, deque] = {}
        self.busy_until: dict[NodeId, float] = {}
        self.timer_at: dict[NodeId, float] = {}
        self.trace_on = trace
        self.trace: list[TraceRow] = []
        self.delivered = 0
        self.dropped = 0
        self.truncated = False

    def add(self, node_id: NodeId, node: Node) -> None:
        if node_id not in self.latency.placement:
            raise ConfigError(f"node {node_id} is not placed on any site")
        self.nodes[node_id] = node
        self.inbox[node_id] = deque()
        self.busy_until[node_id] = 0.0

    def sub_rng(self, label: str) -> random.Random:
        """Independent stream derived from the network seed (for workloads)."""
        return random.Random(f"{self.seed}/{label}")

    # -- scheduling ------------------------------------------------------------

    def _push(self, t: float, what: str, a, b=None, c=None) -> None:
        heapq.heappush(self.events, (t, self.seq, what, a, b, c))
        self.seq += 1

    def delay(self, src: NodeId, dst: NodeId) -> float:
        one_way = self.latency.rtt(src, dst) / 2.0
        j = self.latency.jitter_pct
        if j:
            one_way *= 1.0 + (j / 100.0) * self.rng.uniform(-1.0, 1.0)
        return max(self.floor_ms, one_way)

    def send(self, src: NodeId, dst: NodeId, msg, now: float) -> None:
        if dst not in self.nodes:
            raise ConfigError(f"message to unknown node {dst}")
        d = self.delay(src, dst)
        if self.trace_on:
            self.trace.append(TraceRow(now, src, dst, type(msg).__name__, message_size(msg)))
        if self.drop_prob and self.rng.random() < self.drop_prob:
            self.dropped += 1
            return
        self._push(now + d, "deliver", dst, src, msg)

    def inject(self, src: NodeId, outputs, now: float) -> None:
        for dst, msg in outputs:
            self.send(src, dst, msg, now)

    def start(self, node_id: NodeId, outputs, now: float = 0.0) -> None:
        """Send a node's initial outputs (e.g. a workload's first requests)."""
        self.inject(node_id, outputs, now)
        self._arm_timer(node_id)

    def _arm_timer(self, node_id: NodeId) -> None:
        t = self.nodes[node_id].next_timer()
        if t is None:
            self.timer_at.pop(node_id, None)
            return
        t = max(t, self.now)
        if self.timer_at.get(node_id) != t:
            self.timer_at[node_id] = t
            self._push(t, "timer", node_id)

    # -- execution -------------------------------------------------------------

    def _service(self, node_id: NodeId) -> float:
        return self.processing_ms.get(node_id.kind, 0.0)

    def _handle(self, node_id: NodeId, src: NodeId, msg) -> None:
        node = self.nodes[node_id]
        finish = self.now + self._service(node_id)
        self.busy_until[node_id] = finish
        out = node.on_message(src, msg, self.now)
        self.delivered += 1
        self.inject(node_id, out, finish)
        if self.inbox[node_id]:
            self._push(finish, "wake", node_id)
        self._arm_timer(node_id)

    def step(self) -> bool:
        if not self.events:
            return False
        t, _, what, a, b, c = heapq.heappop(self.events)
        self.now = t
        if what == "deliver":
            if self.busy_until[a] > t or self.inbox[a]:
                self.inbox[a].append((b, c))
                if len(self.inbox[a]) == 1 and self.busy_until[a] > t:
                    self._push(self.busy_until[a], "wake", a)
            else:
                self._handle(a, b, c)
        elif what == "wake":
            if self.inbox[a] and self.busy_until[a] <= t:
                src, msg = self.inbox[a].popleft()
                self._handle(a, src, msg)
        elif what == "timer":
            if self.timer_at.get(a) == t:
                del self.timer_at[a]
                out = self.nodes[a].on_timer(t)
                self.inject(a, out, t)
                self._arm_timer(a)
        return True

    def run_until_quiescent(self, limit_ms: float = float("inf")) -> list[TraceRow]:
        while self.events:
            head = self.events[0]
            if head[2] == "timer" and self.timer_at.get(head[3]) != head[0]:
                heapq.heappop(self.events)  # superseded timer
                continue
            if head[0] > limit_ms:
                self.truncated = True
                log.info("simulation stopped at limit %.1f ms with %d events pending", limit_ms, len(self.events))
                break
            self.step()
        return self.trace
