"""Scenario configuration, wiring, workloads and CSV metrics.

A scenario file is flat ``key = value`` text; ``#`` starts a comment.
See README.md for the key reference and METRICS.md for the CSV schemas.
"""
from __future__ import annotations

import csv
import io
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import lsmerkle
from .adversary import Behavior, ByzantineEdge, FaultSpec, wrap
from .client import Client, FreshnessConfig, Phase, PendingOp
from .cloud import CloudNode
from .crypto import KeyDirectory
from .edge import EdgeNode
from .model import (
    Batch,
    BlockProof,
    BlockProofMsg,
    Kind,
    LogData,
    NodeId,
    Put,
    client,
    cloud,
    edge,
)
from .simnet import ConfigError, LatencyMatrix, Network
from .wire import block_digest, signed

BASELINES = ("wedgechain", "cloud_only", "edge_baseline")


@dataclass
class ScenarioConfig:
    seed: int = 1
    baseline: str = "wedgechain"
    # topology
    edges: int = 1
    writers: int = 1
    readers: int = 0
    site_client: str = "C"
    site_edge: str = "C"
    site_cloud: str = "V"
    rtt: dict = field(default_factory=dict)  # (site, site) -> ms, overrides the preset
    jitter_pct: float = 0.0
    drop_prob: float = 0.0
    floor_ms: float = 1.0
    processing_client: float = 0.0
    processing_edge: float = 0.0
    processing_cloud: float = 0.0
    # workload
    mode: str = "log"  # log | kv
    batch_size: int = 100
    writes_per_writer: int = 10
    ops_per_request: int = 1
    window: int = 1  # outstanding (pre-Phase I) requests per writer
    value_size_bytes: int = 16
    key_range: int = 1000
    read_start_ms: float = 0.0
    reads_per_reader: int = -1  # log mode: -1 tails every block the writers produce
    read_interval_ms: float = 10.0
    read_retry_ms: float = 50.0
    max_read_attempts: int = 20
    # index
    lsm_enabled: bool = True
    thresholds: tuple = (10, 10, 100, 1000)
    page_size: int = 64
    # protocol timing
    window_ms: float = math.inf
    dispute_timeout_ms: float = 0.0  # 0: ten times the edge-cloud RTT
    max_retries: int = 3
    clock_skew_ms: float = 0.0
    gossip_interval_ms: float = 0.0
    dispute_grace_ms: float = 0.0  # 0: same as the dispute timeout
    flush_interval_ms: float = 0.0
    noop_interval_ms: float = 0.0
    noop_until_ms: float = math.inf
    certify_retry_ms: float = 0.0
    limit_ms: float = 600_000.0
    faults: dict = field(default_factory=dict)  # edge index -> FaultSpec
    record_merges: bool = False
    trace: bool = True


# -- parsing ---------------------------------------------------------------------

_SIMPLE = {
    "seed": ("seed", int),
    "baseline": ("baseline", str),
    "edges": ("edges", int),
    "clients": ("writers", int),
    "writers": ("writers", int),
    "readers": ("readers", int),
    "sites.client": ("site_client", str),
    "sites.edge": ("site_edge", str),
    "sites.cloud": ("site_cloud", str),
    "jitter_pct": ("jitter_pct", float),
    "drop_prob": ("drop_prob", float),
    "floor_ms": ("floor_ms", float),
    "processing_ms.client": ("processing_client", float),
    "processing_ms.edge": ("processing_edge", float),
    "processing_ms.cloud": ("processing_cloud", float),
    "batch_size": ("batch_size", int),
    "workload.mode": ("mode", str),
    "workload.writes_per_writer": ("writes_per_writer", int),
    "workload.ops_per_request": ("ops_per_request", int),
    "workload.window": ("window", int),
    "workload.value_size_bytes": ("value_size_bytes", int),
    "workload.key_range": ("key_range", int),
    "workload.read_start_ms": ("read_start_ms", float),
    "workload.reads_per_reader": ("reads_per_reader", int),
    "workload.read_interval_ms": ("read_interval_ms", float),
    "workload.read_retry_ms": ("read_retry_ms", float),
    "workload.max_read_attempts": ("max_read_attempts", int),
    "lsm.enabled": ("lsm_enabled", "bool"),
    "lsm.thresholds": ("thresholds", "ints"),
    "lsm.page_size": ("page_size", int),
    "freshness.window_ms": ("window_ms", float),
    "client.dispute_timeout_ms": ("dispute_timeout_ms", float),
    "client.max_retries": ("max_retries", int),
    "client.clock_skew_ms": ("clock_skew_ms", float),
    "gossip_interval_ms": ("gossip_interval_ms", float),
    "cloud.dispute_grace_ms": ("dispute_grace_ms", float),
    "edge.flush_interval_ms": ("flush_interval_ms", float),
    "edge.noop_interval_ms": ("noop_interval_ms", float),
    "edge.noop_until_ms": ("noop_until_ms", float),
    "edge.certify_retry_ms": ("certify_retry_ms", float),
    "limit_ms": ("limit_ms", float),
    "trace": ("trace", "bool"),
}


def _convert(kind, text: str, key: str):
    try:
        if kind == "bool":
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no", "on", "off"):
                raise ValueError(text)
            return low in ("true", "1", "yes", "on")
        if kind == "ints":
            return tuple(int(x) for x in text.replace(",", " ").split())
        return kind(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r}") from None


def parse_config(text: str) -> ScenarioConfig:
    values: dict = {}
    rtt: dict = {}
    ops_total = None
    ratio = None
    faults: dict[int, dict] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in _SIMPLE:
            name, kind = _SIMPLE[key]
            values[name] = _convert(kind, value, key)
        elif key.startswith("rtt."):
            parts = key.split(".")
            if len(parts) != 3:
                raise ConfigError(f"line {lineno}: rtt keys look like rtt.C.V")
            rtt[(parts[1], parts[2])] = _convert(float, value, key)
        elif key == "workload.ops_total":
            ops_total = _convert(int, value, key)
        elif key == "workload.read_write_ratio":
            ratio = _convert(float, value, key)
        elif key.startswith("fault."):
            parts = key.split(".")
            if len(parts) != 3:
                raise ConfigError(f"line {lineno}: fault keys look like fault.edge0.behavior")
            try:
                idx = NodeId.parse(parts[1])
            except ValueError:
                raise ConfigError(f"line {lineno}: {parts[1]!r} is not an edge id") from None
            if idx.kind != Kind.EDGE:
                raise ConfigError(f"line {lineno}: faults apply to edges only")
            faults.setdefault(idx.id, {})[parts[2]] = value
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    cfg = ScenarioConfig(**values, rtt=rtt, faults={i: _fault(f) for i, f in faults.items()})
    if ops_total is not None:
        per = max(1, cfg.writers * cfg.ops_per_request)
        cfg.writes_per_writer = -(-ops_total // per)
    if ratio is not None:
        total_writes = cfg.writers * cfg.writes_per_writer
        cfg.reads_per_reader = round(ratio * total_writes / cfg.readers) if cfg.readers else 0
    validate(cfg)
    return cfg


def _fault(fields: dict) -> FaultSpec:
    try:
        behavior = Behavior(fields.get("behavior", "none"))
    except ValueError:
        names = ", ".join(b.value for b in Behavior)
        raise ConfigError(f"unknown fault behavior {fields.get('behavior')!r} (expected one of {names})") from None
    kw: dict = {"behavior": behavior}
    for k, v in fields.items():
        if k == "behavior":
            continue
        if k == "bid":
            kw["bid"] = _convert(int, v, "fault.bid")
        elif k == "targets":
            kw["targets"] = tuple(NodeId.parse(t.strip()) for t in v.split(",") if t.strip())
        elif k == "client":
            kw["client"] = NodeId.parse(v)
        elif k == "seq":
            kw["seq"] = _convert(int, v, "fault.seq")
        elif k == "age_ms":
            kw["age_ms"] = _convert(float, v, "fault.age_ms")
        elif k == "after_ms":
            kw["after_ms"] = _convert(float, v, "fault.after_ms")
        else:
            raise ConfigError(f"unknown fault key {k!r}")
    return FaultSpec(**kw)


def load_config(path) -> ScenarioConfig:
    return parse_config(Path(path).read_text())


def validate(cfg: ScenarioConfig) -> None:
    if cfg.baseline not in BASELINES:
        raise ConfigError(f"baseline must be one of {', '.join(BASELINES)}")
    if cfg.mode not in ("log", "kv"):
        raise ConfigError("workload.mode must be log or kv")
    for name in ("edges", "batch_size", "ops_per_request", "window", "page_size", "key_range"):
        if getattr(cfg, name) < 1:
            raise ConfigError(f"{name} must be positive")
    for name in ("writers", "readers", "writes_per_writer", "value_size_bytes"):
        if getattr(cfg, name) < 0:
            raise ConfigError(f"{name} must not be negative")
    if len(cfg.thresholds) < 2 or any(t < 1 for t in cfg.thresholds):
        raise ConfigError("lsm.thresholds needs at least two positive values")
    if cfg.window_ms <= 0:
        raise ConfigError("freshness.window_ms must be positive")
    if cfg.key_range > 2**64:
        raise ConfigError("workload.key_range exceeds the 64-bit key space")
    if any(i >= cfg.edges for i in cfg.faults):
        raise ConfigError("fault configured for an edge that does not exist")
    if cfg.baseline == "cloud_only" and cfg.mode == "kv" and cfg.readers:
        raise ConfigError("cloud_only has no authenticated index; use log mode or no readers")
    if cfg.baseline != "wedgechain" and cfg.faults:
        raise ConfigError("faults only apply to the wedgechain wiring")
    per_edge = -(-cfg.writers // cfg.edges)
    if cfg.writers and not cfg.flush_interval_ms and per_edge * cfg.window * cfg.ops_per_request < cfg.batch_size:
        raise ConfigError(
            "writers can never fill a block: raise workload.window or ops_per_request, or set edge.flush_interval_ms"
        )
    _placement_and_latency(cfg)  # surfaces missing RTTs before anything runs


# -- wiring --------------------------------------------------------------------------


def _placement_and_latency(cfg: ScenarioConfig):
    placement = {cloud(): cfg.site_cloud}
    for i in range(cfg.edges):
        placement[edge(i)] = cfg.site_edge
    for i in range(cfg.writers + cfg.readers):
        placement[client(i)] = cfg.site_client
    lat = LatencyMatrix.preset(placement, cfg.rtt, cfg.jitter_pct)
    # resolve every pair that will talk so bad configs fail before the run
    sites = {cfg.site_client, cfg.site_edge, cfg.site_cloud}
    for a in sites:
        for b in sites:
            if a != b and frozenset((a, b)) not in lat.rtt_ms:
                raise ConfigError(f"no RTT configured between sites {a} and {b} (add rtt.{a}.{b} = ...)")
    return placement, lat


class CloudOnlyServer(EdgeNode):
    """The trusted cloud acting as the log server itself: one-phase commit."""

    def seal_block(self, now):
        block, out = super().seal_block(now)
        if block is None:
            return None, []
        proof = signed(BlockProof(self.me, block.bid, block_digest(block)), self.key)
        msg = BlockProofMsg(proof)
        self.proofs[block.bid] = msg
        self.pending_certify.pop(block.bid, None)
        out = [(dst, m) for dst, m in out if dst != self.me]
        out.extend((c, msg) for c in block.contributors() if c != self.me)
        return block, out


@dataclass
class Scenario:
    cfg: ScenarioConfig
    net: Network
    cloud: Optional[CloudNode]
    edges: dict[NodeId, object]
    clients: dict[NodeId, Client]
    writers: list[NodeId]
    readers: list[NodeId]

    def edge_node(self, i: int = 0) -> EdgeNode:
        e = self.edges[edge(i)] if edge(i) in self.edges else self.edges[cloud()]
        return e.inner if isinstance(e, ByzantineEdge) else e


def build(cfg: ScenarioConfig) -> Scenario:
    validate(cfg)
    placement, lat = _placement_and_latency(cfg)
    net = Network(
        lat,
        seed=cfg.seed,
        processing_ms={Kind.CLIENT: cfg.processing_client, Kind.EDGE: cfg.processing_edge, Kind.CLOUD: cfg.processing_cloud},
        floor_ms=cfg.floor_ms,
        drop_prob=cfg.drop_prob,
        trace=cfg.trace,
    )
    directory = KeyDirectory(placement)
    writers = [client(i) for i in range(cfg.writers)]
    readers = [client(cfg.writers + i) for i in range(cfg.readers)]
    edge_ids = [edge(i) for i in range(cfg.edges)]
    home = {c: edge_ids[i % cfg.edges] for i, c in enumerate(writers + readers)}

    edge_cloud_rtt = lat.rtt(edge_ids[0], cloud())
    timeout = cfg.dispute_timeout_ms or 10.0 * max(edge_cloud_rtt, 2 * cfg.floor_ms)
    grace = cfg.dispute_grace_ms or timeout
    fresh = FreshnessConfig(cfg.window_ms, timeout, cfg.max_retries, cfg.clock_skew_ms)

    cloud_node = None
    edges: dict[NodeId, object] = {}
    if cfg.baseline == "cloud_only":
        server = CloudOnlyServer(
            cloud(), cloud(), directory,
            batch_size=cfg.batch_size,
            thresholds=cfg.thresholds,
            level_roots=lsmerkle.empty_roots(len(cfg.thresholds)),
            global_root=lsmerkle.GlobalRoot(lsmerkle.EMPTY_DIGEST, 0.0, -1),
            index=False,
            flush_interval_ms=cfg.flush_interval_ms,
        )
        net.add(cloud(), server)
        edges[cloud()] = server
        home = {c: cloud() for c in home}
    else:
        cloud_node = CloudNode(
            cloud(), directory,
            thresholds=cfg.thresholds,
            page_size=cfg.page_size,
            gossip_interval_ms=cfg.gossip_interval_ms,
            gossip_targets={e: [c for c in writers + readers if home[c] == e] for e in edge_ids},
            dispute_grace_ms=grace,
            record_merges=cfg.record_merges,
        )
        net.add(cloud(), cloud_node)
        for i, e in enumerate(edge_ids):
            roots, groot = cloud_node.bootstrap(e)
            node = EdgeNode(
                e, cloud(), directory,
                batch_size=cfg.batch_size,
                thresholds=cfg.thresholds,
                level_roots=roots,
                global_root=groot,
                index=cfg.lsm_enabled,
                sync_certify=cfg.baseline == "edge_baseline",
                flush_interval_ms=cfg.flush_interval_ms,
                noop_interval_ms=cfg.noop_interval_ms,
                certify_retry_ms=cfg.certify_retry_ms,
            )
            if cfg.noop_interval_ms and cfg.noop_until_ms < math.inf:
                node = _NoopCutoff(node, cfg.noop_until_ms)
            node = wrap(node, cfg.faults.get(i))
            net.add(e, node)
            edges[e] = node

    clients: dict[NodeId, Client] = {}
    for c in writers + readers:
        cl = Client(c, home[c], cloud(), directory, fresh)
        clients[c] = cl
        net.add(c, cl)
    sc = Scenario(cfg, net, cloud_node, edges, clients, writers, readers)

    total_blocks = _expected_blocks(cfg)
    for c in writers:
        drv = Writer(sc, clients[c], net.sub_rng(f"writer/{c}"))
        clients[c].on_progress = drv.on_progress
        net.start(c, drv.start(0.0))
    for c in readers:
        n = cfg.reads_per_reader
        if cfg.mode == "log":
            drv = LogReader(sc, clients[c], total_blocks if n < 0 else n)
        else:
            drv = KvReader(sc, clients[c], net.sub_rng(f"reader/{c}"), max(n, 0))
        clients[c].on_progress = drv.on_progress
        clients[c].driver = drv
        drv.wake_at = cfg.read_start_ms
        net.start(c, [])
    for node_id in list(edges) + ([cloud()] if cloud_node else []):
        net.start(node_id, [])
    return sc


def _expected_blocks(cfg: ScenarioConfig) -> int:
    per_edge_writers = -(-cfg.writers // cfg.edges)
    ops = per_edge_writers * cfg.writes_per_writer * cfg.ops_per_request
    return ops // cfg.batch_size


class _NoopCutoff:
    """Stops an edge's no-op heartbeats after a deadline so runs can quiesce."""

    def __init__(self, inner: EdgeNode, until: float):
        self.inner = inner
        self.until = until

    def __getattr__(self, name):
        return getattr(self.inner, name)

    def on_message(self, src, msg, now):
        return self.inner.on_message(src, msg, now)

    def on_timer(self, now):
        return self.inner.on_timer(now)

    def next_timer(self):
        e = self.inner
        if e.noop_interval_ms and e.last_seal + e.noop_interval_ms > self.until:
            e.noop_interval_ms = 0.0  # heartbeats over; flush and retry timers keep running
        return e.next_timer()


# -- workloads ---------------------------------------------------------------------


class Writer:
    """Closed loop: keeps ``window`` requests outstanding until each reaches Phase I."""

    def __init__(self, sc: Scenario, cl: Client, rng):
        self.sc, self.cl, self.rng = sc, cl, rng
        self.left = sc.cfg.writes_per_writer
        self.outstanding = 0
        self.released: set[int] = set()

    def _op(self):
        cfg = self.sc.cfg
        value = self.rng.randbytes(cfg.value_size_bytes)
        if cfg.mode == "kv":
            return Put(self.rng.randrange(cfg.key_range), value)
        return LogData(value)

    def _issue(self, now: float):
        out = []
        while self.left > 0 and self.outstanding < self.sc.cfg.window:
            self.left -= 1
            self.outstanding += 1
            k = self.sc.cfg.ops_per_request
            ops = [self._op() for _ in range(k)]
            req = self.cl.add_entry(ops[0] if k == 1 else Batch(tuple(ops)), now)
            out.append((self.cl.edge, req))
        return out

    def start(self, now: float):
        return self._issue(now)

    def on_progress(self, op: PendingOp, now: float):
        if op.kind == "add" and op.phase >= Phase.PHASE1 and op.op_id not in self.released:
            self.released.add(op.op_id)
            self.outstanding -= 1
            return self._issue(now)
        return []


class LogReader:
    """Tails the log: reads bid 0, 1, ... and retries unavailable blocks."""

    def __init__(self, sc: Scenario, cl: Client, total: int):
        self.sc, self.cl, self.total = sc, cl, total
        self.bid = 0
        self.attempts = 0
        self.wake_at = None

    def _read(self, now: float):
        if self.bid >= self.total:
            return []
        self.attempts += 1
        return [(self.cl.edge, self.cl.read(self.bid, now))]

    def timer(self, now: float):
        self.wake_at = None
        return self._read(now)

    def on_progress(self, op: PendingOp, now: float):
        if op.kind != "read" or op.bid != self.bid or not op.done:
            return []
        retry = op.outcome == "unavailable" and self.bid not in self.cl.disputed_bids
        if retry and self.attempts < self.sc.cfg.max_read_attempts:
            self.wake_at = now + self.sc.cfg.read_retry_ms
            return []
        self.bid += 1
        self.attempts = 0
        return self._read(now)


class KvReader:
    """Random gets, one at a time, spaced by ``read_interval_ms``."""

    def __init__(self, sc: Scenario, cl: Client, rng, count: int):
        self.sc, self.cl, self.rng, self.left = sc, cl, rng, count
        self.wake_at = None
        self.inflight = False

    def timer(self, now: float):
        self.wake_at = None
        if self.left <= 0 or self.inflight:
            return []
        self.left -= 1
        self.inflight = True
        return [(self.cl.edge, self.cl.get(self.rng.randrange(self.sc.cfg.key_range), now))]

    def on_progress(self, op: PendingOp, now: float):
        if op.kind == "get" and (op.done or op.phase == Phase.PHASE1) and self.inflight and op.outcome:
            self.inflight = False
            if self.left > 0:
                self.wake_at = now + self.sc.cfg.read_interval_ms
        return []


# -- metrics -------------------------------------------------------------------------

OPS_HEADER = ("op_id", "client", "kind", "bid", "issued_at", "phase1_at", "phase2_at", "outcome")
MESSAGES_HEADER = ("time_ms", "src", "dst", "msg_kind", "size_bytes")
VERDICTS_HEADER = ("time_ms", "edge", "reason", "disputant")
TIMELINE_HEADER = ("time_ms", "p1_count", "p2_count")
SUMMARY_HEADER = ("metric", "value")


def fmt(x) -> str:
    """Deterministic cell formatting: fixed 3-decimal floats, '' for missing."""
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.3f}"
    return str(x)


@dataclass
class Metrics:
    ops: list[tuple] = field(default_factory=list)
    messages: list[tuple] = field(default_factory=list)
    verdicts: list[tuple] = field(default_factory=list)
    timeline: list[tuple] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    truncated: bool = False

    def latencies(self, phase: int, kind: str = "add") -> list[float]:
        col = 5 if phase == 1 else 6
        return [r[col] - r[4] for r in self.ops if r[2] == kind and r[col] is not None]

    def final_counts(self) -> tuple[int, int]:
        if not self.timeline:
            return 0, 0
        return self.timeline[-1][1], self.timeline[-1][2]


def _percentile(xs: list[float], q: float) -> Optional[float]:
    if not xs:
        return None
    if len(xs) == 1:
        return float(xs[0])
    return statistics.quantiles(sorted(xs), n=100, method="inclusive")[int(q) - 1]


def block_commit_times(sc: Scenario) -> dict[tuple[NodeId, int], tuple[Optional[float], Optional[float]]]:
    """Per block with client writes: first Phase I and first Phase II observation."""
    times: dict = {}
    for cl in sc.clients.values():
        for op in cl.ops:
            if op.kind != "add" or op.bid is None or op.phase1_at is None:
                continue
            key = (cl.edge, op.bid)
            p1, p2 = times.get(key, (None, None))
            p1 = op.phase1_at if p1 is None else min(p1, op.phase1_at)
            if op.phase2_at is not None:
                p2 = op.phase2_at if p2 is None else min(p2, op.phase2_at)
            times[key] = (p1, p2)
    return times


def collect(sc: Scenario) -> Metrics:
    m = Metrics(truncated=sc.net.truncated)
    for c in sorted(sc.clients):
        cl = sc.clients[c]
        for op in cl.ops:
            outcome = op.outcome or op.phase.name.lower()
            m.ops.append((f"{c}:{op.op_id}", str(c), op.kind, op.bid, op.issued_at, op.phase1_at, op.phase2_at, outcome))
    m.messages = [(r.time, str(r.src), str(r.dst), r.kind, r.size) for r in sc.net.trace]
    if sc.cloud is not None:
        m.verdicts = [
            (v.time, str(v.edge), v.reason.name.lower(), "" if v.disputant is None else str(v.disputant))
            for v in sc.cloud.verdicts
        ]
    events = []
    for p1, p2 in block_commit_times(sc).values():
        events.append((p1, 1, 0))
        if p2 is not None:
            events.append((p2, 0, 1))
    events.sort()
    n1 = n2 = 0
    for t, d1, d2 in events:
        n1 += d1
        n2 += d2
        if m.timeline and m.timeline[-1][0] == t:
            m.timeline[-1] = (t, n1, n2)
        else:
            m.timeline.append((t, n1, n2))
    p1, p2 = m.latencies(1), m.latencies(2)
    m.summary = {
        "ops": len(m.ops),
        "add_ops": sum(1 for r in m.ops if r[2] == "add"),
        "messages": len(m.messages),
        "verdicts": len(m.verdicts),
        "blocks_p1": m.final_counts()[0],
        "blocks_p2": m.final_counts()[1],
        "p1_latency_p50": _percentile(p1, 50),
        "p1_latency_p99": _percentile(p1, 99),
        "p2_latency_p50": _percentile(p2, 50),
        "p2_latency_p99": _percentile(p2, 99),
        "end_time_ms": sc.net.now,
        "truncated": int(sc.net.truncated),
    }
    return m


def simulate(cfg: ScenarioConfig) -> Scenario:
    sc = build(cfg)
    sc.net.run_until_quiescent(cfg.limit_ms)
    return sc


def run_scenario(cfg: ScenarioConfig) -> Metrics:
    return collect(simulate(cfg))


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(x) for x in row])
    return buf.getvalue()


def csv_files(m: Metrics) -> dict[str, str]:
    return {
        "ops.csv": _csv_text(OPS_HEADER, m.ops),
        "messages.csv": _csv_text(MESSAGES_HEADER, m.messages),
        "verdicts.csv": _csv_text(VERDICTS_HEADER, m.verdicts),
        "timeline.csv": _csv_text(TIMELINE_HEADER, m.timeline),
        "summary.csv": _csv_text(SUMMARY_HEADER, sorted(m.summary.items())),
    }


def emit_csv(m: Metrics, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, text in csv_files(m).items():
        p = out / name
        p.write_text(text)
        paths.append(p)
    return paths
