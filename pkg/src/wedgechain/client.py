"""The client state machine.

Clients sign their entries, accept the edge's signed word as a Phase I
commit, upgrade to Phase II once a matching cloud proof shows up, and
turn every contradiction into a dispute the cloud can judge.
"""
from __future__ import annotations

import enum
import heapq
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import lsmerkle
from .crypto import KeyDirectory, KeyPair, node_keypair
from .model import (
    AddRequest,
    AddResponse,
    Batch,
    Block,
    BlockProof,
    BlockProofMsg,
    DisputeKind,
    DisputeMsg,
    Entry,
    GetRequest,
    GetResponse,
    GossipMsg,
    LogData,
    NodeId,
    Op,
    Put,
    ReadRequest,
    ReadResponse,
    ReadStatus,
    Verdict,
)
from .wire import block_digest, check_sig, encode, signed

log = logging.getLogger(__name__)

Outbound = list[tuple[NodeId, object]]


class Phase(enum.IntEnum):
    SENT = 0
    PHASE1 = 1
    PHASE2 = 2
    DISPUTED = 3


class ReadOutcome(enum.Enum):
    PHASE1 = "phase1"
    PHASE2 = "phase2"
    UNAVAILABLE = "unavailable"
    REJECTED = "rejected"


class GetOutcome(enum.Enum):
    FOUND = "found"
    ABSENT = "absent"
    STALE = "stale"
    INVALID = "invalid"


@dataclass
class FreshnessConfig:
    window_ms: float = float("inf")
    dispute_timeout_ms: float = 1000.0
    max_retries: int = 3
    clock_skew_ms: float = 0.0  # this client's clock minus the cloud's

    def __post_init__(self):
        if self.window_ms <= 0 or self.dispute_timeout_ms <= 0:
            raise ValueError("freshness window and dispute timeout must be positive")


@dataclass
class PendingOp:
    op_id: int
    kind: str  # "add" | "read" | "get"
    issued_at: float
    seq: int = -1
    entry: Optional[Entry] = None
    bid: Optional[int] = None
    key: Optional[int] = None
    asof: float = 0.0
    phase: Phase = Phase.SENT
    evidence: object = None  # signed edge statement backing the current phase
    block: Optional[Block] = None
    phase1_at: Optional[float] = None
    phase2_at: Optional[float] = None
    outcome: str = ""
    value: Optional[bytes] = None
    pending_bids: set = field(default_factory=set)
    l0_blocks: dict = field(default_factory=dict)  # uncertified L0 blocks a get relied on
    retries: int = 0
    done: bool = False


class Client:
    def __init__(
        self,
        me: NodeId,
        edge: NodeId,
        cloud: NodeId,
        directory: KeyDirectory,
        freshness: Optional[FreshnessConfig] = None,
        keypair: Optional[KeyPair] = None,
    ):
        self.me = me
        self.edge = edge
        self.cloud = cloud
        self.directory = directory
        self.key = keypair or node_keypair(me)
        self.cfg = freshness or FreshnessConfig()
        self.next_seq = 0
        self.ops: list[PendingOp] = []
        self.by_seq: dict[int, PendingOp] = {}
        self.awaiting: dict[int, list[PendingOp]] = {}  # bid -> phase1 ops waiting for its proof
        self.reads: dict[tuple[int, float], list[PendingOp]] = {}
        self.gets: dict[int, list[PendingOp]] = {}
        self.proofs: dict[int, BlockProof] = {}
        self.unavailable: dict[int, ReadResponse] = {}  # possible omission evidence, by bid
        self.gossip: Optional[GossipMsg] = None
        self.disputed_bids: set[int] = set()
        self.disputes: list[DisputeMsg] = []
        self.verdicts: list[Verdict] = []
        self.accepted_gets: list[tuple[PendingOp, float]] = []  # (op, root timestamp) actually accepted
        self._deadlines: list[tuple[float, int]] = []
        self._retries: list[tuple[float, int]] = []
        self._touched: list[PendingOp] = []
        # workload hook, called once per op whose state changed during a step
        self.on_progress: Optional[Callable[[PendingOp, float], Outbound]] = None
        self.driver = None  # optional workload with ``wake_at`` and ``timer(now)``

    # -- issuing -------------------------------------------------------------

    def _new_op(self, kind: str, now: float, **kw) -> PendingOp:
        op = PendingOp(len(self.ops), kind, now, **kw)
        self.ops.append(op)
        return op

    def add_entry(self, op: Op, now: float) -> AddRequest:
        entry = signed(Entry(self.me, self.next_seq, op), self.key)
        pending = self._new_op("add", now, seq=self.next_seq, entry=entry)
        self.by_seq[self.next_seq] = pending
        self.next_seq += 1
        return AddRequest(entry)

    def log_data(self, payload: bytes, now: float) -> AddRequest:
        return self.add_entry(LogData(payload), now)

    def put(self, key: int, value: bytes, now: float) -> AddRequest:
        return self.add_entry(Put(key, value), now)

    def add_batch(self, ops, now: float) -> AddRequest:
        return self.add_entry(Batch(tuple(ops)), now)

    def read(self, bid: int, now: float) -> ReadRequest:
        op = self._new_op("read", now, bid=bid, asof=now)
        self.reads.setdefault((bid, now), []).append(op)
        return ReadRequest(bid, now)

    def get(self, key: int, now: float, _op: Optional[PendingOp] = None) -> GetRequest:
        op = _op or self._new_op("get", now, key=key)
        self.gets.setdefault(key, []).append(op)
        return GetRequest(key)

    # -- phase bookkeeping -----------------------------------------------------

    def _phase1(self, op: PendingOp, block: Block, evidence, now: float) -> list[DisputeMsg]:
        self._touched.append(op)
        op.phase = Phase.PHASE1
        op.phase1_at = now
        op.block = block
        op.bid = block.bid
        op.evidence = evidence
        proof = self.proofs.get(block.bid)
        if proof is not None:
            return self._settle(op, proof, now)
        self.awaiting.setdefault(block.bid, []).append(op)
        heapq.heappush(self._deadlines, (now + self.cfg.dispute_timeout_ms, op.op_id))
        return []

    def _settle(self, op: PendingOp, proof: BlockProof, now: float) -> list[DisputeMsg]:
        """Compare a phase1 op's evidence block with the certified digest."""
        if op.phase != Phase.PHASE1:
            return []
        self._touched.append(op)
        if proof.digest == block_digest(op.block):
            op.phase = Phase.PHASE2
            op.phase2_at = now
            op.outcome = op.outcome or "committed"
            return []
        return [self._dispute(op, now)]

    def _dispute(self, op: PendingOp, now: float) -> DisputeMsg:
        self._touched.append(op)
        op.phase = Phase.DISPUTED
        op.outcome = "disputed"
        kind = {"add": DisputeKind.ADD, "read": DisputeKind.READ, "get": DisputeKind.GET}[op.kind]
        msg = DisputeMsg(kind, self.me, encode(op.evidence), op.block)
        self.disputes.append(msg)
        return msg

    def _to_cloud(self, disputes) -> Outbound:
        return [(self.cloud, d) for d in disputes]

    # -- responses -------------------------------------------------------------

    def on_add_response(self, msg: AddResponse, now: float) -> list[DisputeMsg]:
        if msg.block.edge != self.edge or not check_sig(msg, self.directory.public(self.edge)):
            return []
        disputes = []
        for e in msg.block.entries:
            if e.client != self.me:
                continue
            op = self.by_seq.get(e.seq)
            if op is None or op.phase != Phase.SENT or e != op.entry or msg.bid != msg.block.bid:
                continue
            disputes.extend(self._phase1(op, msg.block, msg, now))
        return disputes

    def on_block_proof(self, msg: BlockProofMsg, now: float) -> list[DisputeMsg]:
        proof = msg.proof
        if proof.edge != self.edge or not check_sig(proof, self.directory.public(self.cloud)):
            return []
        self.proofs.setdefault(proof.bid, proof)
        disputes = []
        for op in self.awaiting.pop(proof.bid, []):
            if op.kind == "get":
                disputes.extend(self._get_progress(op, now))
            else:
                disputes.extend(self._settle(op, proof, now))
        return disputes

    def verify_read(self, msg: ReadResponse, now: float) -> tuple[ReadOutcome, Optional[DisputeMsg]]:
        """Classify a read response; phase1/phase2 leave the op updated."""
        ops = self.reads.get((msg.bid, msg.asof))
        if not ops or msg.edge != self.edge or not check_sig(msg, self.directory.public(self.edge)):
            return ReadOutcome.REJECTED, None
        op = ops.pop(0)
        if not ops:
            del self.reads[(msg.bid, msg.asof)]
        self._touched.append(op)
        op.evidence = msg
        if msg.status == ReadStatus.UNAVAILABLE:
            op.outcome = "unavailable"
            op.done = True
            self.unavailable[msg.bid] = msg
            return ReadOutcome.UNAVAILABLE, self._omission_check(msg.bid, now)
        block = msg.block
        if block is None or block.bid != msg.bid or block.edge != self.edge:
            op.outcome = "rejected"
            op.done = True
            return ReadOutcome.REJECTED, None
        self.unavailable.pop(msg.bid, None)
        if msg.status == ReadStatus.PHASE2:
            proof = msg.proof
            ok = (
                proof is not None
                and proof.edge == self.edge
                and proof.bid == msg.bid
                and check_sig(proof, self.directory.public(self.cloud))
            )
            if not ok or proof.digest != block_digest(block):
                op.block = block
                op.done = True
                return ReadOutcome.REJECTED, self._dispute(op, now)
            self.proofs.setdefault(proof.bid, proof)
            op.phase, op.phase1_at, op.phase2_at = Phase.PHASE2, now, now
            op.block, op.outcome, op.done = block, "committed", True
            return ReadOutcome.PHASE2, None
        disputes = self._phase1(op, block, msg, now)
        op.done = True
        if disputes:
            return ReadOutcome.REJECTED, disputes[0]
        return (ReadOutcome.PHASE2 if op.phase == Phase.PHASE2 else ReadOutcome.PHASE1), None

    def _omission_check(self, bid: int, now: float) -> Optional[DisputeMsg]:
        """Dispute a signed 'unavailable' that gossip proves was already filled."""
        g = self.gossip
        stmt = self.unavailable.get(bid)
        if g is None or stmt is None or bid in self.disputed_bids:
            return None
        if g.timestamp <= stmt.asof and bid < g.log_size:
            self.disputed_bids.add(bid)
            del self.unavailable[bid]
            msg = DisputeMsg(DisputeKind.OMISSION, self.me, encode(stmt))
            self.disputes.append(msg)
            for op in self.ops:
                if op.kind == "read" and op.evidence is stmt:
                    op.phase, op.outcome = Phase.DISPUTED, "disputed"
                    self._touched.append(op)
            return msg
        return None

    def on_gossip(self, msg: GossipMsg, now: float) -> Outbound:
        if msg.edge != self.edge or not check_sig(msg, self.directory.public(self.cloud)):
            return []
        if self.gossip is not None and msg.timestamp <= self.gossip.timestamp:
            return []
        self.gossip = msg
        out: Outbound = []
        for bid in sorted(self.unavailable):
            if bid >= msg.log_size:
                continue
            dispute = self._omission_check(bid, now)
            if dispute is not None:
                out.append((self.cloud, dispute))
            else:
                # filled after our read: ask again before accusing anyone
                del self.unavailable[bid]
                out.append((self.edge, self.read(bid, now)))
        return out

    def verify_get(self, bundle, key: int, now: float) -> tuple[GetOutcome, lsmerkle.GetResult]:
        result = lsmerkle.verify_get_proof(bundle, key, self.directory.public(self.cloud))
        if result.status == lsmerkle.GetStatus.INVALID:
            return GetOutcome.INVALID, result
        if result.timestamp < now + self.cfg.clock_skew_ms - self.cfg.window_ms:
            return GetOutcome.STALE, result
        if result.status == lsmerkle.GetStatus.FOUND:
            return GetOutcome.FOUND, result
        return GetOutcome.ABSENT, result

    def on_get_response(self, msg: GetResponse, now: float) -> Outbound:
        bundle = msg.bundle
        ops = self.gets.get(bundle.key)
        if not ops or bundle.edge != self.edge or not check_sig(msg, self.directory.public(self.edge)):
            return []
        op = ops.pop(0)
        if not ops:
            del self.gets[bundle.key]
        self._touched.append(op)
        outcome, result = self.verify_get(bundle, bundle.key, now)
        op.evidence = msg
        if outcome == GetOutcome.INVALID:
            op.done = True
            log.info("%s: invalid get proof (%s)", self.me, result.reason)
            return self._to_cloud([self._dispute(op, now)])
        if outcome == GetOutcome.STALE:
            op.retries += 1
            if op.retries > self.cfg.max_retries:
                op.outcome, op.done = "stale", True
                return []
            heapq.heappush(self._retries, (now + max(1.0, self.cfg.window_ms / 4), op.op_id))
            return []
        op.value = result.value
        op.outcome = outcome.value
        self.accepted_gets.append((op, result.timestamp))
        op.phase, op.phase1_at = Phase.PHASE1, now
        op.l0_blocks = {b.bid: b for b, p in bundle.l0 if p is None}
        op.pending_bids = set(result.pending)
        for bid in op.pending_bids:
            if bid not in self.proofs:
                self.awaiting.setdefault(bid, []).append(op)
        disputes = self._get_progress(op, now)
        if op.phase == Phase.PHASE1:
            heapq.heappush(self._deadlines, (now + self.cfg.dispute_timeout_ms, op.op_id))
        return self._to_cloud(disputes)

    def _get_progress(self, op: PendingOp, now: float) -> list[DisputeMsg]:
        """Advance a get once every pending L0 block has a matching proof."""
        if op.kind != "get" or op.phase != Phase.PHASE1:
            return []
        blocks = op.l0_blocks
        for bid in list(op.pending_bids):
            proof = self.proofs.get(bid)
            if proof is None:
                continue
            if proof.digest != block_digest(blocks[bid]):
                op.block = blocks[bid]
                return [self._dispute(op, now)]
            op.pending_bids.discard(bid)
        if not op.pending_bids:
            op.phase, op.phase2_at, op.done = Phase.PHASE2, now, True
            self._touched.append(op)
        return []

    def check_timeouts(self, now: float) -> list[DisputeMsg]:
        disputes = []
        while self._deadlines and self._deadlines[0][0] <= now:
            _, op_id = heapq.heappop(self._deadlines)
            op = self.ops[op_id]
            if op.phase == Phase.PHASE1:
                log.info("%s: op %d timed out waiting for a proof", self.me, op_id)
                disputes.append(self._dispute(op, now))
        return disputes

    # -- process interface -----------------------------------------------------

    def _drain(self, now: float) -> Outbound:
        touched, self._touched = self._touched, []
        if self.on_progress is None:
            return []
        out: Outbound = []
        seen = set()
        for op in touched:
            if op.op_id not in seen:
                seen.add(op.op_id)
                out.extend(self.on_progress(op, now))
        return out

    def on_message(self, src: NodeId, msg, now: float) -> Outbound:
        out: Outbound
        if isinstance(msg, AddResponse):
            out = self._to_cloud(self.on_add_response(msg, now))
        elif isinstance(msg, BlockProofMsg):
            out = self._to_cloud(self.on_block_proof(msg, now))
        elif isinstance(msg, ReadResponse):
            _, dispute = self.verify_read(msg, now)
            out = self._to_cloud([dispute] if dispute else [])
        elif isinstance(msg, GetResponse):
            out = self.on_get_response(msg, now)
        elif isinstance(msg, GossipMsg):
            out = self.on_gossip(msg, now)
        elif isinstance(msg, Verdict):
            self.verdicts.append(msg)
            out = []
        else:
            out = []
        return out + self._drain(now)

    def on_timer(self, now: float) -> Outbound:
        out = self._to_cloud(self.check_timeouts(now))
        while self._retries and self._retries[0][0] <= now:
            _, op_id = heapq.heappop(self._retries)
            op = self.ops[op_id]
            out.append((self.edge, self.get(op.key, now, _op=op)))
        d = self.driver
        if d is not None and d.wake_at is not None and d.wake_at <= now:
            out.extend(d.timer(now))
        return out + self._drain(now)

    def next_timer(self) -> Optional[float]:
        while self._deadlines and self.ops[self._deadlines[0][1]].phase != Phase.PHASE1:
            heapq.heappop(self._deadlines)
        times = [h[0][0] for h in (self._deadlines, self._retries) if h]
        if self.driver is not None and self.driver.wake_at is not None:
            times.append(self.driver.wake_at)
        return min(times) if times else None
