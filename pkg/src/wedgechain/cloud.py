"""The trusted cloud node: digest registry, merge service, gossip and disputes.

The cloud never sees block contents during normal operation. It binds
(edge, bid) to the first digest it is asked to certify and judges later
disputes against that binding.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

from . import lsmerkle
from .crypto import EMPTY_DIGEST, KeyDirectory, KeyPair, node_keypair
from .model import (
    NO_WATERMARK,
    AddResponse,
    BlockCertify,
    BlockProof,
    BlockProofMsg,
    DisputeKind,
    DisputeMsg,
    GetResponse,
    GlobalRoot,
    GossipMsg,
    Kind,
    LevelRoot,
    MergeRequest,
    MergeResponse,
    NodeId,
    Page,
    PageEntry,
    ReadResponse,
    ReadStatus,
    Reason,
    Verdict,
)
from .wire import DecodeError, block_digest, check_sig, decode, signed

log = logging.getLogger(__name__)

Outbound = list[tuple[NodeId, object]]


@dataclass
class EdgeRecord:
    registry: dict[int, bytes] = field(default_factory=dict)
    proofs: dict[int, BlockProof] = field(default_factory=dict)
    certified_at: dict[int, float] = field(default_factory=dict)
    log_size: int = 0  # length of the contiguous certified prefix
    gossiped: int = -1
    level_roots: list[LevelRoot] = field(default_factory=list)
    global_root: Optional[GlobalRoot] = None
    watermark: int = NO_WATERMARK
    next_page_id: int = 0
    merges: int = 0
    merge_overdue: int = 0


@dataclass(frozen=True)
class VerdictRecord:
    time: float
    edge: NodeId
    reason: Reason
    disputant: Optional[NodeId]  # None when the cloud detected the fault itself


@dataclass(frozen=True)
class MergeRecord:
    """Inputs and outputs of one merge, kept for offline invariant checks."""

    edge: NodeId
    level: int
    inputs: tuple[PageEntry, ...]
    output: tuple[Page, ...]


@dataclass
class _Deferred:
    msg: DisputeMsg
    edge: NodeId
    bid: int
    deadline: float


class CloudNode:
    def __init__(
        self,
        me: NodeId,
        directory: KeyDirectory,
        *,
        thresholds: tuple[int, ...],
        page_size: int = 64,
        gossip_interval_ms: float = 0.0,
        gossip_targets: Optional[dict[NodeId, list[NodeId]]] = None,
        dispute_grace_ms: float = 1000.0,
        record_merges: bool = False,
        keypair: Optional[KeyPair] = None,
    ):
        if page_size < 1:
            raise ValueError("page_size must be positive")
        self.me = me
        self.directory = directory
        self.key = keypair or node_keypair(me)
        self.thresholds = tuple(thresholds)
        self.page_size = page_size
        self.gossip_interval_ms = gossip_interval_ms
        self.gossip_targets = gossip_targets or {}
        self.dispute_grace_ms = dispute_grace_ms
        self.record_merges = record_merges
        self.edges: dict[NodeId, EdgeRecord] = {}
        self.verdicts: list[VerdictRecord] = []
        self.rulings: list[VerdictRecord] = []  # every ruling, including NONE / INVALID_EVIDENCE
        self.merge_log: list[MergeRecord] = []
        self.deferred: list[_Deferred] = []
        self.last_gossip = 0.0

    # -- setup ---------------------------------------------------------------

    def record(self, edge: NodeId) -> EdgeRecord:
        rec = self.edges.get(edge)
        if rec is None:
            rec = self.edges[edge] = EdgeRecord()
            rec.level_roots = [signed(lr, self.key, edge=edge) for lr in lsmerkle.empty_roots(len(self.thresholds))]
            rec.global_root = self._sign_global(edge, rec, 0.0)
        return rec

    def bootstrap(self, edge: NodeId) -> tuple[list[LevelRoot], GlobalRoot]:
        """Signed empty level roots and the initial global root for ``edge``."""
        rec = self.record(edge)
        return list(rec.level_roots), rec.global_root

    def _sign_global(self, edge: NodeId, rec: EdgeRecord, now: float) -> GlobalRoot:
        g = GlobalRoot(lsmerkle.global_hash(rec.level_roots), now, rec.watermark)
        return signed(g, self.key, edge=edge)

    def _edge_ok(self, edge: NodeId, value) -> bool:
        return edge.kind == Kind.EDGE and check_sig(value, self.directory.public(edge))

    def _verdict(self, edge: NodeId, reason: Reason, now: float, disputant: Optional[NodeId]) -> Verdict:
        rec = VerdictRecord(now, edge, reason, disputant)
        self.rulings.append(rec)
        if reason not in (Reason.NONE, Reason.INVALID_EVIDENCE):
            self.verdicts.append(rec)
            log.info("verdict %s against %s", reason.name, edge)
        return Verdict(edge, reason)

    # -- certification -------------------------------------------------------

    def handle_block_certify(self, msg: BlockCertify, now: float) -> Outbound:
        if not self._edge_ok(msg.edge, msg):
            return []
        rec = self.record(msg.edge)
        known = rec.registry.get(msg.bid)
        if known is not None:
            if known == msg.digest:
                return [(msg.edge, BlockProofMsg(rec.proofs[msg.bid]))]
            return [(msg.edge, self._verdict(msg.edge, Reason.EQUIVOCATION, now, None))]
        if msg.bid < 0:
            return []
        rec.registry[msg.bid] = msg.digest
        rec.certified_at[msg.bid] = now
        proof = signed(BlockProof(msg.edge, msg.bid, msg.digest), self.key)
        rec.proofs[msg.bid] = proof
        while rec.log_size in rec.registry:
            rec.log_size += 1
        if rec.log_size - 1 - rec.watermark > 2 * (self.thresholds[0] + 1):
            rec.merge_overdue += 1
        out: Outbound = [(msg.edge, BlockProofMsg(proof))]
        out.extend(self._resolve_deferred(now, msg.edge, msg.bid))
        return out

    # -- merges ----------------------------------------------------------------

    def _check_merge(self, msg: MergeRequest, rec: EdgeRecord) -> Optional[str]:
        level = msg.level
        if not 0 <= level < len(self.thresholds) - 1:
            return "level out of range"
        if level == 0:
            if msg.upper or not msg.blocks:
                return "L0 merge shape"
            if msg.roots != (rec.level_roots[0],):
                return "stale level root"
            expected = rec.watermark + 1
            for block, proof in msg.blocks:
                if block.edge != msg.edge or block.bid != expected:
                    return "L0 blocks not contiguous from watermark"
                expected += 1
                digest = rec.registry.get(block.bid)
                if digest is None or digest != block_digest(block) or proof != rec.proofs[block.bid]:
                    return f"L0 block {block.bid} does not match the registry"
        else:
            if msg.blocks or not msg.upper:
                return "level merge shape"
            if msg.roots != (rec.level_roots[level - 1], rec.level_roots[level]):
                return "stale level roots"
            if not _matches_root(msg.upper, rec.level_roots[level - 1], level):
                return f"level {level} pages do not match the signed root"
        if not _matches_root(msg.lower, rec.level_roots[level], level + 1):
            return f"level {level + 1} pages do not match the signed root"
        return None

    def handle_merge_request(self, msg: MergeRequest, now: float) -> Outbound:
        if not self._edge_ok(msg.edge, msg):
            return []
        rec = self.record(msg.edge)
        problem = self._check_merge(msg, rec)
        if problem is not None:
            log.info("rejecting merge %d from %s: %s", msg.merge_id, msg.edge, problem)
            return [(msg.edge, self._verdict(msg.edge, Reason.BAD_MERGE, now, None))]

        level = msg.level
        inputs = lsmerkle.merge_source_entries(msg)
        pages = lsmerkle.compact(inputs, self.page_size, level + 1, now, rec.next_page_id)
        rec.next_page_id += len(pages)
        changed = []
        if level >= 1:
            changed.append(signed(LevelRoot(level, EMPTY_DIGEST, 0), self.key, edge=msg.edge))
        changed.append(signed(LevelRoot(level + 1, lsmerkle.merkle_root(pages), len(pages)), self.key, edge=msg.edge))
        for lr in changed:
            rec.level_roots[lr.level - 1] = lr
        if level == 0:
            rec.watermark = msg.blocks[-1][0].bid
        rec.global_root = self._sign_global(msg.edge, rec, now)
        rec.merges += 1
        if self.record_merges:
            self.merge_log.append(MergeRecord(msg.edge, level, tuple(inputs), tuple(pages)))
        resp = MergeResponse(msg.edge, msg.merge_id, level, tuple(pages), tuple(changed), rec.global_root)
        return [(msg.edge, signed(resp, self.key))]

    # -- gossip ----------------------------------------------------------------

    def gossip(self, now: float) -> list[GossipMsg]:
        self.last_gossip = now
        msgs = []
        for edge in sorted(self.edges):
            rec = self.edges[edge]
            rec.gossiped = rec.log_size
            msgs.append(signed(GossipMsg(edge, rec.log_size, now), self.key))
        return msgs

    def _gossip_due(self) -> bool:
        return any(rec.gossiped != rec.log_size for rec in self.edges.values())

    # -- disputes --------------------------------------------------------------

    def handle_dispute(self, msg: DisputeMsg, now: float) -> Outbound:
        reply = self._judge(msg, now)
        return [] if reply is None else [(msg.disputant, reply)]

    def _judge(self, msg: DisputeMsg, now: float) -> Optional[Verdict]:
        try:
            stmt = decode(msg.evidence)
        except DecodeError:
            stmt = None
        edge = _statement_edge(stmt)
        if edge is None or not self._edge_ok(edge, stmt):
            return self._verdict(edge or msg.disputant, Reason.INVALID_EVIDENCE, now, msg.disputant)
        rec = self.record(edge)

        if isinstance(stmt, GetResponse):
            return self._judge_get(stmt, rec, edge, msg, now)

        if isinstance(stmt, AddResponse):
            block = stmt.block
            if msg.kind != DisputeKind.ADD:
                return self._verdict(edge, Reason.INVALID_EVIDENCE, now, msg.disputant)
            if stmt.bid != block.bid or block.edge != edge:
                return self._verdict(edge, Reason.LIED, now, msg.disputant)
        elif isinstance(stmt, ReadResponse):
            if stmt.status == ReadStatus.UNAVAILABLE:
                at = rec.certified_at.get(stmt.bid)
                if at is not None and at <= stmt.asof:
                    return self._verdict(edge, Reason.OMISSION, now, msg.disputant)
                return self._verdict(edge, Reason.NONE, now, msg.disputant)
            block = stmt.block
            if block is None or block.bid != stmt.bid or block.edge != edge:
                return self._verdict(edge, Reason.LIED, now, msg.disputant)
            if stmt.proof is not None and not (
                stmt.proof.edge == edge
                and stmt.proof.bid == stmt.bid
                and stmt.proof.digest == block_digest(block)
                and check_sig(stmt.proof, self.directory.public(self.me))
            ):
                return self._verdict(edge, Reason.LIED, now, msg.disputant)
        else:
            return self._verdict(edge, Reason.INVALID_EVIDENCE, now, msg.disputant)

        digest = rec.registry.get(block.bid)
        if digest is None:
            self.deferred.append(_Deferred(msg, edge, block.bid, now + self.dispute_grace_ms))
            return None
        if digest != block_digest(block):
            return self._verdict(edge, Reason.LIED, now, msg.disputant)
        return self._verdict(edge, Reason.NONE, now, msg.disputant)

    def _judge_get(self, stmt: GetResponse, rec: EdgeRecord, edge: NodeId, msg: DisputeMsg, now: float):
        bundle = stmt.bundle
        if bundle.edge != edge:
            return self._verdict(edge, Reason.LIED, now, msg.disputant)
        for block, _ in bundle.l0:
            digest = rec.registry.get(block.bid)
            if block.edge == edge and digest is not None and digest != block_digest(block):
                return self._verdict(edge, Reason.LIED, now, msg.disputant)
        result = lsmerkle.verify_get_proof(bundle, bundle.key, self.directory.public(self.me))
        if result.status == lsmerkle.GetStatus.INVALID:
            return self._verdict(edge, Reason.LIED, now, msg.disputant)
        return self._verdict(edge, Reason.NONE, now, msg.disputant)

    def _resolve_deferred(self, now: float, edge: NodeId, bid: int) -> Outbound:
        out: Outbound = []
        keep = []
        for d in self.deferred:
            if d.edge == edge and d.bid == bid:
                reply = self._judge(d.msg, now)
                if reply is not None:
                    out.append((d.msg.disputant, reply))
            else:
                keep.append(d)
        self.deferred = keep
        return out

    # -- process interface -----------------------------------------------------

    def on_message(self, src: NodeId, msg, now: float) -> Outbound:
        if isinstance(msg, BlockCertify):
            return self.handle_block_certify(msg, now)
        if isinstance(msg, MergeRequest):
            return self.handle_merge_request(msg, now)
        if isinstance(msg, DisputeMsg):
            if msg.disputant != src:
                return []
            return self.handle_dispute(msg, now)
        log.debug("cloud ignoring %s from %s", type(msg).__name__, src)
        return []

    def on_timer(self, now: float) -> Outbound:
        out: Outbound = []
        if self.gossip_interval_ms and self._gossip_due() and now >= self.last_gossip + self.gossip_interval_ms:
            for g in self.gossip(now):
                out.extend((t, g) for t in self.gossip_targets.get(g.edge, ()))
        expired = [d for d in self.deferred if d.deadline <= now]
        if expired:
            self.deferred = [d for d in self.deferred if d.deadline > now]
            for d in expired:
                out.append((d.msg.disputant, self._verdict(d.edge, Reason.UNRESPONSIVE, now, d.msg.disputant)))
        return out

    def next_timer(self) -> Optional[float]:
        times = [d.deadline for d in self.deferred]
        if self.gossip_interval_ms and self._gossip_due():
            times.append(self.last_gossip + self.gossip_interval_ms)
        return min(times) if times else None


def _matches_root(pages: tuple[Page, ...], root: LevelRoot, level: int) -> bool:
    if len(pages) != root.page_count or any(p.level != level for p in pages):
        return False
    return lsmerkle.merkle_root(pages) == root.root


def _statement_edge(stmt) -> Optional[NodeId]:
    if isinstance(stmt, AddResponse):
        return stmt.block.edge
    if isinstance(stmt, ReadResponse):
        return stmt.edge
    if isinstance(stmt, GetResponse):
        return stmt.bundle.edge
    return None
