"""The (possibly untrusted) edge node state machine.

An honest edge buffers signed client entries, seals them into blocks with
gapless ids, answers the writers immediately (Phase I) and asks the cloud
to certify only the block digest. Cloud proofs are forwarded to writers
and to Phase I readers as they arrive (Phase II).
"""
from __future__ import annotations

import logging
from typing import Optional

from . import lsmerkle
from .crypto import KeyDirectory, KeyPair, node_keypair
from .model import (
    AddRequest,
    AddResponse,
    Block,
    BlockCertify,
    BlockProofMsg,
    Entry,
    GetRequest,
    GetResponse,
    GlobalRoot,
    Kind,
    LevelRoot,
    MergeRequest,
    MergeResponse,
    NodeId,
    NoOp,
    ReadRequest,
    ReadResponse,
    ReadStatus,
    Verdict,
)
from .wire import block_digest, check_sig, signed

log = logging.getLogger(__name__)

Outbound = list[tuple[NodeId, object]]


class EdgeNode:
    def __init__(
        self,
        me: NodeId,
        cloud: NodeId,
        directory: KeyDirectory,
        *,
        batch_size: int,
        thresholds: tuple[int, ...],
        level_roots: list[LevelRoot],
        global_root: GlobalRoot,
        index: bool = True,
        sync_certify: bool = False,
        flush_interval_ms: float = 0.0,
        noop_interval_ms: float = 0.0,
        certify_retry_ms: float = 0.0,
        keypair: Optional[KeyPair] = None,
    ):
        if batch_size < 1:
            raise ValueError("batch_size must be positive")
        self.me = me
        self.cloud = cloud
        self.directory = directory
        self.key = keypair or node_keypair(me)
        self.batch_size = batch_size
        self.index = index
        self.sync_certify = sync_certify
        self.flush_interval_ms = flush_interval_ms
        self.noop_interval_ms = noop_interval_ms
        self.certify_retry_ms = certify_retry_ms

        self.buffer: list[Entry] = []
        self.buffered_ops = 0
        self.buffer_since = 0.0
        self.next_bid = 0
        self.log: dict[int, Block] = {}
        self.proofs: dict[int, BlockProofMsg] = {}
        self.lsm = lsmerkle.LsmState(tuple(thresholds), list(level_roots), global_root)
        self.pending_certify: dict[int, float] = {}
        self.subscribers: dict[int, dict[NodeId, None]] = {}
        self.seen: set[tuple[NodeId, int]] = set()
        self.held: dict[int, AddResponse] = {}  # sync_certify: responses awaiting the proof
        self.merge_seq = 0
        self.noop_seq = 0
        self.last_seal = 0.0
        self.rejected = 0
        self.verdicts: list[Verdict] = []
        self.strict = True  # honest edges assert proof/log consistency

    # -- logging ---------------------------------------------------------------

    def handle_add(self, req: AddRequest, now: float) -> Outbound:
        entry = req.entry
        if entry.ident in self.seen:
            return []
        public = self.directory.public(entry.client)
        if entry.client.kind != Kind.CLIENT or not check_sig(entry, public):
            self.rejected += 1
            log.info("%s dropped entry %s/%d: bad signature or unknown client", self.me, entry.client, entry.seq)
            return []
        self.seen.add(entry.ident)
        if not self.buffer:
            self.buffer_since = now
        self.buffer.append(entry)
        self.buffered_ops += entry.op_count
        if self.buffered_ops >= self.batch_size:
            return self.seal_block(now)[1]
        return []

    def seal_block(self, now: float) -> tuple[Optional[Block], Outbound]:
        if not self.buffer:
            return None, []
        block = Block(self.me, self.next_bid, tuple(self.buffer))
        self.next_bid += 1
        self.buffer = []
        self.buffered_ops = 0
        self.last_seal = now
        self.log[block.bid] = block
        if self.index:
            lsmerkle.insert_l0(self.lsm, block, now)

        response = signed(AddResponse(block.bid, block), self.key)
        certify = signed(BlockCertify(self.me, block.bid, block_digest(block)), self.key)
        self.pending_certify[block.bid] = now
        out: Outbound = []
        if self.sync_certify:
            self.held[block.bid] = response
        else:
            out.extend((c, response) for c in block.contributors() if c != self.me)
        out.append((self.cloud, certify))
        return block, out

    def handle_read(self, req: ReadRequest, requester: NodeId, now: float) -> ReadResponse:
        block = self.log.get(req.bid)
        if block is None:
            resp = ReadResponse(self.me, req.bid, req.asof, ReadStatus.UNAVAILABLE)
        elif req.bid in self.proofs:
            resp = ReadResponse(self.me, req.bid, req.asof, ReadStatus.PHASE2, block, self.proofs[req.bid].proof)
        else:
            self.subscribers.setdefault(req.bid, {})[requester] = None
            resp = ReadResponse(self.me, req.bid, req.asof, ReadStatus.PHASE1, block)
        return signed(resp, self.key)

    def handle_block_proof(self, msg: BlockProofMsg, now: float) -> Outbound:
        proof = msg.proof
        if proof.edge != self.me or not check_sig(proof, self.directory.public(self.cloud)):
            return []
        if proof.bid in self.proofs:
            return []
        block = self.log.get(proof.bid)
        if block is None:
            return []
        if proof.digest != block_digest(block):
            if self.strict:
                raise AssertionError(f"{self.me}: cloud proof for bid {proof.bid} does not match the log")
            log.info("%s holds a proof that does not match block %d", self.me, proof.bid)
        self.proofs[proof.bid] = msg
        self.pending_certify.pop(proof.bid, None)
        if self.index:
            lsmerkle.attach_proof(self.lsm, proof)

        targets = {c: None for c in block.contributors() if c != self.me}
        targets.update(self.subscribers.pop(proof.bid, {}))
        out: Outbound = []
        held = self.held.pop(proof.bid, None)
        if held is not None:
            out.extend((c, held) for c in block.contributors() if c != self.me)
        out.extend((t, msg) for t in targets)
        merge = self.maybe_start_merge(now)
        if merge is not None:
            out.append((self.cloud, merge))
        return out

    # -- key-value index -------------------------------------------------------

    def handle_get(self, req: GetRequest, requester: NodeId, now: float) -> GetResponse:
        bundle = lsmerkle.lookup(self.lsm, self.me, req.key)
        for block, proof in bundle.l0:
            if proof is None:
                self.subscribers.setdefault(block.bid, {})[requester] = None
        return signed(GetResponse(bundle), self.key)

    def maybe_start_merge(self, now: float) -> Optional[MergeRequest]:
        if not self.index or self.lsm.merge_in_flight is not None:
            return None
        level = lsmerkle.plan_merge(self.lsm)
        if level is None:
            return None
        blocks, upper, lower, roots = lsmerkle.merge_inputs(self.lsm, level)
        req = signed(MergeRequest(self.me, self.merge_seq, level, blocks, upper, lower, roots), self.key)
        self.merge_seq += 1
        self.lsm.merge_in_flight = req
        return req

    def handle_merge_response(self, msg: MergeResponse, now: float) -> Outbound:
        req = self.lsm.merge_in_flight
        if (
            req is None
            or msg.edge != self.me
            or msg.merge_id != req.merge_id
            or msg.level != req.level
            or not check_sig(msg, self.directory.public(self.cloud))
        ):
            return []
        lsmerkle.apply_merge(self.lsm, req, msg)
        self.lsm.merge_in_flight = None
        nxt = self.maybe_start_merge(now)
        return [(self.cloud, nxt)] if nxt is not None else []

    # -- process interface -----------------------------------------------------

    def on_message(self, src: NodeId, msg, now: float) -> Outbound:
        if isinstance(msg, AddRequest):
            return self.handle_add(msg, now)
        if isinstance(msg, BlockProofMsg):
            return self.handle_block_proof(msg, now)
        if isinstance(msg, ReadRequest):
            if msg.asof > now:
                return []  # a request stamped in the future would make the reply unfalsifiable
            return [(src, self.handle_read(msg, src, now))]
        if isinstance(msg, GetRequest):
            return [(src, self.handle_get(msg, src, now))]
        if isinstance(msg, MergeResponse):
            return self.handle_merge_response(msg, now)
        if isinstance(msg, Verdict):
            self.verdicts.append(msg)
            return []
        log.debug("%s ignoring %s from %s", self.me, type(msg).__name__, src)
        return []

    def on_timer(self, now: float) -> Outbound:
        out: Outbound = []
        if self.flush_interval_ms and self.buffer and now >= self.buffer_since + self.flush_interval_ms:
            out.extend(self.seal_block(now)[1])
        if self.noop_interval_ms and now >= self.last_seal + self.noop_interval_ms:
            entry = signed(Entry(self.me, self.noop_seq, NoOp()), self.key)
            self.noop_seq += 1
            self.buffer.append(entry)
            self.buffered_ops += 1
            out.extend(self.seal_block(now)[1])
        if self.certify_retry_ms:
            for bid, sent in list(self.pending_certify.items()):
                if now >= sent + self.certify_retry_ms:
                    self.pending_certify[bid] = now
                    out.append((self.cloud, signed(BlockCertify(self.me, bid, block_digest(self.log[bid])), self.key)))
        return out

    def next_timer(self) -> Optional[float]:
        times = []
        if self.flush_interval_ms and self.buffer:
            times.append(self.buffer_since + self.flush_interval_ms)
        if self.noop_interval_ms:
            times.append(self.last_seal + self.noop_interval_ms)
        if self.certify_retry_ms and self.pending_certify:
            times.append(min(self.pending_certify.values()) + self.certify_retry_ms)
        return min(times) if times else None

    # -- invariants ------------------------------------------------------------

    def invariant_violations(self) -> list[str]:
        problems = []
        if sorted(self.log) != list(range(self.next_bid)):
            problems.append("log bids are not gapless")
        for bid, msg in self.proofs.items():
            if msg.proof.digest != block_digest(self.log[bid]):
                problems.append(f"proof for bid {bid} does not match the log")
        if self.buffered_ops >= self.batch_size:
            problems.append("buffer at or above batch size between steps")
        return problems
