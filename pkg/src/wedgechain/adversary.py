"""Byzantine edge behaviors as interceptors around an honest EdgeNode.

The honest state machine stays the single source of truth; a fault only
rewrites (and re-signs, with the real edge key) what leaves the node, or
answers selected requests itself.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

from . import lsmerkle
from .edge import EdgeNode, Outbound
from .model import (
    AddResponse,
    Block,
    BlockCertify,
    GetRequest,
    GetResponse,
    NodeId,
    ReadRequest,
    ReadResponse,
    ReadStatus,
)
from .crypto import hash_bytes
from .wire import block_digest, signed


class Behavior(enum.Enum):
    NONE = "none"
    EQUIVOCATE = "equivocate"
    DROP_ENTRY = "drop_entry"
    WRONG_DIGEST = "wrong_digest"
    OMIT_BLOCK = "omit_block"
    STALE_SNAPSHOT = "stale_snapshot"


@dataclass(frozen=True)
class FaultSpec:
    """One behavior per edge. Unset targets bind to the first block sealed
    once the fault is active (``now >= after_ms``)."""

    behavior: Behavior = Behavior.NONE
    bid: Optional[int] = None
    targets: tuple[NodeId, ...] = ()  # equivocation victims; default: last contributor
    client: Optional[NodeId] = None  # drop_entry target entry
    seq: Optional[int] = None
    age_ms: float = 0.0
    after_ms: float = 0.0


def forge_block(block: Block, victim: NodeId) -> Block:
    """A different block for the same bid that still contains ``victim``'s entries."""
    mine = tuple(e for e in block.entries if e.client == victim)
    if mine and len(mine) < len(block.entries):
        return Block(block.edge, block.bid, mine)
    if len(block.entries) > 1 and block.entries[::-1] != block.entries:
        return Block(block.edge, block.bid, block.entries[::-1])
    return Block(block.edge, block.bid, block.entries + block.entries[-1:])


class ByzantineEdge:
    def __init__(self, inner: EdgeNode, fault: FaultSpec):
        self.inner = inner
        self.fault = fault
        self.me = inner.me
        self.bid = fault.bid
        self.victims: dict[int, tuple[NodeId, ...]] = {}
        self.drop: Optional[tuple[NodeId, int]] = (
            (fault.client, fault.seq) if fault.client is not None and fault.seq is not None else None
        )
        self.snapshots: list[tuple[float, lsmerkle.LsmState]] = []
        self._lsm_mark = None
        self.tampered = 0  # outbound messages rewritten
        self.omit_bid = fault.bid if fault.bid is not None else 0
        inner.strict = False
        if fault.behavior == Behavior.STALE_SNAPSHOT:
            self._snap(0.0)

    def __getattr__(self, name):
        return getattr(self.inner, name)

    def active(self, now: float) -> bool:
        return self.fault.behavior != Behavior.NONE and now >= self.fault.after_ms

    # -- stale snapshots -------------------------------------------------------

    def _snap(self, now: float) -> None:
        lsm = self.inner.lsm
        mark = (len(lsm.levels[0]), len(lsm.l0_proofs), lsm.global_root)
        if mark != self._lsm_mark:
            self._lsm_mark = mark
            self.snapshots.append((now, lsm.snapshot()))

    def _stale_view(self, now: float) -> lsmerkle.LsmState:
        cutoff = now - self.fault.age_ms
        chosen = 0
        for i, (t, _) in enumerate(self.snapshots):
            if t <= cutoff:
                chosen = i
        del self.snapshots[:chosen]  # older ones can never be chosen again
        return self.snapshots[0][1]

    # -- interception ------------------------------------------------------------

    def _bind(self, out: Outbound, now: float) -> None:
        if not self.active(now):
            return
        for _, msg in out:
            if isinstance(msg, BlockCertify) and msg.bid in self.inner.log:
                block = self.inner.log[msg.bid]
                b = self.fault.behavior
                if b == Behavior.DROP_ENTRY and self.drop is None and block.entries:
                    self.drop = block.entries[0].ident
                if b in (Behavior.EQUIVOCATE, Behavior.WRONG_DIGEST) and self.bid is None:
                    self.bid = msg.bid
                if b == Behavior.EQUIVOCATE and msg.bid == self.bid and self.bid not in self.victims:
                    self.victims[msg.bid] = self.fault.targets or tuple(block.contributors()[-1:])

    def _rewrite(self, dst: NodeId, msg, now: float):
        b = self.fault.behavior
        key = self.inner.key
        if b == Behavior.EQUIVOCATE:
            victims = self.victims.get(self.bid, ())
            if dst in victims:
                if isinstance(msg, AddResponse) and msg.bid == self.bid:
                    return signed(AddResponse(msg.bid, forge_block(msg.block, dst)), key)
                if isinstance(msg, ReadResponse) and msg.bid == self.bid and msg.block is not None:
                    forged = ReadResponse(msg.edge, msg.bid, msg.asof, msg.status, forge_block(msg.block, dst), msg.proof)
                    return signed(forged, key)
        elif b == Behavior.DROP_ENTRY and isinstance(msg, BlockCertify) and self.drop is not None:
            block = self.inner.log.get(msg.bid)
            if block is not None and any(e.ident == self.drop for e in block.entries):
                kept = tuple(e for e in block.entries if e.ident != self.drop)
                return signed(BlockCertify(msg.edge, msg.bid, block_digest(Block(block.edge, block.bid, kept))), key)
        elif b == Behavior.WRONG_DIGEST and isinstance(msg, BlockCertify) and msg.bid == self.bid:
            return signed(BlockCertify(msg.edge, msg.bid, hash_bytes(b"forged" + msg.digest)), key)
        return msg

    def intercept(self, out: Outbound, now: float) -> Outbound:
        self._bind(out, now)
        if not self.active(now) and not self.victims and self.drop is None and self.bid is None:
            return out
        rewritten = []
        for dst, msg in out:
            new = self._rewrite(dst, msg, now)
            if new is not msg:
                self.tampered += 1
            rewritten.append((dst, new))
        return rewritten

    # -- process interface -----------------------------------------------------

    def on_message(self, src: NodeId, msg, now: float) -> Outbound:
        b = self.fault.behavior
        if self.active(now):
            if b == Behavior.OMIT_BLOCK and isinstance(msg, ReadRequest) and msg.bid == self.omit_bid:
                if msg.asof > now:
                    return []
                self.tampered += 1
                return [(src, signed(ReadResponse(self.me, msg.bid, msg.asof, ReadStatus.UNAVAILABLE), self.inner.key))]
            if b == Behavior.STALE_SNAPSHOT and isinstance(msg, GetRequest):
                bundle = lsmerkle.lookup(self._stale_view(now), self.me, msg.key)
                self.tampered += 1
                out: Outbound = [(src, signed(GetResponse(bundle), self.inner.key))]
                # stale, but not withholding: pending blocks still get their proofs
                for block, proof in bundle.l0:
                    if proof is None and block.bid in self.inner.proofs:
                        out.append((src, self.inner.proofs[block.bid]))
                    elif proof is None:
                        self.inner.subscribers.setdefault(block.bid, {})[src] = None
                return out
        out = self.intercept(self.inner.on_message(src, msg, now), now)
        if b == Behavior.STALE_SNAPSHOT:
            self._snap(now)
        return out

    def on_timer(self, now: float) -> Outbound:
        out = self.intercept(self.inner.on_timer(now), now)
        if self.fault.behavior == Behavior.STALE_SNAPSHOT:
            self._snap(now)
        return out

    def next_timer(self) -> Optional[float]:
        return self.inner.next_timer()


def wrap(edge: EdgeNode, fault: Optional[FaultSpec]):
    if fault is None or fault.behavior == Behavior.NONE:
        return edge
    return ByzantineEdge(edge, fault)

