"""LSMerkle: an LSM tree whose levels >= 1 are Merklized and cloud-certified.

L0 holds one page per sealed block; each is certified individually through
the block's BlockProof. Levels >= 1 hold range-partitioned pages produced
by cloud merges, with a signed Merkle root per level and a signed,
timestamped global root over all level roots.
"""
from __future__ import annotations

import bisect
import enum
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .crypto import EMPTY_DIGEST, hash_bytes
from .model import (
    KEY_MAX,
    Block,
    BlockProof,
    GetProofBundle,
    GlobalRoot,
    LevelPage,
    LevelRoot,
    MergeRequest,
    MergeResponse,
    MerklePath,
    NodeId,
    Page,
    PageEntry,
    Put,
)
from .wire import block_digest, check_sig, page_hash

LEFT, RIGHT = 0, 1  # side of the sibling relative to the running node


# -- Merkle trees --------------------------------------------------------------


def merkle_layers(leaves: list[bytes]) -> list[list[bytes]]:
    """All layers bottom-up; an odd trailing node is promoted unchanged."""
    if not leaves:
        return [[EMPTY_DIGEST]]
    layers = [list(leaves)]
    while len(layers[-1]) > 1:
        prev = layers[-1]
        nxt = [hash_bytes(prev[i] + prev[i + 1]) for i in range(0, len(prev) - 1, 2)]
        if len(prev) % 2:
            nxt.append(prev[-1])
        layers.append(nxt)
    return layers


def merkle_root(pages: Iterable[Page]) -> bytes:
    return merkle_layers([page_hash(p) for p in pages])[-1][0]


def _path_from_layers(layers: list[list[bytes]], index: int) -> MerklePath:
    siblings = []
    i = index
    for layer in layers[:-1]:
        if i % 2:
            siblings.append((layer[i - 1], LEFT))
        elif i + 1 < len(layer):
            siblings.append((layer[i + 1], RIGHT))
        i //= 2
    return MerklePath(index, tuple(siblings))


def merkle_path(pages: list[Page], index: int) -> MerklePath:
    if not 0 <= index < len(pages):
        raise IndexError(f"leaf index {index} out of range for {len(pages)} pages")
    return _path_from_layers(merkle_layers([page_hash(p) for p in pages]), index)


def verify_path(leaf: bytes, path: MerklePath, root: bytes) -> bool:
    node = leaf
    for sibling, side in path.siblings:
        if side == LEFT:
            node = hash_bytes(sibling + node)
        elif side == RIGHT:
            node = hash_bytes(node + sibling)
        else:
            return False
    return node == root


def expected_sides(index: int, count: int) -> list[int]:
    """Sibling sides a well-formed path for leaf ``index`` of ``count`` must have."""
    sides = []
    while count > 1:
        if index % 2:
            sides.append(LEFT)
        elif index + 1 < count:
            sides.append(RIGHT)
        index //= 2
        count = (count + 1) // 2
    return sides


def global_hash(level_roots: Iterable[LevelRoot]) -> bytes:
    return hash_bytes(b"".join(lr.root for lr in level_roots))


# -- pages ---------------------------------------------------------------------


def l0_page(block: Block, created: float = 0.0) -> Page:
    entries = sorted(
        (PageEntry(op.key, op.value, block.bid, i) for i, op in block.ops() if isinstance(op, Put)),
        key=lambda e: (e.key, e.bid, e.index),
    )
    lo = entries[0].key if entries else 0
    hi = entries[-1].key if entries else 0
    return Page(0, block.bid, tuple(entries), lo, hi, created, block.bid)


def latest_versions(entries: Iterable[PageEntry]) -> dict[int, PageEntry]:
    latest: dict[int, PageEntry] = {}
    for e in entries:
        cur = latest.get(e.key)
        if cur is None or e.version > cur.version:
            latest[e.key] = e
    return latest


def compact(
    entries: Iterable[PageEntry], page_size: int, level: int, created: float, first_page_id: int = 0
) -> list[Page]:
    """Sort, keep the newest version per key, and cut into range pages.

    The first page starts at 0, the last ends at KEY_MAX, and adjacent pages
    satisfy ``p.max == q.min - 1``.
    """
    if page_size < 1:
        raise ValueError("page_size must be positive")
    items = sorted(latest_versions(entries).values(), key=lambda e: e.key)
    chunks = [items[i:i + page_size] for i in range(0, len(items), page_size)]
    pages = []
    for j, chunk in enumerate(chunks):
        lo = 0 if j == 0 else chunk[0].key
        hi = KEY_MAX if j == len(chunks) - 1 else chunks[j + 1][0].key - 1
        pages.append(Page(level, first_page_id + j, tuple(chunk), lo, hi, created))
    return pages


def level_violations(pages: list[Page]) -> list[str]:
    """Range-partition and uniqueness problems of one merged level (empty if sound)."""
    problems = []
    if not pages:
        return problems
    if pages[0].min != 0:
        problems.append(f"first page min {pages[0].min} != 0")
    if pages[-1].max != KEY_MAX:
        problems.append(f"last page max {pages[-1].max} != KEY_MAX")
    for p, q in zip(pages, pages[1:]):
        if p.max != q.min - 1:
            problems.append(f"pages {p.page_id},{q.page_id}: max {p.max} != min {q.min} - 1")
    seen = set()
    for p in pages:
        keys = [e.key for e in p.entries]
        if keys != sorted(keys):
            problems.append(f"page {p.page_id} entries not sorted")
        for k in keys:
            if not p.covers(k):
                problems.append(f"page {p.page_id} key {k} outside [{p.min}, {p.max}]")
            if k in seen:
                problems.append(f"key {k} appears twice in level")
            seen.add(k)
    return problems


# -- edge-side state -----------------------------------------------------------


@dataclass
class LsmState:
    thresholds: tuple[int, ...]
    level_roots: list[LevelRoot]  # levels 1..n-1, in order
    global_root: GlobalRoot
    levels: list[list[Page]] = field(default_factory=list)
    l0_blocks: dict[int, Block] = field(default_factory=dict)
    l0_proofs: dict[int, BlockProof] = field(default_factory=dict)
    merge_in_flight: Optional[MergeRequest] = None
    _layers: dict[int, list[list[bytes]]] = field(default_factory=dict, repr=False)
    _mins: dict[int, list[int]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if len(self.thresholds) < 2:
            raise ValueError("LSMerkle needs at least two levels")
        if not self.levels:
            self.levels = [[] for _ in self.thresholds]

    @property
    def n_levels(self) -> int:
        return len(self.thresholds)

    def layers(self, level: int) -> list[list[bytes]]:
        if level not in self._layers:
            self._layers[level] = merkle_layers([page_hash(p) for p in self.levels[level]])
        return self._layers[level]

    def covering_index(self, level: int, key: int) -> int:
        if level not in self._mins:
            self._mins[level] = [p.min for p in self.levels[level]]
        return bisect.bisect_right(self._mins[level], key) - 1

    def set_level(self, level: int, pages: list[Page]) -> None:
        self.levels[level] = list(pages)
        self._layers.pop(level, None)
        self._mins.pop(level, None)

    def snapshot(self) -> "LsmState":
        """Copy the containers; pages and blocks are immutable and shared."""
        return LsmState(
            thresholds=self.thresholds,
            level_roots=list(self.level_roots),
            global_root=self.global_root,
            levels=[list(lvl) for lvl in self.levels],
            l0_blocks=dict(self.l0_blocks),
            l0_proofs=dict(self.l0_proofs),
            merge_in_flight=self.merge_in_flight,
            _layers=dict(self._layers),
            _mins=dict(self._mins),
        )


def insert_l0(lsm: LsmState, block: Block, now: float) -> Page:
    page = l0_page(block, now)
    lsm.levels[0].append(page)
    lsm.l0_blocks[block.bid] = block
    return page


def attach_proof(lsm: LsmState, proof: BlockProof) -> None:
    if proof.bid in lsm.l0_blocks:
        lsm.l0_proofs[proof.bid] = proof


def lookup(lsm: LsmState, edge: NodeId, key: int) -> GetProofBundle:
    """Newest version of ``key`` plus everything needed to prove it is newest."""
    l0 = tuple((lsm.l0_blocks[p.origin], lsm.l0_proofs.get(p.origin)) for p in lsm.levels[0])
    pages: list[LevelPage] = []
    if not any(p.find(key) is not None for p in lsm.levels[0]):
        for level in range(1, lsm.n_levels):
            if not lsm.levels[level]:
                continue
            idx = lsm.covering_index(level, key)
            page = lsm.levels[level][idx]
            pages.append(LevelPage(level, page, _path_from_layers(lsm.layers(level), idx)))
            if page.find(key) is not None:
                break
    return GetProofBundle(
        edge=edge,
        key=key,
        l0=l0,
        pages=tuple(pages),
        level_roots=tuple(lsm.level_roots),
        global_root=lsm.global_root,
    )


class GetStatus(enum.Enum):
    FOUND = "found"
    ABSENT = "absent"
    INVALID = "invalid"


@dataclass(frozen=True)
class GetResult:
    status: GetStatus
    value: Optional[bytes] = None
    pending: tuple[int, ...] = ()  # uncertified L0 bids: the answer is only Phase I
    timestamp: float = 0.0
    reason: str = ""

    @property
    def phase(self) -> int:
        return 1 if self.pending else 2


def verify_get_proof(bundle: GetProofBundle, key: int, cloud_public: bytes) -> GetResult:
    def invalid(reason: str) -> GetResult:
        return GetResult(GetStatus.INVALID, reason=reason)

    if bundle.key != key:
        return invalid("bundle is for another key")
    edge = bundle.edge
    g = bundle.global_root
    if not check_sig(g, cloud_public, edge=edge):
        return invalid("global root signature")
    roots = bundle.level_roots
    if not roots:
        return invalid("no level roots")
    for level, lr in enumerate(roots, start=1):
        if lr.level != level or not check_sig(lr, cloud_public, edge=edge):
            return invalid(f"level {level} root")
    if global_hash(roots) != g.hash:
        return invalid("global hash does not match level roots")

    pending = []
    newest: Optional[PageEntry] = None
    expected = g.watermark + 1
    for block, proof in bundle.l0:
        if block.edge != edge or block.bid != expected:
            return invalid("L0 blocks not contiguous from watermark")
        expected += 1
        if proof is None:
            pending.append(block.bid)
        elif (
            proof.edge != edge
            or proof.bid != block.bid
            or proof.digest != block_digest(block)
            or not check_sig(proof, cloud_public)
        ):
            return invalid(f"L0 block {block.bid} proof")
        for i, op in block.ops():
            if isinstance(op, Put) and op.key == key:
                cand = PageEntry(key, op.value, block.bid, i)
                if newest is None or cand.version > newest.version:
                    newest = cand

    done = dict(pending=tuple(pending), timestamp=g.timestamp)
    if newest is not None:
        if bundle.pages:
            return invalid("pages beyond an L0 hit")
        return GetResult(GetStatus.FOUND, newest.value, **done)

    pi = 0
    for level, lr in enumerate(roots, start=1):
        if lr.page_count == 0:
            if lr.root != EMPTY_DIGEST:
                return invalid(f"level {level} empty root")
            continue
        if pi >= len(bundle.pages):
            return invalid(f"missing covering page for level {level}")
        lp = bundle.pages[pi]
        pi += 1
        path = lp.path
        if lp.level != level or lp.page.level != level:
            return invalid("page level mismatch")
        if path.leaf_index >= lr.page_count:
            return invalid("leaf index out of range")
        if [s for _, s in path.siblings] != expected_sides(path.leaf_index, lr.page_count):
            return invalid("malformed Merkle path")
        if not verify_path(page_hash(lp.page), path, lr.root):
            return invalid(f"Merkle path for level {level}")
        if not lp.page.covers(key):
            return invalid(f"level {level} page does not cover key")
        hit = lp.page.find(key)
        if hit is not None:
            if pi != len(bundle.pages):
                return invalid("pages beyond the value level")
            return GetResult(GetStatus.FOUND, hit.value, **done)
    if pi != len(bundle.pages):
        return invalid("superfluous pages")
    return GetResult(GetStatus.ABSENT, **done)


# -- merges ----------------------------------------------------------------------


def certified_prefix(lsm: LsmState) -> list[int]:
    bids = []
    for p in lsm.levels[0]:
        if p.origin not in lsm.l0_proofs:
            break
        bids.append(p.origin)
    return bids


def plan_merge(lsm: LsmState) -> Optional[int]:
    """Level whose pages should merge into the next one, deepest first."""
    for level in range(lsm.n_levels - 2, 0, -1):
        if len(lsm.levels[level]) > lsm.thresholds[level]:
            return level
    if len(certified_prefix(lsm)) > lsm.thresholds[0]:
        return 0
    return None


def merge_inputs(lsm: LsmState, level: int):
    """(blocks, upper, lower, roots) for a merge of ``level`` into ``level + 1``."""
    if level == 0:
        blocks = tuple((lsm.l0_blocks[b], lsm.l0_proofs[b]) for b in certified_prefix(lsm))
        upper: tuple[Page, ...] = ()
        roots = (lsm.level_roots[0],)
    else:
        blocks = ()
        upper = tuple(lsm.levels[level])
        roots = (lsm.level_roots[level - 1], lsm.level_roots[level])
    return blocks, upper, tuple(lsm.levels[level + 1]), roots


def merge_source_entries(request: MergeRequest) -> list[PageEntry]:
    entries: list[PageEntry] = []
    for block, _ in request.blocks:
        entries.extend(l0_page(block).entries)
    for page in request.upper:
        entries.extend(page.entries)
    for page in request.lower:
        entries.extend(page.entries)
    return entries


def apply_merge(lsm: LsmState, request: MergeRequest, response: MergeResponse) -> None:
    level = request.level
    if level == 0:
        merged = {block.bid for block, _ in request.blocks}
        lsm.set_level(0, [p for p in lsm.levels[0] if p.origin not in merged])
        for bid in merged:
            lsm.l0_blocks.pop(bid, None)
            lsm.l0_proofs.pop(bid, None)
    else:
        lsm.set_level(level, [])
    lsm.set_level(level + 1, list(response.pages))
    for lr in response.level_roots:
        lsm.level_roots[lr.level - 1] = lr
    lsm.global_root = response.global_root


def empty_roots(n_levels: int) -> list[LevelRoot]:
    return [LevelRoot(level, EMPTY_DIGEST, 0) for level in range(1, n_levels)]

