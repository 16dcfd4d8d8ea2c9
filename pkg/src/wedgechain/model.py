"""Domain types shared by every node and the wire codec.

All values are immutable. Byte layouts live in :mod:`wedgechain.wire`.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import ClassVar, NamedTuple, Optional, Union

KEY_MAX = 2**64 - 1  # the "infinity" bound of the last page in a level
NO_WATERMARK = -1  # no L0 block has been merged yet


class Kind(enum.IntEnum):
    CLIENT = 0
    EDGE = 1
    CLOUD = 2


@dataclass(frozen=True, order=True)
class NodeId:
    kind: Kind
    id: int

    def __str__(self) -> str:
        return f"{self.kind.name.lower()}{self.id}"

    @classmethod
    def parse(cls, text: str) -> "NodeId":
        for kind in Kind:
            name = kind.name.lower()
            if text.startswith(name) and text[len(name):].isdigit():
                return cls(kind, int(text[len(name):]))
        raise ValueError(f"not a node id: {text!r}")


def client(i: int) -> NodeId:
    return NodeId(Kind.CLIENT, i)


def edge(i: int) -> NodeId:
    return NodeId(Kind.EDGE, i)


def cloud(i: int = 0) -> NodeId:
    return NodeId(Kind.CLOUD, i)


# -- operations carried by entries -------------------------------------------


@dataclass(frozen=True)
class LogData:
    payload: bytes


@dataclass(frozen=True)
class Put:
    key: int
    value: bytes


@dataclass(frozen=True)
class NoOp:
    pass


@dataclass(frozen=True)
class Batch:
    """Client-side batch of log/put operations signed as one entry."""

    ops: tuple[Union[LogData, Put], ...]


Op = Union[LogData, Put, NoOp, Batch]


def flatten_ops(op: Op) -> tuple:
    return op.ops if isinstance(op, Batch) else (op,)


@dataclass(frozen=True)
class Entry:
    client: NodeId
    seq: int
    op: Op
    client_sig: bytes = b""

    SIG_FIELD: ClassVar[str] = "client_sig"

    @property
    def ident(self) -> tuple[NodeId, int]:
        return (self.client, self.seq)

    @property
    def op_count(self) -> int:
        return len(self.op.ops) if isinstance(self.op, Batch) else 1


@dataclass(frozen=True)
class Block:
    edge: NodeId
    bid: int
    entries: tuple[Entry, ...]

    def contributors(self) -> list[NodeId]:
        seen: dict[NodeId, None] = {}
        for e in self.entries:
            seen.setdefault(e.client, None)
        return list(seen)

    def ops(self):
        """Yield ``(index, op)`` over the flattened operations of the block."""
        i = 0
        for e in self.entries:
            for op in flatten_ops(e.op):
                yield i, op
                i += 1


@dataclass(frozen=True)
class BlockProof:
    edge: NodeId
    bid: int
    digest: bytes
    cloud_sig: bytes = b""

    SIG_FIELD: ClassVar[str] = "cloud_sig"


# -- LSMerkle values -----------------------------------------------------------


class PageEntry(NamedTuple):
    key: int
    value: bytes
    bid: int
    index: int

    @property
    def version(self) -> tuple[int, int]:
        return (self.bid, self.index)


@dataclass(frozen=True)
class Page:
    level: int
    page_id: int
    entries: tuple[PageEntry, ...]
    min: int
    max: int
    created: float
    origin: int = -1  # source BlockId for L0 pages

    def covers(self, key: int) -> bool:
        return self.min <= key <= self.max

    def find(self, key: int) -> Optional[PageEntry]:
        best = None
        for e in self.entries:
            if e.key == key and (best is None or e.version > best.version):
                best = e
        return best


@dataclass(frozen=True)
class MerklePath:
    leaf_index: int
    siblings: tuple[tuple[bytes, int], ...]  # (digest, side); side 0 = sibling on the left


@dataclass(frozen=True)
class LevelRoot:
    level: int
    root: bytes
    page_count: int
    cloud_sig: bytes = b""

    SIG_FIELD: ClassVar[str] = "cloud_sig"


@dataclass(frozen=True)
class GlobalRoot:
    hash: bytes
    timestamp: float
    watermark: int
    cloud_sig: bytes = b""

    SIG_FIELD: ClassVar[str] = "cloud_sig"


@dataclass(frozen=True)
class LevelPage:
    level: int
    page: Page
    path: MerklePath


@dataclass(frozen=True)
class GetProofBundle:
    edge: NodeId
    key: int
    l0: tuple[tuple[Block, Optional[BlockProof]], ...]
    pages: tuple[LevelPage, ...]
    level_roots: tuple[LevelRoot, ...]
    global_root: GlobalRoot

    @property
    def value_page(self) -> Optional[LevelPage]:
        if self.pages and self.pages[-1].page.find(self.key) is not None:
            return self.pages[-1]
        return None


# -- wire messages -------------------------------------------------------------


class ReadStatus(enum.IntEnum):
    UNAVAILABLE = 0
    PHASE1 = 1
    PHASE2 = 2


class DisputeKind(enum.IntEnum):
    ADD = 0
    READ = 1
    OMISSION = 2
    GET = 3


class Reason(enum.IntEnum):
    NONE = 0
    EQUIVOCATION = 1
    LIED = 2
    OMISSION = 3
    BAD_MERGE = 4
    INVALID_EVIDENCE = 5
    UNRESPONSIVE = 6


@dataclass(frozen=True)
class AddRequest:
    entry: Entry


@dataclass(frozen=True)
class AddResponse:
    bid: int
    block: Block
    edge_sig: bytes = b""

    SIG_FIELD: ClassVar[str] = "edge_sig"


@dataclass(frozen=True)
class BlockCertify:
    edge: NodeId
    bid: int
    digest: bytes
    edge_sig: bytes = b""

    SIG_FIELD: ClassVar[str] = "edge_sig"


@dataclass(frozen=True)
class BlockProofMsg:
    proof: BlockProof


@dataclass(frozen=True)
class ReadRequest:
    bid: int
    asof: float


@dataclass(frozen=True)
class ReadResponse:
    edge: NodeId
    bid: int
    asof: float
    status: ReadStatus
    block: Optional[Block] = None
    proof: Optional[BlockProof] = None
    edge_sig: bytes = b""

    SIG_FIELD: ClassVar[str] = "edge_sig"


@dataclass(frozen=True)
class GossipMsg:
    edge: NodeId
    log_size: int
    timestamp: float
    cloud_sig: bytes = b""

    SIG_FIELD: ClassVar[str] = "cloud_sig"


@dataclass(frozen=True)
class DisputeMsg:
    kind: DisputeKind
    disputant: NodeId
    evidence: bytes  # canonical encoding of an edge-signed response
    block: Optional[Block] = None  # certified block supplied by the disputant, if any


@dataclass(frozen=True)
class GetRequest:
    key: int


@dataclass(frozen=True)
class GetResponse:
    bundle: GetProofBundle
    edge_sig: bytes = b""

    SIG_FIELD: ClassVar[str] = "edge_sig"


@dataclass(frozen=True)
class MergeRequest:
    edge: NodeId
    merge_id: int
    level: int
    blocks: tuple[tuple[Block, BlockProof], ...]  # L0 sources (level 0 merges)
    upper: tuple[Page, ...]  # pages of level ``level`` (level >= 1 merges)
    lower: tuple[Page, ...]  # pages of level ``level + 1``
    roots: tuple[LevelRoot, ...]
    edge_sig: bytes = b""

    SIG_FIELD: ClassVar[str] = "edge_sig"


@dataclass(frozen=True)
class MergeResponse:
    edge: NodeId
    merge_id: int
    level: int
    pages: tuple[Page, ...]  # new contents of level ``level + 1``
    level_roots: tuple[LevelRoot, ...]
    global_root: GlobalRoot
    cloud_sig: bytes = b""

    SIG_FIELD: ClassVar[str] = "cloud_sig"


@dataclass(frozen=True)
class Verdict:
    edge: NodeId
    reason: Reason


WireMessage = Union[
    AddRequest,
    AddResponse,
    BlockCertify,
    BlockProofMsg,
    ReadRequest,
    ReadResponse,
    GossipMsg,
    DisputeMsg,
    GetRequest,
    GetResponse,
    MergeRequest,
    MergeResponse,
    Verdict,
]
