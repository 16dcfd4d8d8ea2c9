"""Canonical binary encoding of every domain value and wire message.

Layout rules (see WIRE.md for the full table): integers are fixed-width
big-endian, variable-length fields carry a u32 length prefix, optional
fields a one-octet presence flag, and messages a one-octet type tag.
Decoding is strict: trailing octets, unknown tags and out-of-range flags
are rejected, so ``encode(decode(b)) == b`` for every accepted ``b``.
"""
from __future__ import annotations

import dataclasses
import math
import struct
from typing import Any, Callable

from . import crypto
from .model import (
    AddRequest,
    AddResponse,
    Batch,
    Block,
    BlockCertify,
    BlockProof,
    BlockProofMsg,
    DisputeKind,
    DisputeMsg,
    Entry,
    GetProofBundle,
    GetRequest,
    GetResponse,
    GlobalRoot,
    GossipMsg,
    Kind,
    LevelPage,
    LevelRoot,
    LogData,
    MergeRequest,
    MergeResponse,
    MerklePath,
    NodeId,
    NoOp,
    Page,
    PageEntry,
    Put,
    ReadRequest,
    ReadResponse,
    ReadStatus,
    Reason,
    Verdict,
)


class DecodeError(ValueError):
    pass


class _Reader:
    __slots__ = ("data", "pos")

    def __init__(self, data: bytes):
        self.data = memoryview(bytes(data))
        self.pos = 0

    def take(self, n: int) -> bytes:
        end = self.pos + n
        if n < 0 or end > len(self.data):
            raise DecodeError("truncated input")
        out = self.data[self.pos:end].tobytes()
        self.pos = end
        return out

    def done(self) -> bool:
        return self.pos == len(self.data)


_U8 = struct.Struct(">B")
_U32 = struct.Struct(">I")
_U64 = struct.Struct(">Q")
_I64 = struct.Struct(">q")
_F64 = struct.Struct(">d")


class Codec:
    """A pair of (write, read) functions for one value shape."""

    def __init__(self, enc: Callable[[list, Any], None], dec: Callable[[_Reader], Any]):
        self.enc = enc
        self.dec = dec


def _fixed(st: struct.Struct, check: Callable[[Any], bool] | None = None) -> Codec:
    def enc(out, v):
        out.append(st.pack(v))

    def dec(r):
        (v,) = st.unpack(r.take(st.size))
        if check is not None and not check(v):
            raise DecodeError(f"invalid value {v!r}")
        return v

    return Codec(enc, dec)


U8 = _fixed(_U8)
U64 = _fixed(_U64)
I64 = _fixed(_I64)
F64 = _fixed(_F64, lambda v: not math.isnan(v))


def _enc_bytes(out, v):
    out.append(_U32.pack(len(v)))
    out.append(bytes(v))


def _dec_bytes(r):
    (n,) = _U32.unpack(r.take(4))
    return r.take(n)


BYTES = Codec(_enc_bytes, _dec_bytes)


def _enc_digest(out, v):
    if len(v) != crypto.DIGEST_SIZE:
        raise ValueError("digest must be 32 octets")
    out.append(bytes(v))


DIGEST = Codec(_enc_digest, lambda r: r.take(crypto.DIGEST_SIZE))


def enum_codec(cls) -> Codec:
    def dec(r):
        v = r.take(1)[0]
        try:
            return cls(v)
        except ValueError:
            raise DecodeError(f"bad {cls.__name__} value {v}") from None

    return Codec(lambda out, v: out.append(_U8.pack(int(v))), dec)


def optional(inner: Codec) -> Codec:
    def enc(out, v):
        if v is None:
            out.append(b"\x00")
        else:
            out.append(b"\x01")
            inner.enc(out, v)

    def dec(r):
        flag = r.take(1)[0]
        if flag == 0:
            return None
        if flag != 1:
            raise DecodeError("bad option flag")
        return inner.dec(r)

    return Codec(enc, dec)


def sequence(inner: Codec) -> Codec:
    def enc(out, v):
        out.append(_U32.pack(len(v)))
        for item in v:
            inner.enc(out, item)

    def dec(r):
        (n,) = _U32.unpack(r.take(4))
        if n > len(r.data) - r.pos:  # every item occupies at least one octet
            raise DecodeError("sequence length exceeds input")
        return tuple(inner.dec(r) for _ in range(n))

    return Codec(enc, dec)


def pair(*parts: Codec) -> Codec:
    def enc(out, v):
        for c, x in zip(parts, v):
            c.enc(out, x)

    return Codec(enc, lambda r: tuple(c.dec(r) for c in parts))


def _enc_node(out, v: NodeId):
    out.append(_U8.pack(int(v.kind)))
    out.append(_U64.pack(v.id))


def _dec_node(r):
    kind = r.take(1)[0]
    if kind > max(Kind):
        raise DecodeError("bad node kind")
    (i,) = _U64.unpack(r.take(8))
    return NodeId(Kind(kind), i)


NODE = Codec(_enc_node, _dec_node)

# Per-class field layouts, filled in below.
_LAYOUT: dict[type, tuple[tuple[str, Codec], ...]] = {}
_CACHED = set()  # immutable values whose encoding is memoised on the instance


def record(cls, *fields: tuple[str, Codec], cached: bool = False) -> Codec:
    _LAYOUT[cls] = fields
    if cached:
        _CACHED.add(cls)

    def enc_fields(out, v):
        for name, c in fields:
            c.enc(out, getattr(v, name))

    if cached:

        def enc(out, v):
            b = v.__dict__.get("_wire")
            if b is None:
                buf: list = []
                enc_fields(buf, v)
                b = b"".join(buf)
                object.__setattr__(v, "_wire", b)
            out.append(b)

    else:
        enc = enc_fields

    def dec(r):
        return cls(**{name: c.dec(r) for name, c in fields})

    codec = Codec(enc, dec)
    _CODECS[cls] = codec
    return codec


_CODECS: dict[type, Codec] = {}


def tagged(variants: dict[int, type]) -> Codec:
    by_type = {cls: tag for tag, cls in variants.items()}

    def enc(out, v):
        tag = by_type[type(v)]
        out.append(_U8.pack(tag))
        _CODECS[type(v)].enc(out, v)

    def dec(r):
        tag = r.take(1)[0]
        cls = variants.get(tag)
        if cls is None:
            raise DecodeError(f"unknown tag {tag}")
        return _CODECS[cls].dec(r)

    return Codec(enc, dec)


# -- entries and blocks --------------------------------------------------------

record(LogData, ("payload", BYTES))
record(Put, ("key", U64), ("value", BYTES))
record(NoOp)
_BATCHABLE = tagged({0: LogData, 1: Put})
record(Batch, ("ops", sequence(_BATCHABLE)), cached=True)
OP = tagged({0: LogData, 1: Put, 2: NoOp, 3: Batch})

ENTRY = record(
    Entry, ("client", NODE), ("seq", U64), ("op", OP), ("client_sig", BYTES), cached=True
)
BLOCK = record(Block, ("edge", NODE), ("bid", U64), ("entries", sequence(ENTRY)), cached=True)
BLOCK_PROOF = record(
    BlockProof, ("edge", NODE), ("bid", U64), ("digest", DIGEST), ("cloud_sig", BYTES)
)

# -- LSMerkle values -----------------------------------------------------------


def _page_entry_dec(r):
    return PageEntry(U64.dec(r), BYTES.dec(r), U64.dec(r), U64.dec(r))


PAGE_ENTRY = Codec(
    lambda out, e: (U64.enc(out, e.key), BYTES.enc(out, e.value), U64.enc(out, e.bid), U64.enc(out, e.index)),
    _page_entry_dec,
)
PAGE = record(
    Page,
    ("level", U64),
    ("page_id", U64),
    ("entries", sequence(PAGE_ENTRY)),
    ("min", U64),
    ("max", U64),
    ("created", F64),
    ("origin", I64),
    cached=True,
)
MERKLE_PATH = record(MerklePath, ("leaf_index", U64), ("siblings", sequence(pair(DIGEST, U8))))
LEVEL_ROOT = record(LevelRoot, ("level", U64), ("root", DIGEST), ("page_count", U64), ("cloud_sig", BYTES))
GLOBAL_ROOT = record(GlobalRoot, ("hash", DIGEST), ("timestamp", F64), ("watermark", I64), ("cloud_sig", BYTES))
LEVEL_PAGE = record(LevelPage, ("level", U64), ("page", PAGE), ("path", MERKLE_PATH))
BUNDLE = record(
    GetProofBundle,
    ("edge", NODE),
    ("key", U64),
    ("l0", sequence(pair(BLOCK, optional(BLOCK_PROOF)))),
    ("pages", sequence(LEVEL_PAGE)),
    ("level_roots", sequence(LEVEL_ROOT)),
    ("global_root", GLOBAL_ROOT),
)

# -- messages ------------------------------------------------------------------

record(AddRequest, ("entry", ENTRY))
record(AddResponse, ("bid", U64), ("block", BLOCK), ("edge_sig", BYTES))
record(BlockCertify, ("edge", NODE), ("bid", U64), ("digest", DIGEST), ("edge_sig", BYTES))
record(BlockProofMsg, ("proof", BLOCK_PROOF))
record(ReadRequest, ("bid", U64), ("asof", F64))
record(
    ReadResponse,
    ("edge", NODE),
    ("bid", U64),
    ("asof", F64),
    ("status", enum_codec(ReadStatus)),
    ("block", optional(BLOCK)),
    ("proof", optional(BLOCK_PROOF)),
    ("edge_sig", BYTES),
)
record(GossipMsg, ("edge", NODE), ("log_size", U64), ("timestamp", F64), ("cloud_sig", BYTES))
record(
    DisputeMsg,
    ("kind", enum_codec(DisputeKind)),
    ("disputant", NODE),
    ("evidence", BYTES),
    ("block", optional(BLOCK)),
)
record(GetRequest, ("key", U64))
record(GetResponse, ("bundle", BUNDLE), ("edge_sig", BYTES))
record(
    MergeRequest,
    ("edge", NODE),
    ("merge_id", U64),
    ("level", U64),
    ("blocks", sequence(pair(BLOCK, BLOCK_PROOF))),
    ("upper", sequence(PAGE)),
    ("lower", sequence(PAGE)),
    ("roots", sequence(LEVEL_ROOT)),
    ("edge_sig", BYTES),
)
record(
    MergeResponse,
    ("edge", NODE),
    ("merge_id", U64),
    ("level", U64),
    ("pages", sequence(PAGE)),
    ("level_roots", sequence(LEVEL_ROOT)),
    ("global_root", GLOBAL_ROOT),
    ("cloud_sig", BYTES),
)
record(Verdict, ("edge", NODE), ("reason", enum_codec(Reason)))

MESSAGE_TAGS: dict[int, type] = {
    1: AddRequest,
    2: AddResponse,
    3: BlockCertify,
    4: BlockProofMsg,
    5: ReadRequest,
    6: ReadResponse,
    7: GossipMsg,
    8: DisputeMsg,
    9: GetRequest,
    10: GetResponse,
    11: MergeRequest,
    12: MergeResponse,
    13: Verdict,
}
MESSAGE = tagged(MESSAGE_TAGS)
_MESSAGE_TYPES = frozenset(MESSAGE_TAGS.values())


def encode(value) -> bytes:
    """Canonical encoding. Wire messages carry their one-octet type tag."""
    out: list = []
    if type(value) in _MESSAGE_TYPES:
        MESSAGE.enc(out, value)
    elif type(value) in _CODECS:
        _CODECS[type(value)].enc(out, value)
    else:
        raise TypeError(f"no canonical encoding for {type(value).__name__}")
    return b"".join(out)


def decode(data: bytes, cls: type | None = None):
    """Inverse of :func:`encode`; ``cls=None`` decodes a tagged wire message."""
    r = _Reader(data)
    try:
        value = MESSAGE.dec(r) if cls is None else _CODECS[cls].dec(r)
    except (struct.error, KeyError, TypeError) as exc:
        raise DecodeError(str(exc)) from None
    if not r.done():
        raise DecodeError("trailing octets")
    return value


def decode_message(data: bytes):
    return decode(data, None)


def message_size(msg) -> int:
    return len(encode(msg))


def block_digest(block: Block) -> bytes:
    d = block.__dict__.get("_digest")
    if d is None:
        d = crypto.hash_bytes(encode(block))
        object.__setattr__(block, "_digest", d)
    return d


def page_hash(page: Page) -> bytes:
    return crypto.hash_bytes(encode(page))


# -- signatures ----------------------------------------------------------------


def signing_bytes(value, **context) -> bytes:
    """Octets covered by ``value``'s signature: a type-name domain prefix
    followed by the canonical encoding with the signature field emptied.

    ``context`` adds bound fields that are not stored in the value itself
    (LevelRoot and GlobalRoot bind the edge they describe).
    """
    blank = dataclasses.replace(value, **{value.SIG_FIELD: b""})
    out = [b"wedgechain/", type(value).__name__.encode(), b"\x00"]
    for name in sorted(context):
        ctx = context[name]
        out.append(encode_node(ctx) if isinstance(ctx, NodeId) else bytes(ctx))
    out.append(encode(blank))
    return b"".join(out)


def encode_node(node: NodeId) -> bytes:
    out: list = []
    NODE.enc(out, node)
    return b"".join(out)


def signed(value, keypair: crypto.KeyPair, **context):
    sig = keypair.sign(signing_bytes(value, **context))
    return dataclasses.replace(value, **{value.SIG_FIELD: sig})


def check_sig(value, public: bytes | None, **context) -> bool:
    if public is None:
        return False
    return crypto.verify(public, signing_bytes(value, **context), getattr(value, value.SIG_FIELD))
