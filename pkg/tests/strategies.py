"""Hypothesis strategies for every domain type and wire message."""
from hypothesis import strategies as st

from wedgechain.model import (
    AddRequest, AddResponse, Batch, Block, BlockCertify, BlockProof, BlockProofMsg, DisputeKind, DisputeMsg, Entry,
    GetProofBundle, GetRequest, GetResponse, GlobalRoot, GossipMsg, Kind, LevelPage, LevelRoot, LogData, MergeRequest,
    MergeResponse, MerklePath, NodeId, NoOp, Page, PageEntry, Put, ReadRequest, ReadResponse, ReadStatus, Reason,
    Verdict,
)

u64 = st.integers(0, 2**64 - 1)
small = st.integers(0, 1000)
times = st.floats(min_value=-1e9, max_value=1e12, allow_nan=False)
digests = st.binary(min_size=32, max_size=32)
sigs = st.one_of(st.just(b""), st.binary(min_size=64, max_size=64))
payloads = st.binary(max_size=40)
nodes = st.builds(NodeId, st.sampled_from(list(Kind)), u64)

simple_ops = st.one_of(st.builds(LogData, payloads), st.builds(Put, u64, payloads))
ops = st.one_of(simple_ops, st.just(NoOp()), st.builds(Batch, st.lists(simple_ops, max_size=3).map(tuple)))
entries = st.builds(Entry, nodes, u64, ops, sigs)
blocks = st.builds(Block, nodes, u64, st.lists(entries, max_size=3).map(tuple))
proofs = st.builds(BlockProof, nodes, u64, digests, sigs)

page_entries = st.builds(PageEntry, u64, payloads, u64, u64)
pages = st.builds(
    Page, small, u64, st.lists(page_entries, max_size=3).map(tuple), u64, u64, times, st.integers(-1, 2**63 - 1)
)
paths = st.builds(MerklePath, u64, st.lists(st.tuples(digests, st.integers(0, 1)), max_size=4).map(tuple))
level_roots = st.builds(LevelRoot, small, digests, u64, sigs)
global_roots = st.builds(GlobalRoot, digests, times, st.integers(-1, 2**63 - 1), sigs)
bundles = st.builds(
    GetProofBundle,
    nodes,
    u64,
    st.lists(st.tuples(blocks, st.none() | proofs), max_size=2).map(tuple),
    st.lists(st.builds(LevelPage, small, pages, paths), max_size=2).map(tuple),
    st.lists(level_roots, max_size=3).map(tuple),
    global_roots,
)

messages = st.one_of(
    st.builds(AddRequest, entries),
    st.builds(AddResponse, u64, blocks, sigs),
    st.builds(BlockCertify, nodes, u64, digests, sigs),
    st.builds(BlockProofMsg, proofs),
    st.builds(ReadRequest, u64, times),
    st.builds(ReadResponse, nodes, u64, times, st.sampled_from(list(ReadStatus)), st.none() | blocks, st.none() | proofs, sigs),
    st.builds(GossipMsg, nodes, u64, times, sigs),
    st.builds(DisputeMsg, st.sampled_from(list(DisputeKind)), nodes, st.binary(max_size=64), st.none() | blocks),
    st.builds(GetRequest, u64),
    st.builds(GetResponse, bundles, sigs),
    st.builds(
        MergeRequest, nodes, u64, small,
        st.lists(st.tuples(blocks, proofs), max_size=2).map(tuple),
        st.lists(pages, max_size=2).map(tuple),
        st.lists(pages, max_size=2).map(tuple),
        st.lists(level_roots, max_size=2).map(tuple),
        sigs,
    ),
    st.builds(
        MergeResponse, nodes, u64, small, st.lists(pages, max_size=2).map(tuple),
        st.lists(level_roots, max_size=2).map(tuple), global_roots, sigs,
    ),
    st.builds(Verdict, nodes, st.sampled_from(list(Reason))),
)
