import pytest

from wedgechain import wire
from wedgechain.crypto import KeyDirectory, node_keypair
from wedgechain.edge import EdgeNode
from wedgechain.lsmerkle import empty_roots
from wedgechain.model import (
    AddRequest, AddResponse, BlockCertify, BlockProof, BlockProofMsg, Entry, GetRequest, GetResponse, GlobalRoot,
    LogData, MergeResponse, ReadRequest, ReadResponse, ReadStatus, client,
)

from cluster import C0, C1, C2, CL, E0

CLIENTS = [client(i) for i in range(120)]


def make_edge(batch_size=100, **kw):
    directory = KeyDirectory([E0, CL, *CLIENTS])
    return EdgeNode(
        E0, CL, directory, batch_size=batch_size, thresholds=(2, 2, 4),
        level_roots=empty_roots(3), global_root=GlobalRoot(b"\0" * 32, 0.0, -1), **kw,
    )


def add(c, seq, op=None):
    return AddRequest(wire.signed(Entry(c, seq, op or LogData(b"p%d" % seq)), node_keypair(c)))


def proof_for(edge, bid):
    return BlockProofMsg(wire.signed(BlockProof(E0, bid, wire.block_digest(edge.log[bid])), node_keypair(CL)))


def test_batch_fills_at_batch_size():
    e = make_edge(100)
    for i in range(99):
        assert e.on_message(CLIENTS[i], add(CLIENTS[i], 0), 0.0) == []
    assert len(e.buffer) == 99
    out = e.on_message(CLIENTS[99], add(CLIENTS[99], 0), 0.0)
    responses = [(d, m) for d, m in out if isinstance(m, AddResponse)]
    certs = [(d, m) for d, m in out if isinstance(m, BlockCertify)]
    assert sorted(d for d, _ in responses) == sorted(CLIENTS[:100])
    assert certs == [(CL, certs[0][1])]
    assert certs[0][1].digest == wire.block_digest(e.log[0])
    assert e.buffer == [] and e.next_bid == 1
    assert e.invariant_violations() == []


def test_one_response_per_contributing_client():
    e = make_edge(3)
    e.on_message(C0, add(C0, 0), 0.0)
    e.on_message(C0, add(C0, 1), 0.0)
    out = e.on_message(C1, add(C1, 0), 0.0)
    assert [d for d, m in out if isinstance(m, AddResponse)] == [C0, C1]


def test_bad_signature_and_duplicates_are_dropped():
    e = make_edge(2)
    req = add(C0, 0)
    forged = AddRequest(Entry(C0, 1, LogData(b"x"), req.entry.client_sig))
    assert e.on_message(C0, forged, 0.0) == []
    assert e.buffer == [] and e.rejected == 1
    e.on_message(C0, req, 0.0)
    assert e.on_message(C0, req, 0.0) == []
    assert len(e.buffer) == 1
    # an entry claiming to come from an unknown client
    assert e.on_message(client(999), add(client(999), 0), 0.0) == []


def test_seal_assigns_gapless_bids_and_empty_seal_is_noop():
    e = make_edge(10)
    assert e.seal_block(0.0) == (None, [])
    e.on_message(C0, add(C0, 0), 0.0)
    b0, _ = e.seal_block(0.0)
    e.on_message(C0, add(C0, 1), 0.0)
    b1, _ = e.seal_block(0.0)
    assert (b0.bid, b1.bid) == (0, 1)
    assert e.invariant_violations() == []


def test_certify_size_is_independent_of_payload():
    sizes = set()
    for n in (100, 1000, 100_000):
        e = make_edge(2)
        e.on_message(C0, add(C0, 0, LogData(b"a" * n)), 0.0)
        out = e.on_message(C1, add(C1, 0, LogData(b"b" * n)), 0.0)
        sizes |= {wire.message_size(m) for _, m in out if isinstance(m, BlockCertify)}
    assert sizes == {118}


def test_read_cases():
    e = make_edge(1)
    for i in range(3):
        e.on_message(C0, add(C0, i), 0.0)
    e.on_message(CL, proof_for(e, 0), 1.0)
    pub = node_keypair(E0).public
    r = e.handle_read(ReadRequest(5, 2.0), C1, 2.0)
    assert r.status == ReadStatus.UNAVAILABLE and wire.check_sig(r, pub)
    r = e.handle_read(ReadRequest(0, 2.0), C1, 2.0)
    assert r.status == ReadStatus.PHASE2 and r.proof.digest == wire.block_digest(r.block)
    r = e.handle_read(ReadRequest(2, 2.0), C1, 2.0)
    assert r.status == ReadStatus.PHASE1 and r.proof is None and C1 in e.subscribers[2]
    # a request stamped in the future is not answered
    assert e.on_message(C1, ReadRequest(2, 50.0), 2.0) == []


def test_proof_fanout_is_idempotent_and_checked():
    e = make_edge(2)
    e.on_message(C0, add(C0, 0), 0.0)
    e.on_message(C1, add(C1, 0), 0.0)
    e.handle_read(ReadRequest(0, 0.0), C2, 0.0)
    p = proof_for(e, 0)
    out = e.on_message(CL, p, 1.0)
    assert sorted(d for d, m in out if isinstance(m, BlockProofMsg)) == [C0, C1, C2]
    assert e.on_message(CL, p, 1.0) == []
    assert 0 not in e.pending_certify
    # a proof not signed by the cloud is dropped
    e.on_message(C0, add(C0, 1), 0.0)
    e.on_message(C1, add(C1, 1), 0.0)
    bad = BlockProofMsg(wire.signed(BlockProof(E0, 1, wire.block_digest(e.log[1])), node_keypair(C0)))
    assert e.on_message(CL, bad, 1.0) == [] and 1 not in e.proofs


def test_mismatched_proof_trips_the_honest_edge_assertion():
    e = make_edge(1)
    e.on_message(C0, add(C0, 0), 0.0)
    wrong = BlockProofMsg(wire.signed(BlockProof(E0, 0, b"\1" * 32), node_keypair(CL)))
    with pytest.raises(AssertionError):
        e.on_message(CL, wrong, 1.0)


def test_sync_certify_holds_responses_until_the_proof():
    e = make_edge(1, sync_certify=True)
    out = e.on_message(C0, add(C0, 0), 0.0)
    assert [type(m) for _, m in out] == [BlockCertify]
    out = e.on_message(CL, proof_for(e, 0), 5.0)
    assert [type(m) for _, m in out] == [AddResponse, BlockProofMsg]


def test_flush_noop_and_retry_timers():
    e = make_edge(10, flush_interval_ms=5.0, noop_interval_ms=50.0, certify_retry_ms=20.0)
    assert e.next_timer() == 50.0
    e.on_message(C0, add(C0, 0), 1.0)
    assert e.next_timer() == 6.0
    out = e.on_timer(6.0)
    assert [type(m) for _, m in out] == [AddResponse, BlockCertify]
    assert e.next_timer() == 26.0
    out = e.on_timer(26.0)
    assert [type(m) for _, m in out] == [BlockCertify]
    e.on_message(CL, proof_for(e, 0), 27.0)
    out = e.on_timer(56.0)
    assert [type(m) for _, m in out] == [BlockCertify]
    assert e.log[1].entries[0].client == E0


def test_get_on_empty_store_and_after_put(cluster):
    r = cluster.edge.handle_get(GetRequest(5), C0, 0.0)
    assert isinstance(r, GetResponse) and r.bundle.l0 == () and r.bundle.pages == ()
    cluster.put(C0, 5, b"v")
    cluster.put(C1, 6, b"w")
    r = cluster.edge.handle_get(GetRequest(5), C0, 0.0)
    assert r.bundle.value_page is None and len(r.bundle.l0) == 1 and r.bundle.l0[0][1] is not None


def test_merge_response_for_unknown_id_is_ignored(cluster):
    for i in range(6):
        cluster.put(C0, i, b"x")
    lsm = cluster.edge.lsm
    before = (list(lsm.levels[1]), lsm.global_root)
    bogus = wire.signed(MergeResponse(E0, 99, 0, (), (), lsm.global_root), node_keypair(CL))
    assert cluster.edge.on_message(CL, bogus, 0.0) == []
    assert (list(lsm.levels[1]), lsm.global_root) == before


def test_merge_replaces_l0_and_updates_roots(cluster):
    for i in range(6):
        cluster.put(C0, i, b"x")
    lsm = cluster.edge.lsm
    assert lsm.levels[0] == [] and lsm.global_root.watermark == 2
    assert lsm.merge_in_flight is None
    assert sum(len(p.entries) for lvl in lsm.levels[1:] for p in lvl) == 6


def test_honest_edge_never_equivocates(cluster):
    for i in range(20):
        cluster.put(C0 if i % 2 else C1, i % 7, b"%d" % i)
    seen = {}
    for _, _, m in cluster.log:
        if isinstance(m, (AddResponse, ReadResponse)) and getattr(m, "block", None) is not None:
            assert seen.setdefault(m.block.bid, m.block) == m.block
    assert cluster.edge.invariant_violations() == []
