"""Golden vectors for the hash, signature and wire layers.

Published SHA-256 and Ed25519 test vectors pin the primitives; a fixed set
of sample messages pins the canonical wire encoding byte for byte.
"""
from __future__ import annotations

from pathlib import Path

from . import crypto, wire
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
    GetRequest,
    GossipMsg,
    LogData,
    NoOp,
    Put,
    ReadRequest,
    ReadResponse,
    ReadStatus,
    Reason,
    Verdict,
    client,
    cloud,
    edge,
)

# (message, digest) pairs from FIPS 180-2 / NIST examples
SHA256_VECTORS = [
    (b"", "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"),
    (b"abc", "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"),
    (
        b"abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq",
        "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1",
    ),
    (
        b"abcdefghbcdefghicdefghijdefghijkefghijklfghijklmghijklmnhijklmno"
        b"ijklmnopjklmnopqklmnopqrlmnopqrsmnopqrstnopqrstu",
        "cf5b16a778af8380036ce59e7b0492370b249b11e8f07a51afac45037afee9d1",
    ),
]

# (seed, public key, message, signature) from RFC 8032, test 1
ED25519_VECTORS = [
    (
        "9d61b19deffd5a60ba844af492ec2cc44449c5697b326919703bac031cae7f60",
        "d75a980182b10ab7d54bfed3c964073a0ee172f3daa62325af021a68f707511a",
        "",
        "e5564300c360ac729086e2cc806e828a84877f1eb8e5d974d873e065224901555fb8821590a33bacc61e39701cf9b46bd25bf5f0595bbe24655141438e7a100b",
    ),
]


def sample_messages() -> dict[str, object]:
    """Deterministic, fully signed instances of the core wire messages."""
    c0, c1, e0, cl = client(0), client(1), edge(0), cloud()
    k_c0, k_c1 = crypto.node_keypair(c0), crypto.node_keypair(c1)
    k_e0, k_cl = crypto.node_keypair(e0), crypto.node_keypair(cl)
    e_a = wire.signed(Entry(c0, 0, LogData(b"hello")), k_c0)
    e_b = wire.signed(Entry(c1, 7, Put(42, b"v1")), k_c1)
    e_c = wire.signed(Entry(c0, 1, Batch((LogData(b"x"), Put(2**64 - 1, b"")))), k_c0)
    e_n = wire.signed(Entry(e0, 0, NoOp()), k_e0)
    block = Block(e0, 3, (e_a, e_b, e_c, e_n))
    digest = wire.block_digest(block)
    proof = wire.signed(BlockProof(e0, 3, digest), k_cl)
    read = wire.signed(ReadResponse(e0, 3, 12.5, ReadStatus.PHASE2, block, proof), k_e0)
    return {
        "add_request": AddRequest(e_b),
        "add_response": wire.signed(AddResponse(3, block), k_e0),
        "block_certify": wire.signed(BlockCertify(e0, 3, digest), k_e0),
        "block_proof": BlockProofMsg(proof),
        "read_request": ReadRequest(3, 12.5),
        "read_response": read,
        "read_unavailable": wire.signed(ReadResponse(e0, 9, 12.5, ReadStatus.UNAVAILABLE), k_e0),
        "gossip": wire.signed(GossipMsg(e0, 4, 100.0), k_cl),
        "dispute": DisputeMsg(DisputeKind.READ, c1, wire.encode(read), block),
        "get_request": GetRequest(42),
        "verdict": Verdict(e0, Reason.EQUIVOCATION),
    }


def check_primitives() -> list[str]:
    failures = []
    for msg, want in SHA256_VECTORS:
        if crypto.hash_bytes(msg).hex() != want:
            failures.append(f"sha256({msg[:16]!r}...) mismatch")
    for seed, pk, msg, sig in ED25519_VECTORS:
        kp = crypto.keygen(bytes.fromhex(seed), client(0))
        if kp.public.hex() != pk:
            failures.append("ed25519 public key mismatch")
        if crypto.sign(kp.secret, bytes.fromhex(msg)).hex() != sig:
            failures.append("ed25519 signature mismatch")
        if not crypto.verify(bytes.fromhex(pk), bytes.fromhex(msg), bytes.fromhex(sig)):
            failures.append("ed25519 verify rejected the published signature")
    return failures


def check_samples() -> list[str]:
    failures = []
    for name, msg in sample_messages().items():
        data = wire.encode(msg)
        if wire.decode(data) != msg or wire.encode(wire.decode(data)) != data:
            failures.append(f"{name}: encoding does not round-trip")
    return failures


def check_dir(path) -> tuple[int, list[str]]:
    """Check fixture files: crypto_vectors.txt and wire/<name>.hex."""
    root = Path(path)
    checked, failures = 0, []
    vec = root / "crypto_vectors.txt"
    if vec.exists():
        for lineno, line in enumerate(vec.read_text().splitlines(), 1):
            parts = line.split("#", 1)[0].split()
            if not parts:
                continue
            checked += 1
            if len(parts) <= 2 and parts[0] != "ed25519":
                # hex(input) SP hex(digest); the empty input leaves only the digest
                data = bytes.fromhex(parts[0]) if len(parts) == 2 else b""
                if crypto.hash_bytes(data).hex() != parts[-1]:
                    failures.append(f"{vec.name}:{lineno}: sha256 mismatch")
            elif parts[0] == "ed25519" and len(parts) in (4, 5):
                seed, pk, sig = parts[1], parts[2], parts[-1]
                msg = bytes.fromhex(parts[3]) if len(parts) == 5 else b""
                kp = crypto.keygen(bytes.fromhex(seed), client(0))
                if kp.public.hex() != pk or crypto.sign(kp.secret, msg).hex() != sig:
                    failures.append(f"{vec.name}:{lineno}: ed25519 mismatch")
            else:
                failures.append(f"{vec.name}:{lineno}: unrecognised line")
    samples = sample_messages()
    for hexfile in sorted((root / "wire").glob("*.hex")):
        checked += 1
        data = bytes.fromhex(hexfile.read_text().strip())
        want = samples.get(hexfile.stem)
        if want is None:
            failures.append(f"{hexfile.name}: no sample named {hexfile.stem}")
        elif wire.encode(want) != data:
            failures.append(f"{hexfile.name}: canonical encoding changed")
        elif wire.decode(data) != want:
            failures.append(f"{hexfile.name}: decodes to a different value")
        binfile = hexfile.with_suffix(".bin")
        if binfile.exists() and binfile.read_bytes() != data:
            failures.append(f"{binfile.name}: differs from {hexfile.name}")
    return checked, failures


def write_fixtures(path) -> None:
    """(Re)generate the fixture directory from the built-in vectors."""
    root = Path(path)
    (root / "wire").mkdir(parents=True, exist_ok=True)
    lines = [
        "# <input hex> <sha256 hex>  (empty input: digest only)",
        "# ed25519 <seed> <public> <message hex> <signature>  (empty message omitted)",
    ]
    for msg, digest in SHA256_VECTORS:
        lines.append(f"{msg.hex()} {digest}".strip())
    for seed, pk, msg, sig in ED25519_VECTORS:
        lines.append(" ".join(x for x in ("ed25519", seed, pk, msg, sig) if x))
    (root / "crypto_vectors.txt").write_text("\n".join(lines) + "\n")
    for name, msg in sample_messages().items():
        data = wire.encode(msg)
        (root / "wire" / f"{name}.hex").write_text(data.hex() + "\n")
        (root / "wire" / f"{name}.bin").write_bytes(data)
