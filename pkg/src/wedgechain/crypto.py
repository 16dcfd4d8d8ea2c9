"""SHA-256 content hashing and Ed25519 message signatures.

Ed25519 is a deterministic Schnorr-family scheme, so identical inputs
always produce identical signatures and simulation traces stay
byte-reproducible.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .model import NodeId

DIGEST_SIZE = 32
SIGNATURE_SIZE = 64
EMPTY_DIGEST = hashlib.sha256(b"").digest()

_RAW = serialization.Encoding.Raw


def hash_bytes(data: bytes) -> bytes:
    """SHA-256 of ``data`` (32 octets)."""
    return hashlib.sha256(data).digest()


@dataclass(frozen=True)
class KeyPair:
    public: bytes
    secret: bytes
    owner: NodeId

    def sign(self, message: bytes) -> bytes:
        return sign(self.secret, message)


def keygen(seed: bytes, owner: NodeId) -> KeyPair:
    if len(seed) != 32:
        raise ValueError("seed must be 32 octets")
    sk = Ed25519PrivateKey.from_private_bytes(seed)
    public = sk.public_key().public_bytes(_RAW, serialization.PublicFormat.Raw)
    return KeyPair(public=public, secret=bytes(seed), owner=owner)


@lru_cache(maxsize=4096)
def _private(secret: bytes) -> Ed25519PrivateKey:
    return Ed25519PrivateKey.from_private_bytes(secret)


@lru_cache(maxsize=4096)
def _public(public: bytes) -> Ed25519PublicKey | None:
    try:
        return Ed25519PublicKey.from_public_bytes(public)
    except ValueError:
        return None


def sign(secret: bytes, message: bytes) -> bytes:
    return _private(secret).sign(message)


def verify(public: bytes, message: bytes, sig: bytes) -> bool:
    if len(sig) != SIGNATURE_SIZE:
        return False
    return _verify(bytes(public), bytes(message), bytes(sig))


# A signed object usually reaches several simulated nodes in one process;
# verification is a pure function of its inputs, so repeats are memoised.
@lru_cache(maxsize=4096)
def _verify(public: bytes, message: bytes, sig: bytes) -> bool:
    key = _public(public)
    if key is None:
        return False
    try:
        key.verify(sig, message)
    except InvalidSignature:
        return False
    return True


@lru_cache(maxsize=None)
def node_keypair(node: NodeId) -> KeyPair:
    """Stable per-node key derived from the node identity alone."""
    seed = hash_bytes(b"wedgechain/node-key/%d/%d" % (int(node.kind), node.id))
    return keygen(seed, node)


class KeyDirectory:
    """Public keys of every node in a scenario (stands in for a PKI)."""

    def __init__(self, nodes=()):
        self._keys: dict[NodeId, bytes] = {}
        for node in nodes:
            self.register(node)

    def register(self, node: NodeId, public: bytes | None = None) -> None:
        self._keys[node] = public if public is not None else node_keypair(node).public

    def public(self, node: NodeId) -> bytes | None:
        return self._keys.get(node)

    def __contains__(self, node: NodeId) -> bool:
        return node in self._keys
