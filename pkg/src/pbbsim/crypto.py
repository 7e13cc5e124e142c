"""Primitives shared by the board, the client protocol and the mix layer.

Every function is deterministic given its inputs; anything that needs fresh
randomness takes a seeded ``random.Random`` so whole simulations replay
bit-for-bit.

* tag commitments: SHA-256 over a domain-separated preimage
* ratchet KDF: HMAC-SHA256 keyed by the current chain key
* symmetric AEAD: AES-SIV (deterministic, nonce-free, authenticated)
* mixer layers: X25519 ephemeral-static ECDH + HKDF + ChaCha20-Poly1305
"""

from __future__ import annotations

import hashlib
import hmac
import random
from dataclasses import dataclass

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import AESSIV, ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.hkdf import HKDF
from cryptography.hazmat.primitives.serialization import (
    Encoding,
    NoEncryption,
    PrivateFormat,
    PublicFormat,
)

TOKEN_LEN = 32
DIGEST_LEN = 32
KEY_LEN = 32
CREDIT_TOKEN_LEN = 16

_TAG_DOMAIN = b"pbbsim/tag/v1"
_KDF_LABEL = b"pbbsim/ratchet/v1"
_LAYER_INFO = b"pbbsim/layer/v1"
_ZERO_NONCE = bytes(12)


class DecryptionError(Exception):
    """Authenticated decryption rejected the ciphertext (wrong key or tampering)."""


def random_bytes(rng: random.Random, n: int) -> bytes:
    return rng.getrandbits(8 * n).to_bytes(n, "big")


def new_preimage(rng: random.Random) -> bytes:
    return random_bytes(rng, TOKEN_LEN)


def new_key(rng: random.Random) -> bytes:
    return random_bytes(rng, KEY_LEN)


def _check_len(name: str, value: bytes, length: int) -> None:
    if not isinstance(value, (bytes, bytearray)) or len(value) != length:
        raise ValueError(f"{name} must be {length} bytes")


def commit(preimage: bytes) -> bytes:
    """Return the tag commitment stored on the board for ``preimage``."""
    _check_len("preimage", preimage, TOKEN_LEN)
    return hashlib.sha256(_TAG_DOMAIN + bytes(preimage)).digest()


def verify(preimage: bytes, tag: bytes) -> bool:
    if len(preimage) != TOKEN_LEN or len(tag) != DIGEST_LEN:
        return False
    return hmac.compare_digest(commit(preimage), bytes(tag))


def kdf(key: bytes) -> bytes:
    """One ratchet step: derive the next chain key from the current one."""
    _check_len("key", key, KEY_LEN)
    return hmac.new(bytes(key), _KDF_LABEL, hashlib.sha256).digest()


def sym_encrypt(key: bytes, plaintext: bytes) -> bytes:
    _check_len("key", key, KEY_LEN)
    return AESSIV(bytes(key)).encrypt(bytes(plaintext), None)


def sym_decrypt(key: bytes, ciphertext: bytes) -> bytes:
    _check_len("key", key, KEY_LEN)
    try:
        return AESSIV(bytes(key)).decrypt(bytes(ciphertext), None)
    except (InvalidTag, ValueError) as exc:
        raise DecryptionError("symmetric decryption failed") from exc


@dataclass(frozen=True)
class MixKeyPair:
    owner: int
    public: bytes
    private: bytes = b""

    @classmethod
    def generate(cls, owner: int, rng: random.Random) -> "MixKeyPair":
        sk = X25519PrivateKey.from_private_bytes(random_bytes(rng, 32))
        return cls(
            owner=owner,
            public=sk.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw),
            private=sk.private_bytes(Encoding.Raw, PrivateFormat.Raw, NoEncryption()),
        )

    def __repr__(self) -> str:
        return f"MixKeyPair(owner={self.owner}, public={self.public.hex()[:16]}...)"


def _layer_key(shared: bytes, eph_pub: bytes, recipient_pub: bytes) -> bytes:
    return HKDF(
        algorithm=hashes.SHA256(),
        length=32,
        salt=eph_pub + recipient_pub,
        info=_LAYER_INFO,
    ).derive(shared)


def layer_encrypt(public: bytes, inner: bytes, rng: random.Random) -> bytes:
    """Seal ``inner`` to one mixer's public key.

    Output layout: ``[32-byte ephemeral public key][ciphertext+16-byte tag]``.
    """
    recipient = X25519PublicKey.from_public_bytes(public)
    eph = X25519PrivateKey.from_private_bytes(random_bytes(rng, 32))
    eph_pub = eph.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
    key = _layer_key(eph.exchange(recipient), eph_pub, bytes(public))
    return eph_pub + ChaCha20Poly1305(key).encrypt(_ZERO_NONCE, bytes(inner), None)


def layer_decrypt(private: bytes, layer: bytes) -> bytes:
    if len(layer) < 32 + 16:
        raise DecryptionError("layer too short")
    sk = X25519PrivateKey.from_private_bytes(private)
    own_pub = sk.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
    eph_pub = bytes(layer[:32])
    try:
        shared = sk.exchange(X25519PublicKey.from_public_bytes(eph_pub))
    except ValueError as exc:
        # all-zero shared secret from a low-order point
        raise DecryptionError("invalid ephemeral key") from exc
    key = _layer_key(shared, eph_pub, own_pub)
    try:
        return ChaCha20Poly1305(key).decrypt(_ZERO_NONCE, bytes(layer[32:]), None)
    except InvalidTag as exc:
        raise DecryptionError("layer decryption failed") from exc
