"""Symmetric cipher contract and key derivations used by the protocol."""

from __future__ import annotations

import hashlib

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from ..group import RandomSource, random_bytes

KEY_BYTES = 32
NONCE_BYTES = 12


class AuthenticationFailure(Exception):
    """Ciphertext was tampered with or the key is wrong."""


def new_key(rng: RandomSource) -> bytes:
    return random_bytes(KEY_BYTES, rng)


def sym_encrypt(key: bytes, plaintext: bytes, rng: RandomSource) -> bytes:
    """AES-256-GCM; output is nonce || ciphertext || tag."""
    if len(key) != KEY_BYTES:
        raise ValueError("key must be exactly 32 bytes")
    nonce = random_bytes(NONCE_BYTES, rng)
    return nonce + AESGCM(key).encrypt(nonce, plaintext, None)


def sym_decrypt(key: bytes, ciphertext: bytes) -> bytes:
    if len(key) != KEY_BYTES:
        raise ValueError("key must be exactly 32 bytes")
    if len(ciphertext) < NONCE_BYTES + 16:
        raise AuthenticationFailure("ciphertext too short")
    nonce, body = ciphertext[:NONCE_BYTES], ciphertext[NONCE_BYTES:]
    try:
        return AESGCM(key).decrypt(nonce, body, None)
    except InvalidTag:
        raise AuthenticationFailure("authentication failed") from None


def key_from_ciphertext(ms: bytes) -> bytes:
    """MS is variable-length; the key it names is its SHA-256."""
    return hashlib.sha256(b"sharepass/ms-key" + ms).digest()


def key_from_scalar(value: int) -> bytes:
    """Service keys k' live in Z_q so they can be shared; this is the AES key."""
    return hashlib.sha256(b"sharepass/scalar-key" + format(value, "x").encode()).digest()


def password_to_scalar(password: str, q: int) -> int:
    if not password:
        raise ValueError("password must not be empty")
    digest = hashlib.sha256(password.encode("utf-8")).digest()
    return int.from_bytes(digest, "big") % q
