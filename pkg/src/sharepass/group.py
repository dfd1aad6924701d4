"""Prime-order subgroup arithmetic and public parameter handling.

All group elements live in Z_p^*, all exponents and shares in Z_q, where
q | p - 1 and g, h generate the order-q subgroup.  ``h`` is derived as
``g^a mod p`` for a setup-time secret ``a`` that production code discards.
"""

from __future__ import annotations

import hashlib
import json
import random
import secrets
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import gmpy2

# 40 Miller-Rabin rounds: error probability < 4^-40 = 2^-80.
PRIMALITY_ROUNDS = 40
DEFAULT_ATTEMPTS = 100_000


class GroupError(Exception):
    """Base class for group-level failures."""


class GenerationTimeout(GroupError):
    """No valid (p, q) pair was found within the attempt budget."""


class NonInvertibleError(GroupError, ValueError):
    pass


class EntropyError(GroupError):
    """The randomness source failed; never silently replaced."""


class RandomSource(Protocol):
    def getrandbits(self, k: int) -> int: ...


def system_rng() -> RandomSource:
    return secrets.SystemRandom()


def seeded_rng(seed: int | str) -> RandomSource:
    """Deterministic source for tests and simulations only."""
    return random.Random(seed)


def default_q_bits(p_bits: int) -> int:
    return 256 if p_bits >= 830 else 160


@dataclass(frozen=True)
class GroupParams:
    p: int
    q: int
    g: int
    h: int

    @property
    def p_bits(self) -> int:
        return self.p.bit_length()

    def to_dict(self) -> dict:
        return {
            "p": format(self.p, "x"),
            "q": format(self.q, "x"),
            "g": format(self.g, "x"),
            "h": format(self.h, "x"),
            "p_bits": self.p_bits,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> GroupParams:
        params = cls(
            p=int(doc["p"], 16),
            q=int(doc["q"], 16),
            g=int(doc["g"], 16),
            h=int(doc["h"], 16),
        )
        if "p_bits" in doc and int(doc["p_bits"]) != params.p_bits:
            raise ValueError("p_bits does not match p")
        return params

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> GroupParams:
        return cls.from_dict(json.loads(Path(path).read_text()))

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# Test fixture: 2^11 = 2048 = 89*23 + 1, h = 2^3.
TOY_PARAMS = GroupParams(p=23, q=11, g=2, h=8)
TOY_TRAPDOOR = 3


def is_probable_prime(n: int) -> bool:
    return n >= 2 and bool(gmpy2.is_prime(n, PRIMALITY_ROUNDS))


def random_scalar(modulus: int, rng: RandomSource) -> int:
    """Uniform draw from [0, modulus - 1] by rejection sampling (no bias)."""
    if modulus < 1:
        raise ValueError("modulus must be positive")
    if modulus == 1:
        return 0
    bits = (modulus - 1).bit_length()
    while True:
        try:
            candidate = rng.getrandbits(bits)
        except Exception as exc:  # any failure of the source is fatal
            raise EntropyError(f"randomness source failed: {exc}") from exc
        if candidate < modulus:
            return candidate


def random_nonzero(modulus: int, rng: RandomSource) -> int:
    if modulus < 2:
        raise ValueError("no nonzero residues")
    while True:
        value = random_scalar(modulus, rng)
        if value:
            return value


def random_bytes(n: int, rng: RandomSource) -> bytes:
    try:
        return rng.getrandbits(8 * n).to_bytes(n, "big")
    except Exception as exc:
        raise EntropyError(f"randomness source failed: {exc}") from exc


def _ladder(base: int, exponent: int, modulus: int, nbits: int) -> int:
    # Montgomery ladder: one multiply and one square per bit regardless of value.
    r0, r1 = 1, base % modulus
    for i in range(nbits - 1, -1, -1):
        if (exponent >> i) & 1:
            r0 = r0 * r1 % modulus
            r1 = r1 * r1 % modulus
        else:
            r1 = r0 * r1 % modulus
            r0 = r0 * r0 % modulus
    return r0


def mod_exp(base: int, exponent: int, params: GroupParams) -> int:
    """``base^exponent mod p`` with the exponent reduced mod q.

    The reduction is only sound for subgroup elements, which is every
    caller's situation; the ladder always walks ``q.bit_length()`` bits.
    """
    if not 1 <= base < params.p:
        raise ValueError("base must lie in [1, p-1]")
    e = exponent % params.q
    return _ladder(base, e, params.p, params.q.bit_length())


def mod_inv(value: int, modulus: int) -> int:
    if value % modulus == 0:
        raise NonInvertibleError(f"{value} has no inverse modulo {modulus}")
    return pow(value, -1, modulus)


def validate_params(params: GroupParams) -> bool:
    p, q, g, h = params.p, params.q, params.g, params.h
    if not (is_probable_prime(p) and is_probable_prime(q)):
        return False
    if (p - 1) % q:
        return False
    for elem in (g, h):
        if not 1 < elem < p or pow(elem, q, p) != 1:
            return False
    return True


def _random_prime(bits: int, rng: RandomSource, attempts: int) -> int:
    for _ in range(attempts):
        candidate = rng.getrandbits(bits) | (1 << (bits - 1)) | 1
        if is_probable_prime(candidate):
            return candidate
    raise GenerationTimeout(f"no {bits}-bit prime found in {attempts} attempts")


def generate_params_with_trapdoor(
    p_bits: int,
    q_bits: int | None = None,
    *,
    rng: RandomSource | None = None,
    seed: int | None = None,
    attempts: int = DEFAULT_ATTEMPTS,
) -> tuple[GroupParams, int]:
    """Generate parameters and return the discrete log of h (tests only)."""
    if q_bits is None:
        q_bits = default_q_bits(p_bits)
    if q_bits >= p_bits:
        raise ValueError("q_bits must be smaller than p_bits")
    if q_bits < 2:
        raise ValueError("q_bits must be at least 2")
    if p_bits < 32:
        raise ValueError("p_bits must be at least 32")
    if rng is None:
        rng = seeded_rng(seed) if seed is not None else system_rng()

    budget = attempts
    while budget > 0:
        q = _random_prime(q_bits, rng, budget)
        # p = c*q + 1 with p exactly p_bits long; c even since q and p are odd.
        c_min = ((1 << (p_bits - 1)) - 1) // q + 1
        c_max = ((1 << p_bits) - 2) // q
        if c_min > c_max:
            budget -= 1
            continue
        tries = min(budget, 8 * p_bits)
        for _ in range(tries):
            budget -= 1
            c = c_min + random_scalar(c_max - c_min + 1, rng)
            c += c & 1
            if c > c_max:
                continue
            p = c * q + 1
            if is_probable_prime(p):
                g = _subgroup_generator(p, q, rng)
                a = random_nonzero(q, rng)
                h = pow(g, a, p)
                return GroupParams(p=p, q=q, g=g, h=h), a
    raise GenerationTimeout(f"no ({p_bits}, {q_bits})-bit parameter pair within {attempts} attempts")


def generate_params(
    p_bits: int,
    q_bits: int | None = None,
    *,
    rng: RandomSource | None = None,
    seed: int | None = None,
    attempts: int = DEFAULT_ATTEMPTS,
) -> GroupParams:
    params, trapdoor = generate_params_with_trapdoor(
        p_bits, q_bits, rng=rng, seed=seed, attempts=attempts
    )
    del trapdoor
    return params


def _subgroup_generator(p: int, q: int, rng: RandomSource) -> int:
    cofactor = (p - 1) // q
    while True:
        seed_elem = 2 + random_scalar(p - 3, rng)
        g = pow(seed_elem, cofactor, p)
        if g != 1:
            return g
