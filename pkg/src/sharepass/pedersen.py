"""Pedersen commitments, committed dealing and share verification."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .group import GroupParams, RandomSource, mod_exp, mod_inv, random_scalar
from .shamir import SecretPolynomial, SharingError, draw_abscissae, eval_polynomial, sample_polynomial


@dataclass(frozen=True)
class DualShare:
    x: int
    s: int
    t_val: int


@dataclass(frozen=True)
class Dealing:
    shares: list[DualShare]
    commitments: tuple[int, ...]


def commit_scalar(s: int, t_val: int, params: GroupParams) -> int:
    return mod_exp(params.g, s, params) * mod_exp(params.h, t_val, params) % params.p


def blind_secret(secret: int, r: int, params: GroupParams) -> int:
    """S' = g^S h^r mod p: perfectly hiding in S for uniform r."""
    return commit_scalar(secret, r, params)


@dataclass(frozen=True)
class DealingDraw:
    """The random part of a dealing: both polynomials and the abscissae."""

    f: SecretPolynomial
    k: SecretPolynomial
    abscissae: tuple[int, ...]


def draw_dealing(
    secret: int,
    t: int,
    n: int,
    params: GroupParams,
    rng: RandomSource,
    *,
    abscissae: list[int] | None = None,
) -> DealingDraw:
    q = params.q
    if not 1 <= t <= n:
        raise SharingError("need 1 <= t <= n")
    if n >= q:
        raise SharingError("n must be smaller than q")
    if not 0 <= secret < q:
        raise SharingError("secret must be reduced modulo q")
    f = sample_polynomial(secret, t, q, rng)
    k = sample_polynomial(random_scalar(q, rng), t, q, rng)
    if abscissae is None:
        xs = draw_abscissae(n, q, rng)
    else:
        xs = list(abscissae)
        if len(xs) != n or len(set(xs)) != n or any(not 0 < x < q for x in xs):
            raise SharingError("abscissae must be n distinct values in [1, q)")
    return DealingDraw(f, k, tuple(xs))


def evaluate_dealing(draw: DealingDraw, params: GroupParams) -> Dealing:
    """Shares and commitments; deterministic, so it can run outside an rng lock."""
    shares = [DualShare(x, eval_polynomial(draw.f, x), eval_polynomial(draw.k, x))
              for x in draw.abscissae]
    commitments = tuple(
        commit_scalar(a, b, params) for a, b in zip(draw.f.coefficients, draw.k.coefficients)
    )
    return Dealing(shares, commitments)


def deal_committed(
    secret: int,
    t: int,
    n: int,
    params: GroupParams,
    rng: RandomSource,
    *,
    abscissae: list[int] | None = None,
) -> Dealing:
    """Share ``secret`` in Z_q with a companion blinding polynomial.

    Abscissae are drawn fresh unless supplied, and returned inside the shares;
    the caller decides who gets to keep them.
    """
    return evaluate_dealing(draw_dealing(secret, t, n, params, rng, abscissae=abscissae), params)


def expected_commitment(x: int, commitments: tuple[int, ...] | list[int], params: GroupParams) -> int:
    """Product of c_j^(x^j), exponents reduced mod q."""
    acc = 1
    power = 1
    for c in commitments:
        acc = acc * mod_exp(c, power, params) % params.p
        power = power * x % params.q
    return acc


def verify_share(share: DualShare, commitments: tuple[int, ...] | list[int], params: GroupParams) -> bool:
    if not commitments:
        return False
    if any(not 1 <= c < params.p for c in commitments):
        return False
    if not (0 <= share.s < params.q and 0 <= share.t_val < params.q):
        return False
    if not 0 < share.x < params.q:
        return False
    lhs = commit_scalar(share.s, share.t_val, params)
    return lhs == expected_commitment(share.x, commitments, params)


def hiding_witness(s: int, t_val: int, s_prime: int, trapdoor: int, params: GroupParams) -> int:
    """t' opening commit(s, t_val) as s'; needs log_g(h), so tests only."""
    q = params.q
    if trapdoor % q == 0:
        raise ValueError("trapdoor must be nonzero")
    return ((s - s_prime) * mod_inv(trapdoor, q) + t_val) % q


def extract_trapdoor(opening_a: tuple[int, int], opening_b: tuple[int, int], q: int) -> int:
    """Two distinct openings of one commitment yield log_g(h)."""
    (s, t), (s2, t2) = opening_a, opening_b
    return (s2 - s) * mod_inv(t - t2, q) % q


def hash_abscissa(x: int) -> bytes:
    return hashlib.sha256(format(x, "x").encode("ascii")).digest()
