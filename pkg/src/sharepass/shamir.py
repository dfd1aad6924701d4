"""Threshold sharing over a prime field with secret abscissae.

The field modulus is a parameter: the protocol layers share in Z_q, the
textbook examples use small primes directly.  Abscissa 0 is forbidden since
P(0) is the secret itself.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .group import RandomSource, mod_inv, random_nonzero, random_scalar


class SharingError(ValueError):
    pass


class DegeneratePointSet(SharingError):
    """Repeated (or zero) abscissae make interpolation undefined."""


class InsufficientShares(SharingError):
    pass


@dataclass(frozen=True)
class SecretPolynomial:
    coefficients: tuple[int, ...]
    modulus: int

    def __post_init__(self) -> None:
        if not self.coefficients:
            raise SharingError("polynomial needs at least one coefficient")
        if any(not 0 <= c < self.modulus for c in self.coefficients):
            raise SharingError("coefficients must be reduced modulo the field")

    @property
    def threshold(self) -> int:
        return len(self.coefficients)

    @property
    def secret(self) -> int:
        return self.coefficients[0]

    def __call__(self, x: int) -> int:
        return eval_polynomial(self, x)


@dataclass(frozen=True)
class SharePoint:
    x: int
    y: int


def sample_polynomial(
    secret: int,
    t: int,
    m: int,
    rng: RandomSource,
    *,
    coefficients: Sequence[int] | None = None,
) -> SecretPolynomial:
    """Random polynomial of degree <= t-1 with constant term ``secret``.

    ``coefficients`` forces a_1..a_{t-1}; only fixtures should use it.
    """
    if t < 1:
        raise SharingError("threshold must be at least 1")
    if not 0 <= secret < m:
        raise SharingError("secret must be reduced modulo the field")
    if coefficients is not None:
        if len(coefficients) != t - 1:
            raise SharingError(f"expected {t - 1} forced coefficients")
        rest = [c % m for c in coefficients]
    else:
        rest = [random_scalar(m, rng) for _ in range(t - 1)]
    return SecretPolynomial((secret, *rest), m)


def eval_polynomial(poly: SecretPolynomial, x: int) -> int:
    m = poly.modulus
    acc = 0
    for coeff in reversed(poly.coefficients):
        acc = (acc * x + coeff) % m
    return acc


def draw_abscissae(n: int, m: int, rng: RandomSource) -> list[int]:
    """n distinct nonzero field elements; callers must never log or persist them."""
    if n >= m:
        raise SharingError(f"cannot draw {n} distinct nonzero elements of Z_{m}")
    seen: set[int] = set()
    out: list[int] = []
    while len(out) < n:
        x = random_nonzero(m, rng)
        if x in seen:
            continue
        seen.add(x)
        out.append(x)
    return out


def _check_abscissae(xs: Sequence[int], m: int) -> None:
    reduced = [x % m for x in xs]
    if any(x == 0 for x in reduced):
        raise DegeneratePointSet("abscissa 0 is not allowed")
    if len(set(reduced)) != len(reduced):
        raise DegeneratePointSet("abscissae must be pairwise distinct")


def lagrange_weights(abscissae: Sequence[int], m: int) -> dict[int, int]:
    """Weights v_j with P(0) = sum(s_j * v_j) for any P of degree < len(abscissae)."""
    _check_abscissae(abscissae, m)
    weights: dict[int, int] = {}
    for xj in abscissae:
        num, den = 1, 1
        for xk in abscissae:
            if xk == xj:
                continue
            num = num * xk % m
            den = den * (xk - xj) % m
        weights[xj % m] = num * mod_inv(den, m) % m
    return weights


def _first_distinct(points: Iterable[SharePoint], m: int) -> list[SharePoint]:
    seen: set[int] = set()
    out = []
    for pt in points:
        x = pt.x % m
        if x in seen:
            continue
        seen.add(x)
        out.append(pt)
    return out


def reconstruct_at_zero(points: Sequence[SharePoint], t: int, m: int) -> int:
    """Interpolate P(0) from the first t points with distinct abscissae."""
    chosen = _first_distinct(points, m)
    if len(chosen) < t:
        raise InsufficientShares(f"need {t} distinct shares, got {len(chosen)}")
    chosen = chosen[:t]
    weights = lagrange_weights([pt.x for pt in chosen], m)
    return sum(pt.y * weights[pt.x % m] for pt in chosen) % m


def reconstruct_linear_system(points: Sequence[SharePoint], m: int) -> SecretPolynomial:
    """Solve the Vandermonde system for all coefficients by Gauss-Jordan mod m.

    Independent of the Lagrange path, so it doubles as its oracle.
    """
    xs = [pt.x for pt in points]
    _check_abscissae(xs, m)
    size = len(points)
    rows = [
        [pow(pt.x, j, m) for j in range(size)] + [pt.y % m]
        for pt in points
    ]
    for col in range(size):
        pivot = next((r for r in range(col, size) if rows[r][col] % m), None)
        if pivot is None:
            raise DegeneratePointSet("singular Vandermonde system")
        rows[col], rows[pivot] = rows[pivot], rows[col]
        inv = mod_inv(rows[col][col], m)
        rows[col] = [v * inv % m for v in rows[col]]
        for r in range(size):
            if r != col and rows[r][col]:
                factor = rows[r][col]
                rows[r] = [(a - factor * b) % m for a, b in zip(rows[r], rows[col])]
    return SecretPolynomial(tuple(row[size] for row in rows), m)


def split(secret: int, t: int, n: int, m: int, rng: RandomSource) -> tuple[SecretPolynomial, list[SharePoint]]:
    """Convenience dealing: random polynomial evaluated at fresh hidden abscissae."""
    if n < t:
        raise SharingError("n must be at least t")
    poly = sample_polynomial(secret, t, m, rng)
    xs = draw_abscissae(n, m, rng)
    return poly, [SharePoint(x, eval_polynomial(poly, x)) for x in xs]
