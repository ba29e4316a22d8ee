"""Cyclic prime-order group arithmetic and bounded discrete-log recovery.

The default instantiation is a Schnorr subgroup of a safe prime: the
modulus is r = 2p + 1 with p prime, and the generator g = h^2 spans the
order-p subgroup of quadratic residues. Exponents live in Z_p (the group
order), group element values in Z_r. The two moduli are easy to conflate;
every function here is explicit about which one it reduces by.

Small parameter sizes (32/64 bits) are supported so tests run fast. They
are NOT secure and exist only for development.
"""

from __future__ import annotations

import math
import random
import secrets
import threading
from dataclasses import dataclass

from gmpy2 import invert, is_prime, mpz, powmod

from .errors import NotInRange

# Exponents are plain integers, always reduced modulo the group order p.
Scalar = int


@dataclass(frozen=True, slots=True)
class GroupParams:
    """Description of one cyclic group: (G, p, g) plus the security size.

    modulus   -- r, the prime modulus elements are reduced by
    order     -- p, the prime order of the subgroup generated by g
    generator -- g, an element of order exactly p
    lam       -- security parameter in bits (bit length of p)
    """

    modulus: int
    order: int
    generator: int
    lam: int

    def element(self, value: int) -> "GroupElement":
        return GroupElement(mpz(value % self.modulus), self)

    @property
    def identity(self) -> "GroupElement":
        return GroupElement(mpz(1), self)

    @property
    def g(self) -> "GroupElement":
        return GroupElement(mpz(self.generator), self)


@dataclass(frozen=True, slots=True)
class GroupElement:
    """An element of the order-p subgroup, as a value in [1, r-1]."""

    value: int
    params: GroupParams

    def __mul__(self, other: "GroupElement") -> "GroupElement":
        return GroupElement(self.value * other.value % self.params.modulus, self.params)

    def inverse(self) -> "GroupElement":
        return GroupElement(invert(self.value, self.params.modulus), self.params)

    def __pow__(self, e: int) -> "GroupElement":
        return pow_element(self, e)

    def in_subgroup(self) -> bool:
        p, r = self.params.order, self.params.modulus
        return 0 < self.value < r and powmod(self.value, p, r) == 1


def group_gen(lam: int, seed: int | None = None) -> GroupParams:
    """Generate safe-prime group parameters with a lam-bit prime order.

    With a seed the search is deterministic and reproducible; without one
    it draws from the system CSPRNG. Candidates are retried until both p
    and r = 2p + 1 are prime.
    """
    if lam < 32:
        raise ValueError(f"lambda must be at least 32 bits, got {lam}")
    rng = random.Random(seed) if seed is not None else secrets.SystemRandom()
    while True:
        # Force the top bit (exact bit length) and the low bit (odd).
        p = rng.getrandbits(lam - 1) | (1 << (lam - 1)) | 1
        if not is_prime(p):
            continue
        r = 2 * p + 1
        if not is_prime(r):
            continue
        break
    while True:
        h = rng.randrange(2, r - 1)
        g = h * h % r
        if g != 1:
            break
    return GroupParams(modulus=int(r), order=int(p), generator=int(g), lam=lam)


def sample_scalar(params: GroupParams, rng) -> Scalar:
    """Uniform exponent in [0, p-1]. rng needs only a randrange method."""
    return rng.randrange(params.order)


def pow_element(base: GroupElement, e: int) -> GroupElement:
    """base^e with the exponent reduced mod p; negative e goes through the inverse."""
    params = base.params
    return GroupElement(powmod(base.value, e % params.order, params.modulus), params)


# Baby-step tables, keyed by (modulus, generator, table size). Built once
# under the lock, then read concurrently without coordination.
_TABLE_LOCK = threading.Lock()
_TABLES: dict[tuple[int, int, int], tuple[dict[int, int], int]] = {}


def _baby_table(params: GroupParams, m: int) -> tuple[dict[int, int], int]:
    """Return ({g^j: j for j < m}, g^-m mod r), building and caching on demand."""
    key = (params.modulus, params.generator, m)
    cached = _TABLES.get(key)
    if cached is not None:
        return cached
    with _TABLE_LOCK:
        cached = _TABLES.get(key)
        if cached is not None:
            return cached
        r = mpz(params.modulus)
        g = mpz(params.generator)
        table: dict[int, int] = {}
        acc = mpz(1)
        for j in range(m):
            table.setdefault(int(acc), j)
            acc = acc * g % r
        giant = int(invert(powmod(g, m, r), r))
        _TABLES[key] = (table, giant)
        return _TABLES[key]


def table_size_for(bound: int) -> int:
    """Baby-step count used for a given bound (one table per size)."""
    return math.isqrt(max(bound, 1)) + 1


def ensure_dlog_table(params: GroupParams, bound: int) -> None:
    """Precompute the baby-step table for this bound (e.g. before forking workers)."""
    if bound > 0:
        _baby_table(params, table_size_for(bound))


def dlog_bsgs(params: GroupParams, target: GroupElement, bound: int) -> int:
    """Recover the unique z in [-bound, bound] with g^z = target.

    Giant steps walk the target and its inverse in lockstep, so small |z|
    of either sign is found early. Uniqueness of the signed result needs
    2*bound + 1 <= p, which every sane caller satisfies by construction.

    Raises NotInRange when no exponent in the window matches.
    """
    if bound < 0:
        raise ValueError("bound must be non-negative")
    if bound > (params.order - 1) // 2:
        raise ValueError("bound too large for a unique signed dlog in this group")
    r = params.modulus
    if bound == 0:
        if target.value == 1:
            return 0
        raise NotInRange("target is not the identity and the bound is 0")
    m = table_size_for(bound)
    table, giant = _baby_table(params, m)
    pos = mpz(target.value)
    neg = invert(pos, r)
    for i in range(bound // m + 1):
        base = i * m
        j = table.get(int(pos))
        if j is not None and base + j <= bound:
            return base + j
        j = table.get(int(neg))
        if j is not None and base + j <= bound:
            return -(base + j)
        pos = pos * giant % r
        neg = neg * giant % r
    raise NotInRange(f"no exponent in [-{bound}, {bound}] matches the target")
