"""Functional encryption for inner products.

Four algorithms over a shared prime-order group:

  setup       s = (s_1..s_eta) <- Z_p^eta, mpk = (g, h_i = g^{s_i}), msk = s
  key_derive  sk_y = <y, s> mod p
  encrypt     ct_0 = g^r, ct_i = h_i^r * g^{x_i}
  decrypt     g^{<x,y>} = prod(ct_i^{y_i}) / ct_0^{sk_y}, then a bounded dlog

Plaintexts and operands are signed quantized integers; negative values are
encoded as mod-p exponents and recovered through the signed BSGS window.

A keypair generated for eta_max is simultaneously a valid keypair for every
shorter prefix (h_i = g^{s_i} holds position-wise), so one authority key
serves vectors of several lengths via prefix(). Ciphertext, key and operand
lengths must still agree exactly at decrypt time.
"""

from __future__ import annotations

import secrets
from dataclasses import dataclass

from gmpy2 import invert, mpz, powmod

from .errors import LengthMismatch, NotInRange
from .group import GroupElement, GroupParams, Scalar, dlog_bsgs, sample_scalar


@dataclass(frozen=True, slots=True)
class FeipMpk:
    params: GroupParams
    h: tuple[GroupElement, ...]

    @property
    def eta(self) -> int:
        return len(self.h)

    def prefix(self, eta: int) -> "FeipMpk":
        """Public key for the first eta coordinates (same group, sliced h)."""
        if not 1 <= eta <= len(self.h):
            raise LengthMismatch(f"prefix length {eta} not in [1, {len(self.h)}]")
        return FeipMpk(self.params, self.h[:eta])


@dataclass(frozen=True, slots=True)
class FeipMsk:
    s: tuple[Scalar, ...]

    @property
    def eta(self) -> int:
        return len(self.s)

    def prefix(self, eta: int) -> "FeipMsk":
        if not 1 <= eta <= len(self.s):
            raise LengthMismatch(f"prefix length {eta} not in [1, {len(self.s)}]")
        return FeipMsk(self.s[:eta])


@dataclass(frozen=True, slots=True)
class FeipFunctionKey:
    """Key for one operand vector y; carries its y so pairing mistakes are checkable."""

    sk: Scalar
    y: tuple[int, ...]


@dataclass(frozen=True, slots=True)
class FeipCiphertext:
    ct0: GroupElement
    ct: tuple[GroupElement, ...]

    @property
    def eta(self) -> int:
        return len(self.ct)


def setup(params: GroupParams, eta: int, rng=None) -> tuple[FeipMpk, FeipMsk]:
    """Sample msk = s in Z_p^eta and publish mpk = (g, h_i = g^{s_i})."""
    if eta < 1:
        raise ValueError("eta must be at least 1")
    rng = rng if rng is not None else secrets.SystemRandom()
    r, g = mpz(params.modulus), mpz(params.generator)
    s = tuple(sample_scalar(params, rng) for _ in range(eta))
    h = tuple(GroupElement(powmod(g, si, r), params) for si in s)
    return FeipMpk(params, h), FeipMsk(s)


def key_derive(msk: FeipMsk, y: list[int] | tuple[int, ...], params: GroupParams) -> FeipFunctionKey:
    """sk_y = <y, s> mod p. y entries are signed quantized integers."""
    if len(y) != len(msk.s):
        raise LengthMismatch(f"operand length {len(y)} != key length {len(msk.s)}")
    p = params.order
    sk = sum(yi * si for yi, si in zip(y, msk.s)) % p
    return FeipFunctionKey(sk=int(sk), y=tuple(int(v) for v in y))


def encrypt(mpk: FeipMpk, x: list[int] | tuple[int, ...], rng=None) -> FeipCiphertext:
    """Encrypt a signed integer vector under fresh randomness r."""
    if len(x) != mpk.eta:
        raise LengthMismatch(f"plaintext length {len(x)} != eta {mpk.eta}")
    rng = rng if rng is not None else secrets.SystemRandom()
    params = mpk.params
    p, r, g = params.order, mpz(params.modulus), mpz(params.generator)
    nonce = sample_scalar(params, rng)
    ct0 = powmod(g, nonce, r)
    ct = tuple(
        GroupElement(powmod(hi.value, nonce, r) * powmod(g, xi % p, r) % r, params)
        for hi, xi in zip(mpk.h, x)
    )
    return FeipCiphertext(GroupElement(ct0, params), ct)


def decrypt(
    mpk: FeipMpk,
    ct: FeipCiphertext,
    fk: FeipFunctionKey,
    y: list[int] | tuple[int, ...],
    bound: int,
) -> int:
    """Recover <x, y> exactly, searching the signed window [-bound, bound].

    Zero operand coordinates contribute the identity and are skipped, which
    matters for sparse probes like one-hot rows.
    """
    if not (len(y) == ct.eta == len(fk.y)):
        raise LengthMismatch(
            f"operand/ciphertext/key lengths differ: {len(y)}/{ct.eta}/{len(fk.y)}"
        )
    if tuple(int(v) for v in y) != fk.y:
        raise NotInRange("function key was derived for a different operand vector")
    params = mpk.params
    p, r = params.order, mpz(params.modulus)
    num = mpz(1)
    for cti, yi in zip(ct.ct, y):
        if yi:
            num = num * powmod(cti.value, yi % p, r) % r
    denom = powmod(ct.ct0.value, fk.sk, r)
    target = GroupElement(num * invert(denom, r) % r, params)
    return dlog_bsgs(params, target, bound)
