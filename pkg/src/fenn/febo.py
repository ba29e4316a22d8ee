"""Functional encryption for one basic arithmetic operation on an encrypted operand.

ElGamal-shaped scheme computing x op y for op in {add, sub, mul, div}, where
x is encrypted and y is a plaintext operand supplied at key-derivation time:

  setup       msk = s, mpk = (h = g^s, g)
  encrypt     cmt = g^r (the commitment), ct = h^r * g^x
  key_derive  sk = cmt^s * g^{-y} | cmt^s * g^{y} | (cmt^s)^y | (cmt^s)^{y^-1}
              for add | sub | mul | div
  decrypt     ct / sk            -> g^{x + y} or g^{x - y}
              ct^y / sk          -> g^{x * y}
              ct^{y^-1} / sk     -> g^{x * y^-1}, i.e. g^{x/y} when y | x

Every key is bound to the commitment of one specific ciphertext; presenting
it with any other ciphertext is a KeyMismatch before any group work happens.

Division is exact-division-only: when y does not divide x the exponent
x * y^-1 mod p is astronomically large and surfaces as NotInRange.
"""

from __future__ import annotations

import secrets
from dataclasses import dataclass

from gmpy2 import invert, mpz, powmod

from .errors import DivisorZero, KeyMismatch, NotInRange, UnsupportedFunction
from .group import GroupElement, GroupParams, Scalar, dlog_bsgs, sample_scalar

OPS = ("add", "sub", "mul", "div")


@dataclass(frozen=True, slots=True)
class FeboMpk:
    params: GroupParams
    h: GroupElement


@dataclass(frozen=True, slots=True)
class FeboMsk:
    s: Scalar


@dataclass(frozen=True, slots=True)
class FeboCiphertext:
    cmt: GroupElement
    ct: GroupElement


@dataclass(frozen=True, slots=True)
class FeboFunctionKey:
    sk: GroupElement
    op: str
    y: int
    cmt_ref: GroupElement


def setup(params: GroupParams, rng=None) -> tuple[FeboMpk, FeboMsk]:
    rng = rng if rng is not None else secrets.SystemRandom()
    s = sample_scalar(params, rng)
    h = GroupElement(powmod(params.generator, s, params.modulus), params)
    return FeboMpk(params, h), FeboMsk(s)


def encrypt(mpk: FeboMpk, x: int, rng=None) -> FeboCiphertext:
    rng = rng if rng is not None else secrets.SystemRandom()
    params = mpk.params
    p, r, g = params.order, mpz(params.modulus), mpz(params.generator)
    nonce = sample_scalar(params, rng)
    cmt = powmod(g, nonce, r)
    ct = powmod(mpk.h.value, nonce, r) * powmod(g, int(x) % p, r) % r
    return FeboCiphertext(GroupElement(cmt, params), GroupElement(ct, params))


def key_derive(
    msk: FeboMsk, cmt: GroupElement, op: str, y: int, params: GroupParams
) -> FeboFunctionKey:
    """Derive the op-specific key bound to one ciphertext's commitment."""
    if op not in OPS:
        raise UnsupportedFunction(f"unknown operation {op!r}")
    p, r, g = params.order, mpz(params.modulus), mpz(params.generator)
    y = int(y)
    cs = powmod(cmt.value, msk.s, r)
    if op == "add":
        sk = cs * powmod(g, -y % p, r) % r
    elif op == "sub":
        sk = cs * powmod(g, y % p, r) % r
    elif op == "mul":
        sk = powmod(cs, y % p, r)
    else:  # div
        if y % p == 0:
            raise DivisorZero("division operand is zero mod p")
        sk = powmod(cs, invert(y % p, p), r)
    return FeboFunctionKey(GroupElement(sk, params), op, y, cmt)


def decrypt(
    mpk: FeboMpk,
    fk: FeboFunctionKey,
    ct: FeboCiphertext,
    op: str,
    y: int,
    bound: int,
) -> int:
    """Recover x op y within [-bound, bound], x being the encrypted operand."""
    if fk.cmt_ref != ct.cmt:
        raise KeyMismatch("function key is bound to a different ciphertext commitment")
    if op not in OPS:
        raise UnsupportedFunction(f"unknown operation {op!r}")
    y = int(y)
    if fk.op != op or fk.y != y:
        raise NotInRange(
            f"function key was derived for ({fk.op}, {fk.y}), not ({op}, {y})"
        )
    params = mpk.params
    p, r = params.order, mpz(params.modulus)
    if op in ("add", "sub"):
        num = mpz(ct.ct.value)
    elif op == "mul":
        num = powmod(ct.ct.value, y % p, r)
    else:  # div
        if y % p == 0:
            raise DivisorZero("division operand is zero mod p")
        num = powmod(ct.ct.value, invert(y % p, p), r)
    target = GroupElement(num * invert(fk.sk.value, r) % r, params)
    return dlog_bsgs(params, target, bound)
