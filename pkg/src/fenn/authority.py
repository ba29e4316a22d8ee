"""The authority: holds master secrets, derives function keys on request.

The authority is the only party that sees msk material. Clients and servers
interact with it through KeyRequest/KeyResponse messages (or the in-process
convenience methods, which the secure computation modules duck-type
against). Master secrets never appear in any response; the serializers in
fenn.serialize have no encoder for msk-bearing responses by construction.

Every derivation is appended to an issuance log with the operand element
count and key count, which reproduces the communication-cost accounting of
a k x n operand going in and k keys coming out.
"""

from __future__ import annotations

import secrets
import threading
from dataclasses import dataclass, field

from gmpy2 import powmod

from . import febo, feip
from .errors import MalformedRequest, UnsupportedFunction
from .group import GroupElement, GroupParams
from .messages import (
    CONV_KERNEL,
    DOT,
    ELEMENTWISE,
    PERMITTED_ALL,
    KeyRequest,
    KeyResponse,
    MpkBundle,
)


@dataclass
class IssuanceRecord:
    function: str
    operand_elements: int
    keys_issued: int


@dataclass
class AuthorityState:
    params: GroupParams
    feip_mpk: feip.FeipMpk
    feip_msk: feip.FeipMsk
    febo_mpk: febo.FeboMpk
    febo_msk: febo.FeboMsk
    permitted: frozenset[str]
    log: list[IssuanceRecord] = field(default_factory=list)


class Authority:
    """Key service over one FEIP keypair (length eta) and one FEBO keypair.

    Safe for concurrent key requests: master secrets are read-only after
    construction and the issuance log is guarded by a lock.
    """

    def __init__(self, state: AuthorityState):
        self.state = state
        self._lock = threading.Lock()

    @classmethod
    def create(
        cls,
        params: GroupParams,
        eta: int,
        permitted: frozenset[str] | set[str] = PERMITTED_ALL,
        rng=None,
    ) -> "Authority":
        rng = rng if rng is not None else secrets.SystemRandom()
        unknown = set(permitted) - PERMITTED_ALL
        if unknown:
            raise UnsupportedFunction(f"cannot permit unknown functions {sorted(unknown)}")
        feip_mpk, feip_msk = feip.setup(params, eta, rng)
        febo_mpk, febo_msk = febo.setup(params, rng)
        return cls(
            AuthorityState(
                params=params,
                feip_mpk=feip_mpk,
                feip_msk=feip_msk,
                febo_mpk=febo_mpk,
                febo_msk=febo_msk,
                permitted=frozenset(permitted),
            )
        )

    @classmethod
    def restore(
        cls,
        params: GroupParams,
        feip_msk: feip.FeipMsk,
        febo_msk: febo.FeboMsk,
        permitted: frozenset[str],
    ) -> "Authority":
        """Rebuild an authority from stored master secrets.

        The public keys are recomputed from the secrets (h_i = g^{s_i}),
        so the secret file alone fully determines the authority.
        """
        g, r = params.generator, params.modulus
        feip_mpk = feip.FeipMpk(
            params,
            tuple(GroupElement(powmod(g, si, r), params) for si in feip_msk.s),
        )
        febo_mpk = febo.FeboMpk(params, GroupElement(powmod(g, febo_msk.s, r), params))
        return cls(
            AuthorityState(
                params=params,
                feip_mpk=feip_mpk,
                feip_msk=feip_msk,
                febo_mpk=febo_mpk,
                febo_msk=febo_msk,
                permitted=frozenset(permitted),
            )
        )

    # -- public material -------------------------------------------------

    def mpk(self) -> MpkBundle:
        s = self.state
        return MpkBundle(params=s.params, feip_mpk=s.feip_mpk, febo_mpk=s.febo_mpk)

    def status(self) -> dict:
        with self._lock:
            by_function: dict[str, int] = {}
            for rec in self.state.log:
                by_function[rec.function] = by_function.get(rec.function, 0) + rec.keys_issued
            return {
                "eta": self.state.feip_mpk.eta,
                "lambda": self.state.params.lam,
                "permitted": sorted(self.state.permitted),
                "keys_issued": by_function,
                "requests": len(self.state.log),
            }

    # -- in-process key derivation (duck-typed by secure_matrix/secure_conv)

    def feip_key(self, y: list[int]) -> feip.FeipFunctionKey:
        msk = self.state.feip_msk
        if len(y) != msk.eta:
            msk = msk.prefix(len(y))
        return feip.key_derive(msk, y, self.state.params)

    def febo_key(self, cmt: GroupElement, op: str, y: int) -> febo.FeboFunctionKey:
        return febo.key_derive(self.state.febo_msk, cmt, op, y, self.state.params)

    # -- wire-level service ----------------------------------------------

    def derive(self, req: KeyRequest) -> KeyResponse:
        """Validate one KeyRequest, derive its keys, and log the exchange."""
        fn = req.function
        needed = DOT if fn == CONV_KERNEL else fn
        if needed not in PERMITTED_ALL:
            raise UnsupportedFunction(f"unknown function {fn!r}")
        if needed not in self.state.permitted:
            raise UnsupportedFunction(f"function {fn!r} is not in the permitted set")
        if not req.operand or any(len(row) != len(req.operand[0]) for row in req.operand):
            raise MalformedRequest("operand must be a non-empty rectangular grid")
        for row in req.operand:
            for v in row:
                if not isinstance(v, int):
                    raise MalformedRequest("operand entries must be quantized integers")

        if fn in (DOT, CONV_KERNEL):
            if req.cmts is not None:
                raise MalformedRequest(f"{fn} requests carry no commitments")
            if fn == CONV_KERNEL and len(req.operand) != 1:
                raise MalformedRequest("conv-kernel requests carry one flattened kernel")
            keys = tuple(self.feip_key(list(row)) for row in req.operand)
            resp = KeyResponse(function=fn, feip_keys=keys)
            issued = len(keys)
        else:
            if req.cmts is None:
                raise MalformedRequest("element-wise requests need one commitment per key")
            if len(req.cmts) != len(req.operand) or any(
                len(cr) != len(orow) for cr, orow in zip(req.cmts, req.operand)
            ):
                raise MalformedRequest("commitment grid must be congruent to the operand")
            grid = tuple(
                tuple(
                    self.febo_key(cmt, fn, v)
                    for cmt, v in zip(cmt_row, operand_row)
                )
                for cmt_row, operand_row in zip(req.cmts, req.operand)
            )
            resp = KeyResponse(function=fn, febo_keys=grid)
            issued = sum(len(r) for r in grid)

        elements = sum(len(r) for r in req.operand)
        with self._lock:
            self.state.log.append(IssuanceRecord(fn, elements, issued))
        return resp


def authority_serve(req: KeyRequest, authority: Authority) -> KeyResponse:
    """Functional entry point for one request/response exchange."""
    return authority.derive(req)
