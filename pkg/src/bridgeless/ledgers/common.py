from __future__ import annotations

from ..model import encode_fields, decode_fields


class LedgerError(Exception):
    """A ledger rejected an operation."""


class NotFound(LedgerError):
    pass


def encode_target(target_chain_id: str, target_addr: str) -> bytes:
    """Payload a client writes into OP_RETURN / a service entry."""
    return encode_fields(target_chain_id, target_addr)


def decode_target(payload: bytes) -> tuple[str, str]:
    fields = decode_fields(payload)
    if len(fields) != 2 or not all(isinstance(f, str) and f for f in fields):
        raise ValueError("expected (targetChainId, targetAddr)")
    return fields[0], fields[1]


class ZeroAmount(LedgerError):
    pass


class InsufficientBalance(LedgerError):
    pass


class BadSignature(LedgerError):
    pass


class DuplicateTx(LedgerError):
    """The exact transaction is already known to the ledger."""
