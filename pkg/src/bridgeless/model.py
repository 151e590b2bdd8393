"""Shared domain types, the request status machine and canonical hashing."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Mapping, Optional, Sequence

HASH_LEN = 32


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def _int_bytes(value: int) -> bytes:
    if value < 0:
        raise ValueError("cannot encode a negative integer")
    return value.to_bytes(max(1, (value.bit_length() + 7) // 8), "big")


def encode_fields(*fields: bytes | str | int) -> bytes:
    """Length-prefixed concatenation; unambiguous for any field contents.

    Each field is tagged with its type so that ``"1"`` and ``1`` never collide.
    """
    out = bytearray()
    for f in fields:
        if isinstance(f, bool):
            raise TypeError("bool fields are not encodable")
        if isinstance(f, int):
            tag, raw = b"i", _int_bytes(f)
        elif isinstance(f, str):
            tag, raw = b"s", f.encode("utf-8")
        elif isinstance(f, (bytes, bytearray)):
            tag, raw = b"b", bytes(f)
        else:
            raise TypeError(f"unsupported field type {type(f).__name__}")
        out += tag
        out += len(raw).to_bytes(4, "big")
        out += raw
    return bytes(out)


def decode_fields(data: bytes) -> list[bytes | str | int]:
    """Inverse of :func:`encode_fields`. Raises ValueError on malformed input."""
    fields: list[bytes | str | int] = []
    pos = 0
    while pos < len(data):
        if pos + 5 > len(data):
            raise ValueError("truncated field header")
        tag = data[pos : pos + 1]
        size = int.from_bytes(data[pos + 1 : pos + 5], "big")
        pos += 5
        if pos + size > len(data):
            raise ValueError("truncated field body")
        raw = data[pos : pos + size]
        pos += size
        if tag == b"i":
            fields.append(int.from_bytes(raw, "big"))
        elif tag == b"s":
            fields.append(raw.decode("utf-8"))
        elif tag == b"b":
            fields.append(bytes(raw))
        else:
            raise ValueError(f"unknown field tag {tag!r}")
    return fields


def tagged_hash(tag: str, *fields: bytes | str | int) -> bytes:
    return sha256(encode_fields(tag, *fields))


class ChainKind(str, Enum):
    EVM = "evm"
    UTXO = "utxo"
    BURN_EMIT = "burnEmit"


@dataclass(frozen=True, order=True)
class DepositIdentifier:
    tx_hash: bytes
    tx_nonce: int
    chain_id: str

    def __post_init__(self) -> None:
        if self.tx_nonce < 0:
            raise ValueError("txNonce must be non-negative")
        if len(self.tx_hash) != HASH_LEN:
            raise ValueError("txHash must be 32 bytes")

    def canonical(self) -> str:
        return f"{self.chain_id}:{self.tx_hash.hex()}:{self.tx_nonce}"

    __str__ = canonical

    @classmethod
    def parse(cls, text: str) -> "DepositIdentifier":
        chain_id, tx_hex, nonce = text.rsplit(":", 2)
        return cls(bytes.fromhex(tx_hex), int(nonce), chain_id)


@dataclass(frozen=True)
class DepositData:
    source_chain_id: str
    deposit_tx_hash: bytes
    tx_nonce: int
    sender: str
    token_addr: str
    amount: int
    target_chain_id: str
    target_addr: str

    def __post_init__(self) -> None:
        if self.amount <= 0:
            raise ValueError("deposit amount must be positive")
        if self.target_chain_id == self.source_chain_id:
            raise ValueError("target chain must differ from source chain")

    @property
    def deposit_id(self) -> DepositIdentifier:
        return DepositIdentifier(self.deposit_tx_hash, self.tx_nonce, self.source_chain_id)


@dataclass
class WithdrawalData:
    sign_hash: tuple[bytes, ...] = ()
    signers: tuple[int, ...] = ()
    signature: Optional[bytes] = None
    withdrawal_tx_id: Optional[bytes] = None
    # Unsigned target-chain transaction the signature covers (UTXO targets need it
    # at finalization; coin selection may drift after the session starts).
    withdrawal_tx: object = None


class RequestStatus(IntEnum):
    INVALID = 0
    PENDING = 1
    PROCESSING = 2
    PROCESSED = 3
    FINALIZED = 4


class StatusEvent(Enum):
    DEPOSIT_VERIFIED = "DepositVerified"
    SIGN_START_DELIVERED = "SignStartDelivered"
    VALID_SIGNATURE_DELIVERED = "ValidSignatureDelivered"
    SIGNING_FAILED = "SigningFailed"
    WITHDRAWAL_SUBMITTED = "WithdrawalSubmitted"


class IllegalTransition(Exception):
    def __init__(self, current: RequestStatus, event: StatusEvent):
        super().__init__(f"illegal transition {current.name} --{event.value}-->")
        self.current = current
        self.event = event


_S, _E = RequestStatus, StatusEvent
TRANSITIONS: Mapping[tuple[RequestStatus, StatusEvent], RequestStatus] = {
    (_S.INVALID, _E.DEPOSIT_VERIFIED): _S.PENDING,
    (_S.PENDING, _E.SIGN_START_DELIVERED): _S.PROCESSING,
    (_S.INVALID, _E.VALID_SIGNATURE_DELIVERED): _S.PROCESSED,
    (_S.PENDING, _E.VALID_SIGNATURE_DELIVERED): _S.PROCESSED,
    (_S.PROCESSING, _E.VALID_SIGNATURE_DELIVERED): _S.PROCESSED,
    (_S.PROCESSING, _E.SIGNING_FAILED): _S.PENDING,
    (_S.PROCESSED, _E.WITHDRAWAL_SUBMITTED): _S.FINALIZED,
}


def status_transition(current: RequestStatus, event: StatusEvent) -> RequestStatus:
    try:
        return TRANSITIONS[(current, event)]
    except KeyError:
        raise IllegalTransition(current, event) from None


@dataclass
class RequestData:
    deposit_id: DepositIdentifier
    deposit_data: Optional[DepositData] = None
    withdrawal: WithdrawalData = field(default_factory=WithdrawalData)
    status: RequestStatus = RequestStatus.INVALID
    arrival_tick: int = 0

    def apply(self, event: StatusEvent) -> RequestStatus:
        self.status = status_transition(self.status, event)
        return self.status


def max_faults(n: int) -> int:
    """Largest ``t`` with ``t <= n // 3`` and ``n >= 3t + 1``."""
    return max(0, (n - 1) // 3)


DEFAULT_CONFIRMATIONS = {ChainKind.EVM: 3, ChainKind.UTXO: 2, ChainKind.BURN_EMIT: 1}


@dataclass(frozen=True)
class ProtocolParams:
    """Validator count, fault threshold and phase durations (in ticks)."""

    n: int
    t: Optional[int] = None
    committee_size: Optional[int] = None
    acceptance_boundary: int = 5
    consensus_boundary: int = 10
    sign_boundary: int = 10
    finalize_boundary: int = 10
    required_confirmations: Mapping[str, int] = field(default_factory=dict)
    allow_unsafe: bool = False

    def __post_init__(self) -> None:
        if self.t is None:
            object.__setattr__(self, "t", max_faults(self.n))
        if self.committee_size is None:
            object.__setattr__(self, "committee_size", self.t + 1)
        if self.n < 1 or self.t < 0:
            raise ValueError("need n >= 1 and t >= 0")
        if self.n < 3 * self.t + 1 and not self.allow_unsafe:
            raise ValueError(f"n={self.n} < 3t+1 with t={self.t}")
        if not 1 <= self.committee_size <= self.n:
            raise ValueError("committee size must lie in [1, n]")
        if not 0 < self.acceptance_boundary < self.consensus_boundary:
            raise ValueError("acceptance boundary must be positive and below the consensus boundary")
        if min(self.sign_boundary, self.finalize_boundary) < 1:
            raise ValueError("phase boundaries must be positive")

    @property
    def session_length(self) -> int:
        return self.consensus_boundary + self.sign_boundary + self.finalize_boundary


def evm_sign_hash(d: DepositData) -> bytes:
    return tagged_hash(
        "bridgeless/evm-withdraw",
        d.source_chain_id,
        d.deposit_tx_hash,
        d.tx_nonce,
        d.target_chain_id,
        d.token_addr,
        d.amount,
        d.target_addr,
    )


def utxo_input_sighash(tx_preimage: bytes, input_index: int, prevout_script: bytes) -> bytes:
    return tagged_hash("bridgeless/utxo-sighash", tx_preimage, input_index, prevout_script)


def canonical_sign_hash(
    deposit_data: DepositData,
    target_kind: ChainKind,
    tx_preimage: bytes = b"",
    prevout_scripts: Sequence[bytes] = (),
) -> tuple[bytes, ...]:
    """Hashes the committee signs for a withdrawal of ``deposit_data``.

    EVM targets sign the deposit fields directly. Burn/emit targets sign the
    serialized emit transaction. UTXO targets sign one digest per input, each
    binding the serialized transaction, the input index and its prevout script.
    """
    if target_kind is ChainKind.EVM:
        return (evm_sign_hash(deposit_data),)
    if target_kind is ChainKind.BURN_EMIT:
        if not tx_preimage:
            raise ValueError("burn/emit targets need the serialized emit transaction")
        return (tagged_hash("bridgeless/emit", tx_preimage),)
    if target_kind is ChainKind.UTXO:
        if not prevout_scripts:
            raise ValueError("UTXO targets need at least one input")
        return tuple(
            utxo_input_sighash(tx_preimage, i, script) for i, script in enumerate(prevout_scripts)
        )
    raise ValueError(f"unknown chain kind {target_kind!r}")
