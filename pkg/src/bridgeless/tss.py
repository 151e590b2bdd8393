"""Threshold-signature engine.

The default engine is a trusted oracle: it alone holds the group signing key
and releases an ordinary Ed25519 signature only once *every* committee member
has approved the identical message before the session deadline. That is the
observable contract of a dishonest-majority threshold ECDSA protocol (abort if
any signer misbehaves), without the multiparty arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Optional, Protocol, Sequence

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from .model import HASH_LEN, encode_fields, sha256

SIG_LEN = 64


class TSSError(Exception):
    pass


class DuplicateSession(TSSError):
    pass


class NotASigner(TSSError):
    pass


class SessionClosed(TSSError):
    pass


class UnknownSession(TSSError):
    pass


@dataclass(frozen=True)
class GroupKey:
    group_id: str
    public_key: bytes


class Outcome(Enum):
    PENDING = "pending"
    SIGNATURE = "signature"
    ERROR = "error"


@dataclass(frozen=True)
class SessionResult:
    outcome: Outcome
    signature: Optional[bytes] = None

    @property
    def ok(self) -> bool:
        return self.outcome is Outcome.SIGNATURE


PENDING = SessionResult(Outcome.PENDING)
ERROR = SessionResult(Outcome.ERROR)


@dataclass
class SigningSession:
    session_id: str
    signers: tuple[int, ...]
    message: tuple[bytes, ...]
    deadline_tick: int
    approvals: dict[int, tuple[bytes, ...]] = field(default_factory=dict)
    ready_tick: Optional[int] = None
    signature: Optional[bytes] = None


class ThresholdSigner(Protocol):
    group_key: GroupKey

    def start_signing(self, session_id: str, signers: Sequence[int], message: Sequence[bytes],
                      deadline_tick: int) -> None: ...

    def approve(self, session_id: str, validator: int, message: Sequence[bytes], at_tick: int) -> None: ...

    def session_result(self, session_id: str, at_tick: int) -> SessionResult: ...


def _message_digest(message: Sequence[bytes]) -> tuple[bytes, ...]:
    msg = tuple(bytes(h) for h in message)
    if not msg or any(len(h) != HASH_LEN for h in msg):
        raise ValueError("message must be a non-empty sequence of 32-byte hashes")
    return msg


def _signing_input(group_id: str, digest: bytes) -> bytes:
    return encode_fields("bridgeless/tss", group_id, digest)


@lru_cache(maxsize=256)
def _public_key(raw: bytes) -> Ed25519PublicKey:
    return Ed25519PublicKey.from_public_bytes(raw)


def split_signature(signature: bytes) -> list[bytes]:
    """Per-hash signatures inside a signature blob."""
    if len(signature) == 0 or len(signature) % SIG_LEN:
        raise ValueError("malformed signature blob")
    return [signature[i : i + SIG_LEN] for i in range(0, len(signature), SIG_LEN)]


def verify(group_key: GroupKey, message: Sequence[bytes], signature: bytes) -> bool:
    """True iff ``signature`` is the group's signature over exactly ``message``."""
    try:
        msg = _message_digest(message)
        parts = split_signature(signature)
    except (ValueError, TypeError):
        return False
    if len(parts) != len(msg):
        return False
    try:
        pk = _public_key(group_key.public_key)
        for digest, part in zip(msg, parts):
            pk.verify(part, _signing_input(group_key.group_id, digest))
    except (InvalidSignature, ValueError):
        return False
    return True


class OracleTSS:
    """Trusted-oracle threshold signer; one per bridge instance."""

    def __init__(self, seed: bytes | int = 0, committee_size: Optional[int] = None,
                 group_id: str = "bridgeless"):
        if isinstance(seed, int):
            seed = seed.to_bytes(16, "big", signed=True)
        self._key = Ed25519PrivateKey.from_private_bytes(sha256(b"tss-keygen" + seed))
        raw = self._key.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
        self.group_key = GroupKey(group_id, raw)
        self.committee_size = committee_size
        self.sessions: dict[str, SigningSession] = {}

    def start_signing(self, session_id: str, signers: Sequence[int], message: Sequence[bytes],
                      deadline_tick: int) -> None:
        signer_set = tuple(sorted(set(signers)))
        if not signer_set:
            raise ValueError("a signing session needs at least one signer")
        if self.committee_size is not None and len(signer_set) != self.committee_size:
            raise ValueError(f"committee must have exactly {self.committee_size} members")
        if session_id in self.sessions:
            raise DuplicateSession(session_id)
        self.sessions[session_id] = SigningSession(
            session_id, signer_set, _message_digest(message), deadline_tick
        )

    def _session(self, session_id: str) -> SigningSession:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise UnknownSession(session_id) from None

    def approve(self, session_id: str, validator: int, message: Sequence[bytes], at_tick: int) -> None:
        s = self._session(session_id)
        if validator not in s.signers:
            raise NotASigner(f"validator {validator} is not in {s.signers}")
        if at_tick >= s.deadline_tick or s.ready_tick is not None:
            raise SessionClosed(session_id)
        s.approvals.setdefault(validator, _message_digest(message))
        if len(s.approvals) == len(s.signers) and all(m == s.message for m in s.approvals.values()):
            s.signature = b"".join(
                self._key.sign(_signing_input(self.group_key.group_id, d)) for d in s.message
            )
            s.ready_tick = at_tick + 1

    def session_result(self, session_id: str, at_tick: int) -> SessionResult:
        s = self._session(session_id)
        if s.ready_tick is not None and at_tick >= s.ready_tick:
            return SessionResult(Outcome.SIGNATURE, s.signature)
        if s.ready_tick is None and at_tick >= s.deadline_tick:
            return ERROR
        return PENDING

    def sign_unchecked(self, message: Sequence[bytes]) -> bytes:
        """Test hook: sign without a session (for forging ledger inputs in tests)."""
        return b"".join(
            self._key.sign(_signing_input(self.group_key.group_id, d)) for d in _message_digest(message)
        )
