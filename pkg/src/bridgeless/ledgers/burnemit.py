"""Zano-like chain: deposits burn an asset, withdrawals emit it under a group signature."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..model import encode_fields, tagged_hash
from ..tss import GroupKey, verify
from .common import BadSignature, DuplicateTx, InsufficientBalance, LedgerError, NotFound, ZeroAmount

BURN = "burnOperation"
EMIT = "emitOperation"
OTHER = "other"


@dataclass(frozen=True)
class EmitTx:
    asset_id: str
    recipient: str
    amount: int
    # Canonical deposit identifier this emit settles; makes the tx unique per deposit.
    reference: str

    def preimage(self) -> bytes:
        return encode_fields("emit-tx", self.asset_id, self.recipient, self.amount, self.reference)


def emit_sign_hash(tx: EmitTx) -> bytes:
    return tagged_hash("bridgeless/emit", tx.preimage())


@dataclass(frozen=True)
class BurnEmitRecord:
    tx_hash: bytes
    kind: str
    asset_id: str
    amount: int
    sender: str
    recipient: str
    service_entries: tuple[bytes, ...]
    inclusion_height: Optional[int]
    confirmations: int
    emit: Optional[EmitTx] = None


@dataclass
class _Entry:
    kind: str
    asset_id: str
    amount: int
    sender: str
    recipient: str
    service_entries: tuple[bytes, ...]
    emit: Optional[EmitTx] = None
    inclusion_height: Optional[int] = None


@dataclass
class BurnEmitChain:
    chain_id: str
    group_key: Optional[GroupKey] = None
    height: int = 0
    txs: dict[bytes, _Entry] = field(default_factory=dict)
    asset_supply: dict[str, int] = field(default_factory=dict)
    balances: dict[str, dict[str, int]] = field(default_factory=dict)
    emits: list[bytes] = field(default_factory=list)
    _pending: list[bytes] = field(default_factory=list)
    _nonce: int = 0

    def mint(self, asset_id: str, addr: str, amount: int) -> None:
        book = self.balances.setdefault(asset_id, {})
        book[addr] = book.get(addr, 0) + amount
        self.asset_supply[asset_id] = self.asset_supply.get(asset_id, 0) + amount

    def balance_of(self, asset_id: str, addr: str) -> int:
        return self.balances.get(asset_id, {}).get(addr, 0)

    def _store(self, h: bytes, entry: _Entry) -> bytes:
        self.txs[h] = entry
        self._pending.append(h)
        return h

    def submit_burn(self, sender: str, asset_id: str, amount: int, service_entries) -> bytes:
        if amount <= 0:
            raise ZeroAmount("burn amount must be positive")
        book = self.balances.setdefault(asset_id, {})
        if book.get(sender, 0) < amount:
            raise InsufficientBalance(f"{sender} holds {book.get(sender, 0)} < {amount}")
        book[sender] -= amount
        self.asset_supply[asset_id] = self.asset_supply.get(asset_id, 0) - amount
        self._nonce += 1
        entries = tuple(bytes(e) for e in service_entries)
        h = tagged_hash("zano-burn", self.chain_id, self._nonce, sender, asset_id, amount, *entries)
        return self._store(h, _Entry(BURN, asset_id, amount, sender, "", entries))

    def transfer(self, sender: str, asset_id: str, to: str, amount: int) -> bytes:
        book = self.balances.setdefault(asset_id, {})
        if book.get(sender, 0) < amount:
            raise InsufficientBalance(f"{sender} holds {book.get(sender, 0)} < {amount}")
        book[sender] -= amount
        book[to] = book.get(to, 0) + amount
        self._nonce += 1
        h = tagged_hash("zano-transfer", self.chain_id, self._nonce, sender, asset_id, to, amount)
        return self._store(h, _Entry(OTHER, asset_id, amount, sender, to, ()))

    def submit_emit(self, tx: EmitTx, signature: bytes) -> bytes:
        digest = emit_sign_hash(tx)
        if digest in self.txs:
            raise DuplicateTx(digest.hex())
        if tx.amount <= 0:
            raise ZeroAmount("emit amount must be positive")
        if self.group_key is None or not verify(self.group_key, (digest,), signature):
            raise BadSignature("emit is not signed by the bridge group key")
        book = self.balances.setdefault(tx.asset_id, {})
        book[tx.recipient] = book.get(tx.recipient, 0) + tx.amount
        self.asset_supply[tx.asset_id] = self.asset_supply.get(tx.asset_id, 0) + tx.amount
        self.emits.append(digest)
        return self._store(digest, _Entry(EMIT, tx.asset_id, tx.amount, "", tx.recipient, (), tx))

    def get_transaction(self, tx_hash: bytes) -> BurnEmitRecord:
        e = self.txs.get(tx_hash)
        if e is None:
            raise NotFound(tx_hash.hex())
        conf = 0 if e.inclusion_height is None else self.height - e.inclusion_height + 1
        return BurnEmitRecord(
            tx_hash, e.kind, e.asset_id, e.amount, e.sender, e.recipient, e.service_entries,
            e.inclusion_height, conf, e.emit,
        )

    def advance_block(self) -> int:
        self.height += 1
        for h in self._pending:
            self.txs[h].inclusion_height = self.height
        self._pending.clear()
        return self.height
