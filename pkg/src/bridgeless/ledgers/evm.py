"""EVM-like account chain with the bridge deposit and withdraw contracts."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from ..model import DepositData, evm_sign_hash, tagged_hash
from ..tss import GroupKey, verify
from .common import BadSignature, InsufficientBalance, LedgerError, NotFound, ZeroAmount

NATIVE = ""
DEPOSITED_ERC20 = "DepositedErc20"
DEPOSITED_NATIVE = "DepositedNative"


class EmptyAddress(LedgerError):
    pass


class AlreadyWithdrawn(LedgerError):
    pass


class WrongChain(LedgerError):
    pass


@dataclass(frozen=True)
class EvmEvent:
    index: int
    name: str
    token_addr: str
    amount: int
    target_chain_id: str
    target_addr: str
    sender: str


@dataclass(frozen=True)
class EvmReceipt:
    events: tuple[EvmEvent, ...] = ()


@dataclass(frozen=True)
class EvmTx:
    tx_hash: bytes
    sender: str
    method: str
    args: tuple = ()


@dataclass(frozen=True)
class EvmTxRecord:
    tx: EvmTx
    receipt: EvmReceipt
    inclusion_height: Optional[int]
    confirmations: int


@dataclass
class _Stored:
    tx: EvmTx
    receipt: EvmReceipt
    inclusion_height: Optional[int] = None


@dataclass
class EvmChain:
    chain_id: str
    bridge_address: str
    group_key: Optional[GroupKey] = None
    replay_protection: bool = True
    height: int = 0
    accounts: dict[str, int] = field(default_factory=dict)
    tokens: dict[str, dict[str, int]] = field(default_factory=dict)
    txs: dict[bytes, _Stored] = field(default_factory=dict)
    used_sign_hashes: set[bytes] = field(default_factory=set)
    withdrawals: list[tuple[bytes, DepositData]] = field(default_factory=list)
    _pending: list[bytes] = field(default_factory=list)
    _nonce: int = 0

    # genesis helpers
    def mint(self, token_addr: str, addr: str, amount: int) -> None:
        if token_addr == NATIVE:
            self.accounts[addr] = self.accounts.get(addr, 0) + amount
        else:
            bal = self.tokens.setdefault(token_addr, {})
            bal[addr] = bal.get(addr, 0) + amount

    def balance_of(self, token_addr: str, addr: str) -> int:
        if token_addr == NATIVE:
            return self.accounts.get(addr, 0)
        return self.tokens.get(token_addr, {}).get(addr, 0)

    def total_supply(self, token_addr: str) -> int:
        book = self.accounts if token_addr == NATIVE else self.tokens.get(token_addr, {})
        return sum(book.values())

    def _move(self, token_addr: str, src: str, dst: str, amount: int) -> None:
        book = self.accounts if token_addr == NATIVE else self.tokens.setdefault(token_addr, {})
        if book.get(src, 0) < amount:
            raise InsufficientBalance(f"{src} holds {book.get(src, 0)} < {amount}")
        book[src] -= amount
        book[dst] = book.get(dst, 0) + amount

    def _record(self, sender: str, method: str, args: tuple, events: tuple[EvmEvent, ...] = ()) -> bytes:
        self._nonce += 1
        h = tagged_hash("evm-tx", self.chain_id, self._nonce, sender, method, repr(args))
        self.txs[h] = _Stored(EvmTx(h, sender, method, args), EvmReceipt(events))
        self._pending.append(h)
        return h

    # deposit contract
    def deposit_erc20(self, sender: str, token_addr: str, amount: int, target_chain_id: str,
                      target_addr: str) -> bytes:
        if amount <= 0:
            raise ZeroAmount("deposit amount must be positive")
        if token_addr == NATIVE:
            raise EmptyAddress("ERC20 deposit needs a token address")
        self._move(token_addr, sender, self.bridge_address, amount)
        ev = EvmEvent(0, DEPOSITED_ERC20, token_addr, amount, target_chain_id, target_addr, sender)
        return self._record(sender, "depositErc20", (token_addr, amount, target_chain_id, target_addr), (ev,))

    def deposit_native(self, sender: str, amount: int, target_chain_id: str, target_addr: str) -> bytes:
        if amount <= 0:
            raise ZeroAmount("deposit amount must be positive")
        self._move(NATIVE, sender, self.bridge_address, amount)
        ev = EvmEvent(0, DEPOSITED_NATIVE, NATIVE, amount, target_chain_id, target_addr, sender)
        return self._record(sender, "depositNative", (amount, target_chain_id, target_addr), (ev,))

    def transfer(self, sender: str, token_addr: str, to: str, amount: int) -> bytes:
        """Plain transfer; emits no bridge events."""
        self._move(token_addr, sender, to, amount)
        return self._record(sender, "transfer", (token_addr, to, amount))

    # withdraw contract
    def withdraw(self, kind: str, fields: DepositData, signature: bytes, caller: str = "") -> bytes:
        """``withdrawERC20`` / ``withdrawNative``; any caller may submit.

        ``fields.token_addr`` is the token on *this* chain (empty for native).
        """
        if kind not in ("erc20", "native"):
            raise ValueError(f"unknown withdraw kind {kind!r}")
        if fields.amount <= 0:
            raise ZeroAmount("the withdrawn amount must be positive")
        if not fields.target_addr or (kind == "erc20" and not fields.token_addr):
            raise EmptyAddress("token and receiver addresses must be non-empty")
        if kind == "native" and fields.token_addr != NATIVE:
            raise EmptyAddress("native withdrawals carry no token address")
        if fields.target_chain_id != self.chain_id:
            raise WrongChain(f"withdrawal targets {fields.target_chain_id}")
        sign_hash = evm_sign_hash(fields)
        if self.group_key is None or not verify(self.group_key, (sign_hash,), signature):
            raise BadSignature("signature does not verify for the recomputed signHash")
        if self.replay_protection and sign_hash in self.used_sign_hashes:
            raise AlreadyWithdrawn(sign_hash.hex())
        self._move(fields.token_addr, self.bridge_address, fields.target_addr, fields.amount)
        self.used_sign_hashes.add(sign_hash)
        h = self._record(caller or "anyone", f"withdraw:{kind}", (fields,))
        self.withdrawals.append((h, fields))
        return h

    # reads
    def _confirmations(self, s: _Stored) -> int:
        return 0 if s.inclusion_height is None else self.height - s.inclusion_height + 1

    def get_transaction(self, tx_hash: bytes) -> EvmTxRecord:
        s = self.txs.get(tx_hash)
        if s is None:
            raise NotFound(tx_hash.hex())
        return EvmTxRecord(s.tx, s.receipt, s.inclusion_height, self._confirmations(s))

    def get_receipt(self, tx_hash: bytes) -> EvmReceipt:
        return self.get_transaction(tx_hash).receipt

    def advance_block(self) -> int:
        self.height += 1
        for h in self._pending:
            self.txs[h].inclusion_height = self.height
        self._pending.clear()
        return self.height


def withdraw_fields(deposit: DepositData, local_token: str) -> DepositData:
    """Deposit fields as the withdraw contract on the target chain expects them."""
    return replace(deposit, token_addr=local_token)
