"""Per-chain verifier/constructor used by validators.

Every client exposes ``get_deposit_data``, ``get_withdrawal_tx``,
``get_hash_of_withdrawal`` and ``submit_tx``. Reads go straight to the
simulated ledger; all validators reading the same ledger see the same state.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Optional

from .ledgers import common as lc
from .ledgers.burnemit import BURN, BurnEmitChain, EmitTx, emit_sign_hash
from .ledgers.evm import DEPOSITED_ERC20, DEPOSITED_NATIVE, NATIVE, EvmChain, EvmReceipt, EvmTx, EvmTxRecord
from .ledgers.evm import withdraw_fields
from .ledgers.utxo import Outpoint, TxIn, TxOut, UtxoChain, UtxoTx
from .model import ChainKind, DepositData, DepositIdentifier, evm_sign_hash, utxo_input_sighash
from .tss import split_signature


class ClientError(Exception):
    """Verification or construction failed; the caller may retry later."""


class NotFound(ClientError):
    pass


class NotConfirmed(ClientError):
    pass


class NoSuchEvent(ClientError):
    pass


class WrongEventKind(ClientError):
    pass


class WrongAddress(ClientError):
    pass


class MissingOpReturn(ClientError):
    pass


class MalformedOpReturn(ClientError):
    pass


class NotABurn(ClientError):
    pass


class BadServiceEntry(ClientError):
    pass


class InsufficientFunds(ClientError):
    pass


class IndexOutOfRange(ClientError):
    pass


class UnsupportedToken(ClientError):
    pass


class TokenRegistry:
    """Identifier of each bridged asset on each chain.

    ``assets`` maps an asset name to ``{chain_id: local_id}``; the local id is
    an ERC20 address (``""`` for the native coin) on EVM chains, ``""`` on the
    UTXO chain and an asset id on burn/emit chains.
    """

    def __init__(self, assets: Mapping[str, Mapping[str, str]]):
        self.assets = {name: dict(ids) for name, ids in assets.items()}
        self._reverse = {
            (chain, local): name for name, ids in self.assets.items() for chain, local in ids.items()
        }

    def translate(self, src_chain: str, src_token: str, dst_chain: str) -> str:
        name = self._reverse.get((src_chain, src_token))
        if name is None or dst_chain not in self.assets[name]:
            raise UnsupportedToken(f"{src_token!r} on {src_chain} has no counterpart on {dst_chain}")
        return self.assets[name][dst_chain]


DEFAULT_ADDRESS_PATTERNS = {
    ChainKind.EVM: r"0x[0-9a-fA-F]{40}",
    ChainKind.UTXO: r"(bc1|tb1)[a-z0-9]{8,87}",
    ChainKind.BURN_EMIT: r"Z[A-Za-z0-9]{10,}",
}


@dataclass(frozen=True)
class EvmWithdrawal:
    kind: str  # "erc20" | "native"
    fields: DepositData


class ChainClient:
    kind: ChainKind

    def __init__(self, chain, required_confirmations: int, tokens: TokenRegistry,
                 address_pattern: Optional[str] = None, max_amount: Optional[int] = None):
        if required_confirmations < 1:
            raise ValueError("required confirmations must be positive")
        self.chain = chain
        self.required_confirmations = required_confirmations
        self.tokens = tokens
        self._address_re = re.compile(address_pattern or DEFAULT_ADDRESS_PATTERNS[self.kind])
        self.max_amount = max_amount

    @property
    def chain_id(self) -> str:
        return self.chain.chain_id

    def is_valid_address(self, addr: str) -> bool:
        return bool(self._address_re.fullmatch(addr))

    def is_valid_amount(self, amount: int) -> bool:
        return amount > 0 and (self.max_amount is None or amount <= self.max_amount)

    def local_token(self, deposit: DepositData) -> str:
        return self.tokens.translate(deposit.source_chain_id, deposit.token_addr, self.chain_id)

    def _require_own(self, dep_id: DepositIdentifier) -> None:
        if dep_id.chain_id != self.chain_id:
            raise ValueError(f"{dep_id} does not belong to {self.chain_id}")

    def _require_target(self, deposit: DepositData) -> None:
        if deposit.target_chain_id != self.chain_id:
            raise ValueError(f"withdrawal targets {deposit.target_chain_id}, not {self.chain_id}")

    def _check_confirmations(self, confirmations: int) -> None:
        if confirmations <= 0 or confirmations < self.required_confirmations:
            raise NotConfirmed(f"{confirmations} < {self.required_confirmations} confirmations")

    @staticmethod
    def _build(dep_id: DepositIdentifier, **kw) -> DepositData:
        try:
            return DepositData(
                source_chain_id=dep_id.chain_id, deposit_tx_hash=dep_id.tx_hash,
                tx_nonce=dep_id.tx_nonce, **kw,
            )
        except ValueError as exc:
            raise WrongEventKind(str(exc)) from None

    def get_deposit_data(self, dep_id: DepositIdentifier) -> DepositData:
        raise NotImplementedError

    def get_withdrawal_tx(self, dep_id: DepositIdentifier, deposit: DepositData):
        raise NotImplementedError

    def get_hash_of_withdrawal(self, dep_id: DepositIdentifier, deposit: DepositData) -> tuple[bytes, ...]:
        raise NotImplementedError

    def submit_tx(self, tx, signature: Optional[bytes] = None) -> bytes:
        raise NotImplementedError


class EvmClient(ChainClient):
    kind = ChainKind.EVM

    def __init__(self, chain: EvmChain, required_confirmations: int, tokens: TokenRegistry, **kw):
        super().__init__(chain, required_confirmations, tokens, **kw)
        self.rpc = chain

    def get_deposit_data(self, dep_id: DepositIdentifier) -> DepositData:
        self._require_own(dep_id)
        try:
            rec = self.rpc.get_transaction(dep_id.tx_hash)
        except lc.NotFound:
            raise NotFound(str(dep_id)) from None
        self._check_confirmations(rec.confirmations)
        events = rec.receipt.events
        if dep_id.tx_nonce >= len(events):
            raise NoSuchEvent(f"receipt has {len(events)} events")
        ev = events[dep_id.tx_nonce]
        if ev.name == DEPOSITED_ERC20:
            token = ev.token_addr
        elif ev.name == DEPOSITED_NATIVE:
            token = NATIVE
        else:
            raise WrongEventKind(ev.name)
        return self._build(
            dep_id, sender=ev.sender, token_addr=token, amount=ev.amount,
            target_chain_id=ev.target_chain_id, target_addr=ev.target_addr,
        )

    def get_withdrawal_tx(self, dep_id: DepositIdentifier, deposit: DepositData) -> EvmWithdrawal:
        self._require_target(deposit)
        token = self.local_token(deposit)
        return EvmWithdrawal("native" if token == NATIVE else "erc20", withdraw_fields(deposit, token))

    def get_hash_of_withdrawal(self, dep_id: DepositIdentifier, deposit: DepositData) -> tuple[bytes, ...]:
        return (evm_sign_hash(self.get_withdrawal_tx(dep_id, deposit).fields),)

    def submit_tx(self, tx: EvmWithdrawal, signature: Optional[bytes] = None, caller: str = "") -> bytes:
        return self.chain.withdraw(tx.kind, tx.fields, signature or b"", caller=caller)


class LyingEvmProvider:
    """RPC provider that reports fabricated deposits (safety ablation)."""

    def __init__(self, chain: EvmChain):
        self.chain = chain
        self.fakes: dict[bytes, EvmTxRecord] = {}

    def forge_deposit(self, tx_hash: bytes, event) -> None:
        tx = EvmTx(tx_hash, event.sender, "depositErc20")
        self.fakes[tx_hash] = EvmTxRecord(tx, EvmReceipt((event,)), 1, 10**6)

    def get_transaction(self, tx_hash: bytes) -> EvmTxRecord:
        if tx_hash in self.fakes:
            return self.fakes[tx_hash]
        return self.chain.get_transaction(tx_hash)


class UtxoClient(ChainClient):
    kind = ChainKind.UTXO

    def __init__(self, chain: UtxoChain, required_confirmations: int, tokens: TokenRegistry, **kw):
        super().__init__(chain, required_confirmations, tokens, **kw)
        self.locked_inputs: set[Outpoint] = set()

    @property
    def bridge_address(self) -> str:
        return self.chain.bridge_address

    def get_deposit_data(self, dep_id: DepositIdentifier) -> DepositData:
        self._require_own(dep_id)
        try:
            rec = self.chain.get_transaction(dep_id.tx_hash)
        except lc.NotFound:
            raise NotFound(str(dep_id)) from None
        self._check_confirmations(rec.confirmations)
        tx = rec.tx
        k = dep_id.tx_nonce
        if k >= len(tx.vout) or tx.vout[k].address != self.bridge_address:
            raise WrongAddress(f"output {k} does not pay the bridge address")
        if k + 1 >= len(tx.vout) or tx.vout[k + 1].op_return is None:
            raise MissingOpReturn(f"output {k + 1} carries no OP_RETURN")
        try:
            target_chain, target_addr = lc.decode_target(tx.vout[k + 1].op_return)
        except ValueError as exc:
            raise MalformedOpReturn(str(exc)) from None
        if not tx.vin:
            raise WrongAddress("deposit has no sender input")
        sender = self.chain.prevout(tx.vin[0].outpoint).address
        return self._build(
            dep_id, sender=sender, token_addr="", amount=tx.vout[k].value,
            target_chain_id=target_chain, target_addr=target_addr,
        )

    def get_withdrawal_tx(self, dep_id: DepositIdentifier, deposit: DepositData) -> UtxoTx:
        self._require_target(deposit)
        self.local_token(deposit)
        amount = deposit.amount
        picked: list[TxIn] = []
        total = 0
        for op, out in self.chain.unspent_for(self.bridge_address):
            if op in self.locked_inputs:
                continue
            picked.append(TxIn(op[0], op[1]))
            total += out.value
            if total >= amount:
                break
        if total < amount:
            raise InsufficientFunds(f"bridge holds {total} spendable < {amount}")
        outs = [TxOut(amount, deposit.target_addr)]
        if total > amount:
            outs.append(TxOut(total - amount, self.bridge_address))
        return UtxoTx(tuple(picked), tuple(outs))

    def compute_sighash(self, tx: UtxoTx, input_index: int) -> bytes:
        if not 0 <= input_index < len(tx.vin):
            raise IndexOutOfRange(f"input {input_index} of {len(tx.vin)}")
        prev = self.chain.prevout(tx.vin[input_index].outpoint)
        return utxo_input_sighash(tx.preimage(), input_index, prev.script())

    def sighashes(self, tx: UtxoTx) -> tuple[bytes, ...]:
        return tuple(self.compute_sighash(tx, i) for i in range(len(tx.vin)))

    def get_hash_of_withdrawal(self, dep_id: DepositIdentifier, deposit: DepositData) -> tuple[bytes, ...]:
        return self.sighashes(self.get_withdrawal_tx(dep_id, deposit))

    def matches_withdrawal(self, tx: UtxoTx, deposit: DepositData) -> bool:
        """Whether ``tx`` is a well-formed withdrawal for ``deposit`` from bridge funds."""
        if not tx.vout or tx.vout[0] != TxOut(deposit.amount, deposit.target_addr):
            return False
        if any(o.address != self.bridge_address for o in tx.vout[1:]):
            return False
        try:
            return all(self.chain.prevout(i.outpoint).address == self.bridge_address for i in tx.vin)
        except lc.NotFound:
            return False

    @staticmethod
    def inject_signatures(tx: UtxoTx, signature: bytes) -> UtxoTx:
        return tx.with_witnesses(split_signature(signature))

    def submit_tx(self, tx: UtxoTx, signature: Optional[bytes] = None) -> bytes:
        if signature is not None:
            tx = self.inject_signatures(tx, signature)
        return self.chain.submit_tx(tx)

    def lock(self, tx: UtxoTx) -> None:
        self.locked_inputs.update(i.outpoint for i in tx.vin)

    def prune_locked(self) -> None:
        """Forget locked outpoints whose spend is confirmed."""
        spent = self.chain.spent_by
        self.locked_inputs = {
            op for op in self.locked_inputs if not (op in spent and spent[op] in self.chain.inclusion)
        }


class BurnEmitClient(ChainClient):
    kind = ChainKind.BURN_EMIT

    def get_deposit_data(self, dep_id: DepositIdentifier) -> DepositData:
        self._require_own(dep_id)
        try:
            rec = self.chain.get_transaction(dep_id.tx_hash)
        except lc.NotFound:
            raise NotFound(str(dep_id)) from None
        if rec.kind != BURN:
            raise NotABurn(rec.kind)
        self._check_confirmations(rec.confirmations)
        if dep_id.tx_nonce >= len(rec.service_entries):
            raise BadServiceEntry(f"no service entry {dep_id.tx_nonce}")
        try:
            target_chain, target_addr = lc.decode_target(rec.service_entries[dep_id.tx_nonce])
        except ValueError as exc:
            raise BadServiceEntry(str(exc)) from None
        return self._build(
            dep_id, sender=rec.sender, token_addr=rec.asset_id, amount=rec.amount,
            target_chain_id=target_chain, target_addr=target_addr,
        )

    def get_withdrawal_tx(self, dep_id: DepositIdentifier, deposit: DepositData) -> EmitTx:
        self._require_target(deposit)
        return EmitTx(self.local_token(deposit), deposit.target_addr, deposit.amount, dep_id.canonical())

    def get_hash_of_withdrawal(self, dep_id: DepositIdentifier, deposit: DepositData) -> tuple[bytes, ...]:
        return (emit_sign_hash(self.get_withdrawal_tx(dep_id, deposit)),)

    def submit_tx(self, tx: EmitTx, signature: Optional[bytes] = None) -> bytes:
        return self.chain.submit_emit(tx, signature or b"")


def make_client(chain, required_confirmations: int, tokens: TokenRegistry, **kw) -> ChainClient:
    if isinstance(chain, EvmChain):
        return EvmClient(chain, required_confirmations, tokens, **kw)
    if isinstance(chain, UtxoChain):
        return UtxoClient(chain, required_confirmations, tokens, **kw)
    if isinstance(chain, BurnEmitChain):
        return BurnEmitClient(chain, required_confirmations, tokens, **kw)
    raise TypeError(f"no client for {type(chain).__name__}")
