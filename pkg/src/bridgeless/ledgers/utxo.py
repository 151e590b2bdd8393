"""Bitcoin-like UTXO chain with mempool, zero fees and reorg injection."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from ..model import encode_fields, tagged_hash, utxo_input_sighash
from ..tss import GroupKey, verify
from .common import DuplicateTx, LedgerError, NotFound

Outpoint = tuple[bytes, int]


class DoubleSpend(LedgerError):
    pass


class BadWitness(LedgerError):
    pass


class MalformedTx(LedgerError):
    pass


class UnknownTx(LedgerError):
    pass


@dataclass(frozen=True)
class TxOut:
    value: int
    address: str = ""
    op_return: Optional[bytes] = None

    def __post_init__(self) -> None:
        if self.value < 0:
            raise ValueError("output value must be non-negative")
        if self.op_return is not None and self.address:
            raise ValueError("an OP_RETURN output carries no address")

    @property
    def spendable(self) -> bool:
        return self.op_return is None

    def script(self) -> bytes:
        if self.op_return is not None:
            return encode_fields("op_return", self.op_return)
        return encode_fields("p2addr", self.address)


@dataclass(frozen=True)
class TxIn:
    txid: bytes
    vout: int
    witness: bytes = b""

    @property
    def outpoint(self) -> Outpoint:
        return (self.txid, self.vout)


@dataclass(frozen=True)
class UtxoTx:
    vin: tuple[TxIn, ...]
    vout: tuple[TxOut, ...]
    lock_time: int = 0

    def preimage(self) -> bytes:
        """Serialization without witnesses (what txid and sighashes commit to)."""
        parts: list = ["utxo-tx", self.lock_time, len(self.vin)]
        for i in self.vin:
            parts += [i.txid, i.vout]
        parts.append(len(self.vout))
        for o in self.vout:
            parts.append(o.script())
            parts.append(o.value)
        return encode_fields(*parts)

    @property
    def txid(self) -> bytes:
        return tagged_hash("utxo-txid", self.preimage())

    def with_witnesses(self, witnesses: list[bytes]) -> "UtxoTx":
        if len(witnesses) != len(self.vin):
            raise ValueError("one witness per input")
        return replace(self, vin=tuple(replace(i, witness=w) for i, w in zip(self.vin, witnesses)))


@dataclass(frozen=True)
class UtxoTxRecord:
    tx: UtxoTx
    confirmations: int
    inclusion_height: Optional[int]


@dataclass
class UtxoChain:
    chain_id: str
    bridge_address: str
    group_key: Optional[GroupKey] = None
    height: int = 0
    mempool: dict[bytes, UtxoTx] = field(default_factory=dict)
    blocks: list[list[bytes]] = field(default_factory=list)
    utxo_set: dict[Outpoint, TxOut] = field(default_factory=dict)
    reorged_txs: set[bytes] = field(default_factory=set)
    txs: dict[bytes, UtxoTx] = field(default_factory=dict)
    inclusion: dict[bytes, int] = field(default_factory=dict)
    spent_by: dict[Outpoint, bytes] = field(default_factory=dict)
    _mempool_spent: set[Outpoint] = field(default_factory=set)
    _coinbase: int = 0

    def fund(self, address: str, value: int) -> bytes:
        """Genesis/coinbase payment; included at the next block."""
        self._coinbase += 1
        tx = UtxoTx((), (TxOut(value, address),), lock_time=self._coinbase)
        self.txs[tx.txid] = tx
        self.mempool[tx.txid] = tx
        return tx.txid

    def prevout(self, outpoint: Outpoint) -> TxOut:
        txid, vout = outpoint
        tx = self.txs.get(txid)
        if tx is None or not 0 <= vout < len(tx.vout):
            raise NotFound(f"{txid.hex()}:{vout}")
        return tx.vout[vout]

    def sighash(self, tx: UtxoTx, index: int) -> bytes:
        return utxo_input_sighash(tx.preimage(), index, self.prevout(tx.vin[index].outpoint).script())

    def submit_tx(self, tx: UtxoTx) -> bytes:
        if not tx.vin or not tx.vout:
            raise MalformedTx("transaction needs inputs and outputs")
        txid = tx.txid
        if txid in self.reorged_txs:
            raise MalformedTx("transaction was invalidated by a reorg")
        if txid in self.txs and (txid in self.mempool or txid in self.inclusion):
            raise DuplicateTx(txid.hex())
        outpoints = [i.outpoint for i in tx.vin]
        if len(set(outpoints)) != len(outpoints):
            raise MalformedTx("duplicate input")
        total_in = 0
        for idx, (inp, op) in enumerate(zip(tx.vin, outpoints)):
            try:
                prev = self.prevout(op)
            except NotFound:
                raise MalformedTx(f"unknown input {op[0].hex()}:{op[1]}") from None
            if op not in self.utxo_set or op in self._mempool_spent:
                raise DoubleSpend(f"{op[0].hex()}:{op[1]} is not unspent")
            if prev.address == self.bridge_address:
                digest = utxo_input_sighash(tx.preimage(), idx, prev.script())
                if self.group_key is None or not verify(self.group_key, (digest,), inp.witness):
                    raise BadWitness(f"input {idx} lacks a valid group signature")
            total_in += prev.value
        if total_in != sum(o.value for o in tx.vout):
            raise MalformedTx("inputs and outputs must balance (zero fees)")
        self.txs[txid] = tx
        self.mempool[txid] = tx
        self._mempool_spent.update(outpoints)
        return txid

    def advance_block(self) -> int:
        self.height += 1
        block = list(self.mempool)
        for txid in block:
            tx = self.mempool[txid]
            for inp in tx.vin:
                self.utxo_set.pop(inp.outpoint, None)
                self.spent_by[inp.outpoint] = txid
            for k, out in enumerate(tx.vout):
                if out.spendable:
                    self.utxo_set[(txid, k)] = out
            self.inclusion[txid] = self.height
        self.blocks.append(block)
        self.mempool.clear()
        self._mempool_spent.clear()
        return self.height

    def inject_reorg(self, txid: bytes) -> None:
        """Invalidate a confirmed transaction (and anything spending its outputs)."""
        if txid not in self.inclusion:
            raise UnknownTx(txid.hex())
        tx = self.txs[txid]
        for k in range(len(tx.vout)):
            child = self.spent_by.get((txid, k))
            if child is not None and child in self.inclusion:
                self.inject_reorg(child)
        for child_id, child in list(self.mempool.items()):
            if any(i.txid == txid for i in child.vin):
                del self.mempool[child_id]
                self._mempool_spent.difference_update(i.outpoint for i in child.vin)
        height = self.inclusion.pop(txid)
        self.blocks[height - 1].remove(txid)
        self.reorged_txs.add(txid)
        for k, out in enumerate(tx.vout):
            self.utxo_set.pop((txid, k), None)
        for inp in tx.vin:
            self.spent_by.pop(inp.outpoint, None)
            self.utxo_set[inp.outpoint] = self.prevout(inp.outpoint)

    def confirmations(self, txid: bytes) -> int:
        if txid in self.reorged_txs:
            return -1
        if txid in self.mempool:
            return 0
        return self.height - self.inclusion[txid] + 1

    def get_transaction(self, txid: bytes) -> UtxoTxRecord:
        tx = self.txs.get(txid)
        if tx is None or not (txid in self.mempool or txid in self.inclusion or txid in self.reorged_txs):
            raise NotFound(txid.hex())
        return UtxoTxRecord(tx, self.confirmations(txid), self.inclusion.get(txid))

    def spendable(self, outpoint: Outpoint) -> bool:
        """Unspent and not already claimed by a mempool transaction."""
        return outpoint in self.utxo_set and outpoint not in self._mempool_spent

    def unspent_for(self, address: str) -> list[tuple[Outpoint, TxOut]]:
        return sorted((op, out) for op, out in self.utxo_set.items() if out.address == address)

    def live_txids(self) -> list[bytes]:
        """Transactions currently in the mempool or in a block."""
        return [h for h in self.txs if h in self.mempool or h in self.inclusion]
