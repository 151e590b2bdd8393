"""Omniscient safety and agreement checks over chains and validator states."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterator, Optional

from ..clients import ClientError, make_client
from ..ledgers import BurnEmitChain, EvmChain, UtxoChain
from ..model import DepositIdentifier, RequestStatus
from ..validator import Bridge


@dataclass(frozen=True)
class Violation:
    kind: str  # unmapped | no-deposit | mismatch | unapproved | double-withdrawal | disagreement
    tick: int
    detail: str

    def __str__(self) -> str:
        return f"[{self.kind}] tick={self.tick} {self.detail}"


class ObserverViolation(AssertionError):
    def __init__(self, violations: list[Violation]):
        super().__init__("\n".join(str(v) for v in violations))
        self.violations = violations


@dataclass(frozen=True)
class ExecutedWithdrawal:
    chain_id: str
    tx_ref: bytes
    deposit_id: Optional[DepositIdentifier]
    amount: int
    recipient: str


class SafetyObserver:
    """Checks (a) withdrawal-to-deposit mapping, (b) uniqueness, (c) honest agreement.

    Ground truth for deposits comes from fresh readers that require a single
    confirmation, independent of the validators' clients.
    """

    def __init__(self, bridge: Bridge, chains: dict, tokens):
        self.bridge = bridge
        self.chains = chains
        self.truth = {cid: make_client(chain, 1, tokens) for cid, chain in chains.items()}
        self.violations: list[Violation] = []
        self._seen: set[tuple[str, str]] = set()
        self.boundaries_checked = 0

    def attach(self) -> "SafetyObserver":
        self.bridge.boundary_hooks.append(lambda bridge, sid: self.check_agreement())
        return self

    def _report(self, kind: str, key: str, detail: str) -> None:
        if (kind, key) in self._seen:
            return
        self._seen.add((kind, key))
        self.violations.append(Violation(kind, self.bridge.tick, detail))

    def executed_withdrawals(self) -> Iterator[ExecutedWithdrawal]:
        claims: dict[bytes, DepositIdentifier] = {}
        for v in self.bridge.honest:
            for dep_id, req in v.requests.items():
                if req.withdrawal.withdrawal_tx_id is not None:
                    claims.setdefault(req.withdrawal.withdrawal_tx_id, dep_id)
        for cid, chain in self.chains.items():
            if isinstance(chain, EvmChain):
                for h, f in chain.withdrawals:
                    dep = DepositIdentifier(f.deposit_tx_hash, f.tx_nonce, f.source_chain_id)
                    yield ExecutedWithdrawal(cid, h, dep, f.amount, f.target_addr)
            elif isinstance(chain, BurnEmitChain):
                for digest in chain.emits:
                    emit = chain.txs[digest].emit
                    try:
                        dep = DepositIdentifier.parse(emit.reference)
                    except ValueError:
                        dep = None
                    yield ExecutedWithdrawal(cid, digest, dep, emit.amount, emit.recipient)
            elif isinstance(chain, UtxoChain):
                for txid in chain.live_txids():
                    tx = chain.txs[txid]
                    if not any(chain.prevout(i.outpoint).address == chain.bridge_address for i in tx.vin):
                        continue
                    out = tx.vout[0]
                    yield ExecutedWithdrawal(cid, txid, claims.get(txid), out.value, out.address)

    def check_withdrawals(self) -> None:
        counts: Counter = Counter()
        for w in self.executed_withdrawals():
            ref = f"{w.chain_id}:{w.tx_ref.hex()}"
            if w.deposit_id is None:
                self._report("unmapped", ref, f"{ref} pays {w.amount} to {w.recipient} without a known deposit")
                continue
            counts[w.deposit_id] += 1
            try:
                d = self.truth[w.deposit_id.chain_id].get_deposit_data(w.deposit_id)
            except (ClientError, KeyError, ValueError) as exc:
                self._report("no-deposit", ref, f"{ref} cites {w.deposit_id} which is not a deposit ({exc})")
                continue
            if (d.target_chain_id, d.amount, d.target_addr) != (w.chain_id, w.amount, w.recipient):
                self._report(
                    "mismatch", ref,
                    f"{ref} pays {w.amount} to {w.recipient} on {w.chain_id}; deposit asks "
                    f"{d.amount} to {d.target_addr} on {d.target_chain_id}",
                )
            if not any(
                (r := v.requests.get(w.deposit_id)) is not None and r.status >= RequestStatus.PROCESSED
                for v in self.bridge.honest
            ):
                self._report("unapproved", ref, f"{ref} for {w.deposit_id} was never signed off by honest validators")
        for dep, c in counts.items():
            if c > 1:
                self._report("double-withdrawal", dep.canonical(), f"{dep} withdrawn {c} times")

    def check_agreement(self) -> None:
        self.boundaries_checked += 1
        honest = self.bridge.honest
        known = set().union(*(v.requests for v in honest)) if honest else set()
        for dep in sorted(known):
            seen = {
                v.index: (v.requests[dep].status.name.lower() if dep in v.requests else "unknown")
                for v in honest
            }
            if len(set(seen.values())) > 1:
                self._report(
                    "disagreement", f"{self.bridge.tick}:{dep.canonical()}",
                    f"honest statuses differ for {dep}: {seen}",
                )

    def check(self) -> list[Violation]:
        self.check_withdrawals()
        return list(self.violations)
