"""Validator state machine and the session-structured withdrawal protocol.

A :class:`Bridge` owns the shared clock, network, threshold-signing engine and
ledgers, plus one :class:`Validator` per index. Sessions are consecutive and
occupy ticks ``[sid*L, (sid+1)*L)`` where ``L`` is the sum of the consensus,
signing and finalization boundaries.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Callable, Iterable, Iterator, Mapping, Optional, Sequence

from . import tss as tsslib
from .clients import ChainClient, ClientError, EvmClient, TokenRegistry, UnsupportedToken, UtxoClient, make_client
from .ledgers.common import DuplicateTx, LedgerError
from .ledgers.evm import AlreadyWithdrawn
from .ledgers.utxo import UtxoTx
from .model import (
    DepositIdentifier,
    ProtocolParams,
    RequestData,
    RequestStatus,
    StatusEvent,
    decode_fields,
    encode_fields,
    sha256,
)
from .simnet import RB_KINDS, EventLog, Network, ReliableBroadcast

log = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1

SUBMIT = "submitWithdrawal"
ACCEPT = "acceptance"
SIGNATURE = "signature"


class Flag(str, Enum):
    SILENT_SIGNER = "silentSigner"
    NEVER_ACCEPT = "neverAccept"
    CRASHED_PROPOSER = "crashedProposer"
    ARBITRARY_COMMITTEE = "arbitraryCommittee"
    ACCEPT_THEN_ABORT = "acceptThenAbort"


def parse_flags(names: Iterable[str]) -> frozenset[Flag]:
    return frozenset(Flag(n) for n in names)


class SplitMix64:
    """64-bit SplitMix generator (Steele, Lea & Flood constants)."""

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def __iter__(self) -> Iterator[int]:
        return self

    def __next__(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)


class TooFewAcceptors(ValueError):
    pass


def select_signers(sid: int, acceptors: Sequence[int], proposer: int, keep: int,
                   prg: Optional[Iterator[int]] = None) -> tuple[int, ...]:
    """Committee = ``keep`` acceptors chosen by sid-seeded removal, plus the proposer.

    Acceptors are sorted; while more than ``keep`` remain, a 64-bit PRG draw
    reduced modulo the current count picks the next one to drop.
    """
    pool = sorted(set(acceptors) - {proposer})
    if len(pool) < keep:
        raise TooFewAcceptors(f"{len(pool)} acceptors < {keep}")
    prg = SplitMix64(sid) if prg is None else prg
    while len(pool) > keep:
        del pool[next(prg) % len(pool)]
    return tuple(sorted(pool + [proposer]))


def proposer_of(sid: int, n: int, mode: str = "protocol", seed: int = 0) -> int:
    if mode == "protocol":
        return sid % n
    if mode == "monteCarlo":
        return next(SplitMix64(int.from_bytes(sha256(encode_fields("proposer", seed, sid))[:8], "big"))) % n
    raise ValueError(f"unknown proposer mode {mode!r}")


class UnknownRequest(KeyError):
    pass


@dataclass
class _Round:
    """One validator's view of the current session."""

    sid: int
    proposer: int
    start: int
    proposal: Optional[tuple[DepositIdentifier, tuple[bytes, ...], object]] = None
    acceptors: set[int] = field(default_factory=set)
    chosen: Optional[tuple[DepositIdentifier, tuple[bytes, ...], tuple[int, ...]]] = None
    signature_sent: bool = False


def _proposal_bytes(sid: int, dep_id: DepositIdentifier, sign_hash: tuple[bytes, ...]) -> bytes:
    return encode_fields("proposal", sid, dep_id.canonical(), *sign_hash)


def _sign_start_bytes(sid: int, dep_id: DepositIdentifier, signers: tuple[int, ...]) -> bytes:
    return encode_fields("signStart", sid, dep_id.canonical(), *signers)


@lru_cache(maxsize=512)
def _parse_rb_value(value: bytes) -> Optional[tuple[str, int, DepositIdentifier, tuple]]:
    # Every node decodes the same broadcast bytes; cache the parse.
    try:
        fields = decode_fields(value)
        return fields[0], fields[1], DepositIdentifier.parse(fields[2]), tuple(fields[3:])
    except (ValueError, IndexError, TypeError):
        return None


class Validator:
    def __init__(self, index: int, params: ProtocolParams, clients: Mapping[str, ChainClient],
                 net: Network, engine: tsslib.OracleTSS, flags: Iterable[Flag] = (),
                 coalition: Iterable[int] = ()):
        self.index = index
        self.params = params
        self.clients = dict(clients)
        self.net = net
        self.engine = engine
        self.group_key = engine.group_key
        self.flags = frozenset(flags)
        self.coalition = frozenset(coalition)
        self.rb = ReliableBroadcast(index, net, params.n, params.t)
        self.requests: dict[DepositIdentifier, RequestData] = {}
        self.forwarded: set[DepositIdentifier] = set()
        self.history: list[tuple[int, str, RequestStatus]] = []
        self.round: Optional[_Round] = None
        self._handlers = {SUBMIT: self._on_submit, ACCEPT: self._on_acceptance, SIGNATURE: self._on_signature}

    @property
    def honest(self) -> bool:
        return not self.flags

    # status bookkeeping
    def _apply(self, req: RequestData, event: StatusEvent) -> None:
        req.apply(event)
        self.history.append((self.net.tick, req.deposit_id.canonical(), req.status))

    # client-facing handlers
    def submit_withdrawal(self, dep_id: DepositIdentifier) -> None:
        known = self.requests.get(dep_id)
        if known is not None and known.status >= RequestStatus.PENDING:
            return
        if dep_id.chain_id not in self.clients:
            return
        if known is None:
            known = self.requests[dep_id] = RequestData(dep_id, arrival_tick=self.net.tick)
        self._verify(known)
        if dep_id not in self.forwarded:
            self.forwarded.add(dep_id)
            for peer in range(self.params.n):
                if peer != self.index:
                    self.net.send(self.index, peer, (SUBMIT, dep_id.canonical(), dep_id))

    def check_withdrawal(self, dep_id: DepositIdentifier) -> RequestData:
        try:
            return self.requests[dep_id]
        except KeyError:
            raise UnknownRequest(str(dep_id)) from None

    def _verify(self, req: RequestData) -> bool:
        """Run deposit verification for an ``invalid`` request; True once pending."""
        if req.status is not RequestStatus.INVALID:
            return True
        try:
            data = self.clients[req.deposit_id.chain_id].get_deposit_data(req.deposit_id)
            target = self.clients.get(data.target_chain_id)
            if target is None or not target.is_valid_address(data.target_addr):
                return False
            if not target.is_valid_amount(data.amount):
                return False
            target.local_token(data)
        except (ClientError, UnsupportedToken):
            return False
        req.deposit_data = data
        self._apply(req, StatusEvent.DEPOSIT_VERIFIED)
        return True

    def _withdrawal_for(self, req: RequestData) -> tuple[tuple[bytes, ...], object]:
        d = req.deposit_data
        client = self.clients[d.target_chain_id]
        tx = client.get_withdrawal_tx(req.deposit_id, d)
        if isinstance(client, UtxoClient):
            return client.sighashes(tx), tx
        return client.get_hash_of_withdrawal(req.deposit_id, d), tx

    # message dispatch
    def on_message(self, frm: int, payload: tuple) -> None:
        kind = payload[0]
        if kind in RB_KINDS:
            got = self.rb.handle(frm, payload)
            if got is not None:
                self._on_rb_deliver(*got)
            return
        handler = self._handlers.get(kind)
        if handler is None:
            log.debug("validator %d ignores unknown message %r", self.index, kind)
            return
        handler(frm, payload)

    def _on_submit(self, frm: int, payload: tuple) -> None:
        self.submit_withdrawal(payload[2])

    # session hooks (driven by Bridge)
    def begin_session(self, sid: int, proposer: int, start: int) -> None:
        self.round = _Round(sid, proposer, start)
        for req in self.requests.values():
            if req.status is RequestStatus.INVALID:
                self._verify(req)
        for client in self.clients.values():
            if isinstance(client, UtxoClient):
                client.prune_locked()
        if proposer == self.index and Flag.CRASHED_PROPOSER not in self.flags:
            self._propose()

    def oldest_pending(self) -> Optional[RequestData]:
        pending = [r for r in self.requests.values() if r.status is RequestStatus.PENDING]
        if not pending:
            return None
        return min(pending, key=lambda r: (r.arrival_tick, r.deposit_id.canonical()))

    def _propose(self) -> None:
        req = self.oldest_pending()
        if req is None:
            return
        try:
            sign_hash, _ = self._withdrawal_for(req)
        except ClientError as exc:
            log.debug("proposer %d cannot build withdrawal: %s", self.index, exc)
            return
        sid = self.round.sid
        self.rb.broadcast(f"proposal/sid={sid}", _proposal_bytes(sid, req.deposit_id, sign_hash))

    def _on_rb_deliver(self, instance: str, value: bytes, origin: int) -> None:
        rnd = self.round
        if rnd is None or origin != rnd.proposer:
            return
        parsed = _parse_rb_value(value)
        if parsed is None:
            return
        kind, sid, dep_id, rest = parsed
        if sid != rnd.sid or self.net.tick >= rnd.start + self.params.consensus_boundary:
            return
        if kind == "proposal" and instance == f"proposal/sid={sid}":
            self._on_proposal(dep_id, rest)
        elif kind == "signStart" and instance == f"signStart/sid={sid}":
            self._on_sign_start(dep_id, rest)

    def _on_proposal(self, dep_id: DepositIdentifier, sign_hash: tuple[bytes, ...]) -> None:
        rnd = self.round
        req = self.requests.get(dep_id)
        if req is None or req.status not in (RequestStatus.INVALID, RequestStatus.PENDING):
            return
        if not self._verify(req):
            return
        try:
            local_hash, tx = self._withdrawal_for(req)
        except ClientError:
            return
        if local_hash != sign_hash:
            return
        rnd.proposal = (dep_id, sign_hash, tx)
        if rnd.proposer != self.index and Flag.NEVER_ACCEPT not in self.flags:
            self.net.send(self.index, rnd.proposer, (ACCEPT, f"accept/sid={rnd.sid}", rnd.sid, dep_id, sign_hash))

    def _on_acceptance(self, frm: int, payload: tuple) -> None:
        rnd = self.round
        _, _, sid, dep_id, sign_hash = payload
        if rnd is None or rnd.proposer != self.index or sid != rnd.sid or rnd.proposal is None:
            return
        if self.net.tick > rnd.start + self.params.acceptance_boundary:
            return
        if (dep_id, sign_hash) == rnd.proposal[:2]:
            rnd.acceptors.add(frm)

    def close_acceptance(self) -> None:
        rnd = self.round
        if rnd.proposer != self.index or rnd.proposal is None or Flag.CRASHED_PROPOSER in self.flags:
            return
        keep = self.params.committee_size - 1
        acceptors = sorted(rnd.acceptors)
        if len(acceptors) < keep:
            return
        if Flag.ARBITRARY_COMMITTEE in self.flags:
            # The proposer controls the committee; prefer fellow adversaries.
            ranked = sorted(acceptors, key=lambda v: (v not in self.coalition, v))
            signers = tuple(sorted(ranked[:keep] + [self.index]))
        else:
            signers = select_signers(rnd.sid, acceptors, self.index, keep)
        dep_id = rnd.proposal[0]
        self.rb.broadcast(f"signStart/sid={rnd.sid}", _sign_start_bytes(rnd.sid, dep_id, signers))

    def _on_sign_start(self, dep_id: DepositIdentifier, signers: tuple[int, ...]) -> None:
        rnd = self.round
        if rnd.chosen is not None or rnd.proposal is None or rnd.proposal[0] != dep_id:
            return
        n = self.params.n
        if len(set(signers)) != self.params.committee_size or rnd.proposer not in signers:
            return
        if not all(isinstance(s, int) and 0 <= s < n for s in signers):
            return
        req = self.requests[dep_id]
        if req.status is not RequestStatus.PENDING:
            return
        _, sign_hash, tx = rnd.proposal
        w = req.withdrawal
        w.sign_hash, w.signers, w.withdrawal_tx = sign_hash, tuple(sorted(signers)), tx
        rnd.chosen = (dep_id, sign_hash, w.signers)
        self._apply(req, StatusEvent.SIGN_START_DELIVERED)

    def _tss_session(self) -> str:
        return f"sign/sid={self.round.sid}"

    def begin_signing(self) -> None:
        rnd = self.round
        if rnd.chosen is None or self.index not in rnd.chosen[2]:
            return
        if self.flags & {Flag.SILENT_SIGNER, Flag.ACCEPT_THEN_ABORT}:
            return
        _, sign_hash, signers = rnd.chosen
        deadline = rnd.start + self.params.consensus_boundary + self.params.sign_boundary
        sess = self._tss_session()
        tick = self.net.tick
        try:
            self.engine.start_signing(sess, signers, sign_hash, deadline)
        except tsslib.DuplicateSession:
            pass
        try:
            self.engine.approve(sess, self.index, sign_hash, tick)
        except tsslib.TSSError as exc:
            log.debug("validator %d could not approve: %s", self.index, exc)

    def poll_signing(self) -> None:
        rnd = self.round
        if rnd.chosen is None or rnd.signature_sent or self.index not in rnd.chosen[2]:
            return
        if self.flags & {Flag.SILENT_SIGNER, Flag.ACCEPT_THEN_ABORT}:
            return
        try:
            res = self.engine.session_result(self._tss_session(), self.net.tick)
        except tsslib.UnknownSession:
            return
        if res.ok:
            rnd.signature_sent = True
            dep_id, sign_hash, _ = rnd.chosen
            tx = self.requests[dep_id].withdrawal.withdrawal_tx
            self.net.multicast(
                self.index, (SIGNATURE, f"sig/sid={rnd.sid}", rnd.sid, dep_id, sign_hash, res.signature, tx)
            )

    def _on_signature(self, frm: int, payload: tuple) -> None:
        _, _, sid, dep_id, sign_hash, signature, carried_tx = payload
        rnd = self.round
        if rnd is None or sid != rnd.sid:
            return
        req = self.requests.get(dep_id)
        if req is None or req.status >= RequestStatus.PROCESSED:
            return
        if not self._verify(req):
            return
        if req.status is RequestStatus.PROCESSING:
            expected, tx = req.withdrawal.sign_hash, req.withdrawal.withdrawal_tx
        elif rnd.proposal is not None and rnd.proposal[0] == dep_id:
            expected, tx = rnd.proposal[1], rnd.proposal[2]
        else:
            expected, tx = self._expected_withdrawal(req, sign_hash, carried_tx)
        if expected != sign_hash or not tsslib.verify(self.group_key, sign_hash, signature):
            return
        w = req.withdrawal
        w.sign_hash, w.signature, w.withdrawal_tx = sign_hash, signature, tx
        self._apply(req, StatusEvent.VALID_SIGNATURE_DELIVERED)

    def _expected_withdrawal(self, req: RequestData, sign_hash, carried_tx) -> tuple[tuple[bytes, ...], object]:
        try:
            local_hash, tx = self._withdrawal_for(req)
            if local_hash == sign_hash:
                return local_hash, tx
        except ClientError:
            pass
        client = self.clients[req.deposit_data.target_chain_id]
        if isinstance(client, UtxoClient) and isinstance(carried_tx, UtxoTx):
            if client.matches_withdrawal(carried_tx, req.deposit_data):
                return client.sighashes(carried_tx), carried_tx
        return (), None

    def end_signing(self) -> None:
        for req in self.requests.values():
            if req.status is RequestStatus.PROCESSING:
                self._apply(req, StatusEvent.SIGNING_FAILED)

    def finalize_all(self) -> None:
        for req in self.requests.values():
            if req.status is RequestStatus.PROCESSED:
                self.finalize(req)

    def finalize(self, req: RequestData) -> bool:
        """Submit the signed withdrawal; True once the request is finalized."""
        if req.status is not RequestStatus.PROCESSED:
            return False
        client = self.clients[req.deposit_data.target_chain_id]
        w = req.withdrawal
        tx = w.withdrawal_tx
        try:
            if tx is None:
                _, tx = self._withdrawal_for(req)
            try:
                if isinstance(client, UtxoClient):
                    w.withdrawal_tx_id = client.submit_tx(tx, w.signature)
                elif isinstance(client, EvmClient):
                    w.withdrawal_tx_id = client.submit_tx(tx, w.signature, caller=f"validator-{self.index}")
                else:
                    w.withdrawal_tx_id = client.submit_tx(tx, w.signature)
            except (AlreadyWithdrawn, DuplicateTx):
                if isinstance(tx, UtxoTx):
                    w.withdrawal_tx_id = tx.txid
        except (LedgerError, ClientError, ValueError) as exc:
            log.debug("validator %d: submission for %s failed: %s", self.index, req.deposit_id, exc)
            return False
        if isinstance(client, UtxoClient):
            client.lock(tx)
        w.withdrawal_tx = tx
        self._apply(req, StatusEvent.WITHDRAWAL_SUBMITTED)
        return True


class OutcomeKind(str, Enum):
    IDLE = "Idle"
    NO_PROPOSAL = "NoProposal"
    SIGNING_FAILED = "SigningFailed"
    SUBMIT_FAILED = "SubmitFailed"
    FINALIZED = "Finalized"


@dataclass
class SessionOutcome:
    sid: int
    proposer: int
    kind: OutcomeKind
    deposit_id: Optional[DepositIdentifier]
    committee: tuple[int, ...]
    statuses: dict[int, dict[str, str]]
    ticks_used: int

    def record(self) -> dict:
        return {
            "sid": self.sid,
            "proposer": self.proposer,
            "outcome": self.kind.value,
            "deposit_id": None if self.deposit_id is None else self.deposit_id.canonical(),
            "committee": list(self.committee),
            "statuses": {str(k): v for k, v in self.statuses.items()},
            "ticks_used": self.ticks_used,
        }


class Bridge:
    """A simulated bridge deployment: validators, network, TSS engine and ledgers."""

    def __init__(self, params: ProtocolParams, chains: Mapping[str, object], tokens: TokenRegistry,
                 flags: Sequence[Iterable[Flag]] = (), seed: int = 0, mode: str = "protocol",
                 first_sid: int = 0, log_events: bool = False,
                 confirmations: Optional[Mapping[str, int]] = None,
                 client_options: Optional[Mapping[str, dict]] = None,
                 engine: Optional[tsslib.OracleTSS] = None):
        self.params = params
        self.mode = mode
        self.seed = seed
        self.chains = dict(chains)
        self.tokens = tokens
        self.events = EventLog() if log_events else None
        n = params.n
        flag_sets = [frozenset(f) for f in flags] + [frozenset()] * (n - len(flags))
        if len(flag_sets) != n:
            raise ValueError("one flag set per validator")
        self.session_length = params.session_length
        self.next_sid = first_sid
        self.net = Network(n, self.events, start_tick=first_sid * self.session_length - 1)
        self.engine = engine or tsslib.OracleTSS(seed, committee_size=params.committee_size)
        for chain in self.chains.values():
            chain.group_key = self.engine.group_key
        confirmations = dict(confirmations or {})
        confirmations.update(params.required_confirmations)
        client_options = client_options or {}
        coalition = [i for i, f in enumerate(flag_sets) if f]
        self.validators = [
            Validator(
                i, params,
                {
                    cid: make_client(chain, confirmations.get(cid, 1), tokens, **client_options.get(cid, {}))
                    for cid, chain in self.chains.items()
                },
                self.net, self.engine, flag_sets[i], coalition,
            )
            for i in range(n)
        ]
        self._rb_handles = [v.rb.handle for v in self.validators]
        self.tick_hooks: list[Callable[["Bridge", int], None]] = []
        # Called once per session right after the start-of-session sweep.
        self.boundary_hooks: list[Callable[["Bridge", int], None]] = []
        self.outcomes: list[SessionOutcome] = []

    @property
    def tick(self) -> int:
        return self.net.tick

    @property
    def honest(self) -> list[Validator]:
        return [v for v in self.validators if v.honest]

    def proposer_of(self, sid: int) -> int:
        return proposer_of(sid, self.params.n, self.mode, self.seed)

    def client_submit(self, dep_id: DepositIdentifier, to: Iterable[int]) -> None:
        """A client calls submitWithdrawal on the given validators (arrives this tick)."""
        for i in to:
            if self.events is not None:
                self.events.note(self.tick, "client-submitWithdrawal", to=i, deposit=dep_id.canonical())
            self.validators[i].submit_withdrawal(dep_id)

    def client_check(self, dep_id: DepositIdentifier, at: int) -> Optional[RequestData]:
        if self.events is not None:
            self.events.note(self.tick, "client-checkWithdrawal", to=at, deposit=dep_id.canonical())
        try:
            return self.validators[at].check_withdrawal(dep_id)
        except UnknownRequest:
            return None

    def _advance(self) -> None:
        due = self.net.deliveries()
        for chain in self.chains.values():
            chain.advance_block()
        # Hot path: RB traffic goes straight to each node's endpoint.
        validators = self.validators
        rb_handle = self._rb_handles
        for frm, to, payload in due:
            if payload[0] in RB_KINDS:
                got = rb_handle[to](frm, payload)
                if got is not None:
                    validators[to]._on_rb_deliver(*got)
            else:
                validators[to].on_message(frm, payload)
        for hook in self.tick_hooks:
            hook(self, self.net.tick)

    def run_session(self, sid: Optional[int] = None) -> SessionOutcome:
        sid = self.next_sid if sid is None else sid
        if sid != self.next_sid:
            raise ValueError(f"sessions are consecutive; expected sid {self.next_sid}")
        p = self.params
        start = sid * self.session_length
        proposer = self.proposer_of(sid)
        vals = self.validators
        sign_start = p.consensus_boundary
        final_start = p.consensus_boundary + p.sign_boundary
        pending_anywhere = False
        for off in range(self.session_length):
            self._advance()
            if off == 0:
                for v in vals:
                    v.begin_session(sid, proposer, start)
                pending_anywhere = any(v.oldest_pending() is not None for v in self.honest)
                for hook in self.boundary_hooks:
                    hook(self, sid)
            elif off == p.acceptance_boundary:
                vals[proposer].close_acceptance()
            elif off == sign_start:
                for v in vals:
                    v.begin_signing()
            if sign_start <= off < final_start:
                for v in vals:
                    v.poll_signing()
            elif off == final_start:
                for v in vals:
                    v.end_signing()
                    v.finalize_all()
            elif off > final_start:
                for v in vals:
                    v.finalize_all()
        self.next_sid = sid + 1
        outcome = self._outcome(sid, proposer, pending_anywhere)
        self.outcomes.append(outcome)
        if self.events is not None:
            self.events.note(self.tick, "session-end", sid=sid, outcome=outcome.kind.value,
                             deposit=outcome.deposit_id.canonical() if outcome.deposit_id else "-")
        return outcome

    def _outcome(self, sid: int, proposer: int, pending_anywhere: bool) -> SessionOutcome:
        chosen = None
        for v in self.honest:
            if v.round is not None and v.round.chosen is not None:
                chosen = v.round.chosen
                break
        statuses = {
            v.index: {d.canonical(): r.status.name.lower() for d, r in sorted(v.requests.items())}
            for v in self.validators
        }
        if chosen is None:
            kind = OutcomeKind.NO_PROPOSAL if pending_anywhere else OutcomeKind.IDLE
            return SessionOutcome(sid, proposer, kind, None, (), statuses, self.session_length)
        dep_id, _, committee = chosen
        st = {v.requests[dep_id].status for v in self.honest if dep_id in v.requests}
        if RequestStatus.FINALIZED in st:
            kind = OutcomeKind.FINALIZED
        elif RequestStatus.PROCESSED in st:
            kind = OutcomeKind.SUBMIT_FAILED
        else:
            kind = OutcomeKind.SIGNING_FAILED
        return SessionOutcome(sid, proposer, kind, dep_id, committee, statuses, self.session_length)
