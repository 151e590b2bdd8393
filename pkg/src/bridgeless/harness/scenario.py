"""Scenario configuration, YAML loading and the scenario runner."""

from __future__ import annotations

import random
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from ..clients import ClientError, EvmClient, LyingEvmProvider
from ..ledgers import LedgerError, UtxoChain
from ..ledgers.evm import DEPOSITED_ERC20, EvmEvent
from ..model import (
    ChainKind, DepositData, DepositIdentifier, ProtocolParams, RequestStatus, max_faults, tagged_hash,
)
from ..validator import Bridge, Flag, SessionOutcome, parse_flags
from .observer import SafetyObserver, Violation
from .world import ChainSpec, World, build_world, default_chains, deposit, filler_tx

MODES = ("protocol", "monteCarlo")
BOUNDARY_KEYS = ("acceptance", "consensus", "sign", "finalize")


class ConfigError(ValueError):
    pass


@dataclass
class RequestSpec:
    source: str
    target: str
    amount: int
    target_addr: str = ""  # default: user 0 on the target chain
    sender: str = ""  # default: user 0 on the source chain
    submit_to: Optional[list[int]] = None  # default: every validator
    session: int = 0  # deposit made before this session (0 = before the first)
    client_withdraw: bool = False  # client submits the signed EVM withdrawal itself
    double_submit: bool = False  # client replays the signed EVM withdrawal afterwards


@dataclass
class ReorgSpec:
    session: int
    chain: str
    deposit: Optional[int] = None  # index into requests: reorg that deposit instead of a filler tx


@dataclass
class ForgeSpec:
    """The adversarial coalition tries to sign and submit a withdrawal with no deposit."""

    session: int
    target: str
    amount: int
    recipient: str = ""


@dataclass
class ScenarioConfig:
    seed: int = 0
    n: int = 4
    t: Optional[int] = None
    committee_size: Optional[int] = None
    mode: str = "protocol"
    boundaries: dict[str, int] = field(default_factory=lambda: dict(acceptance=5, consensus=10, sign=10, finalize=10))
    chains: list[ChainSpec] = field(default_factory=default_chains)
    validators: list[list[str]] = field(default_factory=list)
    requests: list[RequestSpec] = field(default_factory=list)
    max_sessions: int = 3
    first_sid: int = 1
    unsafe: bool = False
    fillers: int = 0  # filler payments per session on every UTXO chain
    reorgs: list[ReorgSpec] = field(default_factory=list)
    forgeries: list[ForgeSpec] = field(default_factory=list)
    lying_provider: bool = False  # EVM provider reports one fabricated deposit
    log_events: bool = True

    def __post_init__(self) -> None:
        if self.t is None:
            self.t = max_faults(self.n)
        self.chains = [c if isinstance(c, ChainSpec) else ChainSpec(**c) for c in self.chains]
        self.requests = [r if isinstance(r, RequestSpec) else RequestSpec(**r) for r in self.requests]
        self.reorgs = [r if isinstance(r, ReorgSpec) else ReorgSpec(**r) for r in self.reorgs]
        self.forgeries = [f if isinstance(f, ForgeSpec) else ForgeSpec(**f) for f in self.forgeries]
        self.validate()

    @property
    def flag_sets(self) -> list[frozenset[Flag]]:
        sets = [parse_flags(f) for f in self.validators]
        return sets + [frozenset()] * (self.n - len(sets))

    def params(self) -> ProtocolParams:
        b = self.boundaries
        return ProtocolParams(
            n=self.n, t=self.t, committee_size=self.committee_size,
            acceptance_boundary=b["acceptance"], consensus_boundary=b["consensus"],
            sign_boundary=b["sign"], finalize_boundary=b["finalize"],
            allow_unsafe=self.unsafe,
        )

    def validate(self) -> None:
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if set(self.boundaries) != set(BOUNDARY_KEYS):
            raise ConfigError(f"boundaries need exactly {BOUNDARY_KEYS}")
        if len(self.validators) > self.n:
            raise ConfigError("more validator entries than n")
        try:
            self.params()
            flags = self.flag_sets
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        faulty = sum(1 for f in flags if f)
        if faulty > self.t and not self.unsafe:
            raise ConfigError(f"{faulty} adversaries exceed t={self.t}; set unsafe to allow")
        if self.max_sessions < 1:
            raise ConfigError("max_sessions must be positive")
        ids = {c.id for c in self.chains}
        if len(ids) != len(self.chains):
            raise ConfigError("duplicate chain ids")
        for r in self.requests:
            if r.source not in ids or r.target not in ids or r.source == r.target:
                raise ConfigError(f"bad chain pair {r.source}->{r.target}")
            if r.amount <= 0:
                raise ConfigError("request amounts must be positive")
            if r.submit_to is not None and not all(0 <= i < self.n for i in r.submit_to):
                raise ConfigError("submit_to names an unknown validator")
            if not 0 <= r.session < self.max_sessions:
                raise ConfigError("request session outside the run")
        for x in [*self.reorgs, *self.forgeries]:
            if not 0 <= x.session < self.max_sessions:
                raise ConfigError("scheduled action outside the run")
        for x in self.reorgs:
            if x.chain not in ids:
                raise ConfigError(f"unknown chain {x.chain}")
            if x.deposit is not None:
                if not 0 <= x.deposit < len(self.requests):
                    raise ConfigError("reorg names an unknown request")
                r = self.requests[x.deposit]
                if r.source != x.chain or r.session >= x.session:
                    raise ConfigError("a deposit reorg needs a request from that chain made in an earlier session")
        for x in self.forgeries:
            if x.target not in ids or x.amount <= 0:
                raise ConfigError("bad forgery entry")

    def to_dict(self) -> dict:
        d = asdict(self)
        for c in d["chains"]:
            c["kind"] = ChainKind(c["kind"]).value
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        if not isinstance(data, dict):
            raise ConfigError("a scenario is a mapping")
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown scenario keys: {sorted(extra)}")
        data = dict(data)
        if "boundaries" in data:
            data["boundaries"] = {**dict(acceptance=5, consensus=10, sign=10, finalize=10), **data["boundaries"]}
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def load_scenario(path: str | Path) -> ScenarioConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return ScenarioConfig.from_dict(data or {})


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    events: str
    outcomes: list[SessionOutcome]
    violations: list[Violation]
    deposits: list[DepositIdentifier]
    bridge: Bridge
    world: World
    forged: list[bytes] = field(default_factory=list)
    boundaries_checked: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations

    def status_of(self, dep: DepositIdentifier) -> dict[int, str]:
        return {
            v.index: v.requests[dep].status.name.lower() if dep in v.requests else "unknown"
            for v in self.bridge.honest
        }


class _Runner:
    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.rng = random.Random(cfg.seed)
        has_utxo = any(c.kind is ChainKind.UTXO for c in cfg.chains)
        self.world = build_world(cfg.chains, filler_funds=1_000_000 if has_utxo and cfg.fillers else 0)
        self.deposits: list[Optional[DepositIdentifier]] = [None] * len(cfg.requests)
        self.fillers: dict[str, list[bytes]] = {}
        self.filler_count = 0
        self.forged: list[bytes] = []
        self.client_done: set[int] = set()
        # Deposits scripted before the first session are already buried at start.
        for i, r in enumerate(cfg.requests):
            if r.session == 0:
                self.deposits[i] = self._deposit(r)
        self.world.advance_all(max(c.confirmations for c in cfg.chains))
        self.bridge = Bridge(
            cfg.params(), self.world.chains, self.world.tokens, flags=cfg.flag_sets, seed=cfg.seed,
            mode=cfg.mode, first_sid=cfg.first_sid, log_events=cfg.log_events,
            confirmations=self.world.confirmations,
        )
        self.observer = SafetyObserver(self.bridge, self.world.chains, self.world.tokens).attach()
        self.bridge.boundary_hooks.append(lambda bridge, sid: self.observer.check_withdrawals())
        self.bridge.tick_hooks.append(self._client_tick)
        if cfg.lying_provider:
            self._install_lying_provider()

    def _deposit(self, r: RequestSpec) -> Optional[DepositIdentifier]:
        src, dst = self.world.specs[r.source], self.world.specs[r.target]
        try:
            return deposit(self.world, r.source, r.sender or src.user(0), r.amount, r.target,
                           r.target_addr or dst.user(0))
        except LedgerError as exc:
            self._note("deposit-failed", source=r.source, reason=type(exc).__name__)
            return None

    def _note(self, kind: str, **fields) -> None:
        if self.bridge.events is not None:
            self.bridge.events.note(self.bridge.tick, kind, **fields)

    def _submit(self, i: int) -> None:
        dep, r = self.deposits[i], self.cfg.requests[i]
        if dep is None:
            return
        to = range(self.cfg.n) if r.submit_to is None else r.submit_to
        self.bridge.client_submit(dep, to)

    def _install_lying_provider(self) -> None:
        """All validators read EVM deposits through one provider that invents a deposit."""
        evm = next((c for c in self.world.specs.values() if c.kind is ChainKind.EVM), None)
        other = next((c for c in self.world.specs.values() if c.kind is not ChainKind.EVM), None)
        if evm is None or other is None:
            raise ConfigError("the lying-provider ablation needs an EVM chain and one other chain")
        provider = LyingEvmProvider(self.world.chains[evm.id])
        fake_hash = tagged_hash("fabricated-deposit", self.cfg.seed)
        provider.forge_deposit(fake_hash, EvmEvent(0, DEPOSITED_ERC20, evm.token, 77, other.id, other.user(1), evm.user(1)))
        for v in self.bridge.validators:
            client = v.clients[evm.id]
            if isinstance(client, EvmClient):
                client.rpc = provider
        self.bridge.client_submit(DepositIdentifier(fake_hash, 0, evm.id), range(self.cfg.n))

    def _client_tick(self, bridge: Bridge, tick: int) -> None:
        """Clients that asked to withdraw on EVM themselves watch checkWithdrawal."""
        for i, r in enumerate(self.cfg.requests):
            dep = self.deposits[i]
            if dep is None or i in self.client_done or not (r.client_withdraw or r.double_submit):
                continue
            if self.world.specs[r.target].kind is not ChainKind.EVM:
                continue
            at = (r.submit_to or [0])[0]
            req = bridge.client_check(dep, at)
            if req is None or req.status < RequestStatus.PROCESSED or req.withdrawal.signature is None:
                continue
            if r.client_withdraw or req.status is RequestStatus.FINALIZED:
                self.client_done.add(i)
                self._client_withdraw(req, replay=r.double_submit)

    def _client_withdraw(self, req, replay: bool) -> None:
        w = req.withdrawal
        client = self.bridge.validators[0].clients[req.deposit_data.target_chain_id]
        tx = w.withdrawal_tx or client.get_withdrawal_tx(req.deposit_id, req.deposit_data)
        for attempt in range(2 if replay else 1):
            try:
                client.submit_tx(tx, w.signature, caller="client")
                self._note("client-withdraw", deposit=req.deposit_id.canonical(), attempt=attempt, result="ok")
            except (LedgerError, ClientError) as exc:
                self._note("client-withdraw", deposit=req.deposit_id.canonical(), attempt=attempt,
                           result=type(exc).__name__)

    def _between_sessions(self, k: int) -> None:
        cfg = self.cfg
        for x in cfg.reorgs:
            if x.session == k:
                self._reorg(x)
        if cfg.fillers:
            for cid, chain in self.world.chains.items():
                if isinstance(chain, UtxoChain):
                    for _ in range(cfg.fillers):
                        self.filler_count += 1
                        h = filler_tx(chain, self.filler_count)
                        if h is not None:
                            self.fillers.setdefault(cid, []).append(h)
        for i, r in enumerate(cfg.requests):
            if r.session == k and k > 0:
                self.deposits[i] = self._deposit(r)
            if r.session == k:
                self._submit(i)
        for f in cfg.forgeries:
            if f.session == k:
                self._forge(f, k)

    def _reorg(self, x: ReorgSpec) -> None:
        chain_id = x.chain
        chain = self.world.chains[chain_id]
        if not isinstance(chain, UtxoChain):
            raise ConfigError("reorgs are only supported on UTXO chains")
        if x.deposit is not None:
            dep = self.deposits[x.deposit]
            live = [dep.tx_hash] if dep is not None and dep.tx_hash in chain.inclusion else []
        else:
            live = [h for h in self.fillers.get(chain_id, []) if h in chain.inclusion]
        if not live:
            return
        victim = self.rng.choice(live)
        chain.inject_reorg(victim)
        self._note("reorg", chain=chain_id, tx=victim.hex())

    def _forge(self, f: ForgeSpec, k: int) -> None:
        """Coalition signs a withdrawal for a deposit that does not exist."""
        b, cfg = self.bridge, self.cfg
        coalition = [i for i, fl in enumerate(cfg.flag_sets) if fl]
        if not coalition:
            return
        size = b.params.committee_size
        honest = [i for i in range(cfg.n) if i not in coalition]
        committee = (coalition + honest)[:size]
        spec = self.world.specs[f.target]
        source = next(c for c in self.world.specs if c != f.target)
        fake = DepositData(source, tagged_hash("forged-deposit", cfg.seed, k), 0, "attacker",
                           self.world.specs[source].token,
                           f.amount, f.target, f.recipient or spec.user(3))
        client = b.validators[coalition[0]].clients[f.target]
        try:
            tx = client.get_withdrawal_tx(fake.deposit_id, fake)
            digest = client.get_hash_of_withdrawal(fake.deposit_id, fake)
        except ClientError:
            return
        b.client_submit(fake.deposit_id, range(cfg.n))
        sess = f"forge/{k}"
        b.engine.start_signing(sess, committee, digest, b.tick + b.params.sign_boundary)
        for i in committee:
            if i in coalition:
                b.engine.approve(sess, i, digest, b.tick)
        res = b.engine.session_result(sess, b.tick + 1)
        self._note("forge-attempt", committee=",".join(map(str, committee)), outcome=res.outcome.value)
        if not res.ok:
            return
        try:
            ref = client.submit_tx(tx, res.signature)
            self.forged.append(ref)
        except (LedgerError, ClientError) as exc:
            self._note("forge-submit", result=type(exc).__name__)

    def run(self) -> ScenarioResult:
        for k in range(self.cfg.max_sessions):
            self._between_sessions(k)
            self.bridge.run_session()
        violations = self.observer.check()
        ev = self.bridge.events.text() if self.bridge.events is not None else ""
        return ScenarioResult(
            self.cfg, ev, list(self.bridge.outcomes), violations, [d for d in self.deposits if d is not None],
            self.bridge, self.world, self.forged, self.observer.boundaries_checked,
        )


def run_scenario(cfg: ScenarioConfig) -> ScenarioResult:
    return _Runner(cfg).run()


__all__ = [
    "ConfigError",
    "ForgeSpec",
    "ReorgSpec",
    "RequestSpec",
    "ScenarioConfig",
    "ScenarioResult",
    "load_scenario",
    "run_scenario",
]
