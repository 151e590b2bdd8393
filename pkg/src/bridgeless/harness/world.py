"""Chain genesis and the client actor (deposits, filler traffic, client-side withdrawals)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

from ..clients import TokenRegistry
from ..ledgers import BurnEmitChain, EvmChain, TxIn, TxOut, UtxoChain, UtxoTx, encode_target
from ..ledgers.common import InsufficientBalance
from ..model import DEFAULT_CONFIRMATIONS, ChainKind, DepositIdentifier

ASSET = "BRG"

DEFAULT_BRIDGE = {
    ChainKind.EVM: "0x" + "b" * 40,
    ChainKind.UTXO: "bc1bridgevault0000",
    ChainKind.BURN_EMIT: "Zbridgeauthority",
}
DEFAULT_TOKEN = {
    ChainKind.EVM: "0x" + "7" * 40,
    ChainKind.UTXO: "",
    ChainKind.BURN_EMIT: "ZBRGasset01",
}
_USER_PREFIX = {ChainKind.EVM: "0x", ChainKind.UTXO: "bc1user", ChainKind.BURN_EMIT: "Zuser"}
FILLER_WALLET = "bc1fillerwallet0"


def user_address(kind: ChainKind, i: int) -> str:
    if kind is ChainKind.EVM:
        return "0x" + f"{i + 1:040x}"
    return f"{_USER_PREFIX[kind]}{i:08d}"


@dataclass
class ChainSpec:
    id: str
    kind: ChainKind
    confirmations: Optional[int] = None
    bridge_address: str = ""
    token: Optional[str] = None
    # user address -> genesis balance of the bridged asset
    balances: dict[str, int] = field(default_factory=dict)
    bridge_liquidity: int = 0
    replay_protection: bool = True

    def __post_init__(self) -> None:
        self.kind = ChainKind(self.kind)
        if not self.bridge_address:
            self.bridge_address = DEFAULT_BRIDGE[self.kind]
        if self.token is None:
            self.token = DEFAULT_TOKEN[self.kind]
        if self.confirmations is None:
            self.confirmations = DEFAULT_CONFIRMATIONS[self.kind]

    def user(self, i: int) -> str:
        return user_address(self.kind, i)


def default_chains(users: int = 4, balance: int = 10_000, liquidity: int = 100_000) -> list[ChainSpec]:
    specs = []
    for cid, kind in (("evm-sim", ChainKind.EVM), ("btc-sim", ChainKind.UTXO), ("zano-sim", ChainKind.BURN_EMIT)):
        spec = ChainSpec(cid, kind, bridge_liquidity=0 if kind is ChainKind.BURN_EMIT else liquidity)
        spec.balances = {spec.user(i): balance for i in range(users)}
        specs.append(spec)
    return specs


@dataclass
class World:
    specs: dict[str, ChainSpec]
    chains: dict[str, object]
    tokens: TokenRegistry

    @property
    def confirmations(self) -> dict[str, int]:
        return {cid: s.confirmations for cid, s in self.specs.items()}

    def advance_all(self, blocks: int = 1) -> None:
        for _ in range(blocks):
            for chain in self.chains.values():
                chain.advance_block()


USER_COINS = 4


def _split(amount: int, parts: int) -> list[int]:
    base = amount // parts
    shares = [base] * (parts - 1) + [amount - base * (parts - 1)]
    return [x for x in shares if x > 0]


def build_world(specs: list[ChainSpec], filler_funds: int = 0) -> World:
    """Instantiate ledgers at genesis and mine one block so funds are spendable."""
    chains: dict[str, object] = {}
    for s in specs:
        if s.id in chains:
            raise ValueError(f"duplicate chain id {s.id!r}")
        if s.kind is ChainKind.EVM:
            c = EvmChain(s.id, s.bridge_address, replay_protection=s.replay_protection)
            for addr, amount in s.balances.items():
                c.mint(s.token, addr, amount)
            if s.bridge_liquidity:
                c.mint(s.token, s.bridge_address, s.bridge_liquidity)
        elif s.kind is ChainKind.UTXO:
            c = UtxoChain(s.id, s.bridge_address)
            # User balances arrive as four coins so one user can make several deposits per block.
            for addr, amount in sorted(s.balances.items()):
                for share in _split(amount, USER_COINS):
                    c.fund(addr, share)
            # Liquidity arrives as several coins so coin selection has choices.
            remaining = s.bridge_liquidity
            for share in (remaining // 2, remaining // 4, remaining - remaining // 2 - remaining // 4):
                if share > 0:
                    c.fund(s.bridge_address, share)
            if filler_funds:
                c.fund(FILLER_WALLET, filler_funds)
        else:
            c = BurnEmitChain(s.id)
            for addr, amount in s.balances.items():
                c.mint(s.token, addr, amount)
        chains[s.id] = c
    tokens = TokenRegistry({ASSET: {s.id: s.token for s in specs}})
    world = World({s.id: s for s in specs}, chains, tokens)
    world.advance_all()
    return world


# client actor

def deposit(world: World, source: str, sender: str, amount: int, target: str, target_addr: str) -> DepositIdentifier:
    """Lock or burn ``amount`` on ``source`` and return the deposit identifier."""
    spec = world.specs[source]
    chain = world.chains[source]
    if spec.kind is ChainKind.EVM:
        h = chain.deposit_erc20(sender, spec.token, amount, target, target_addr)
        return DepositIdentifier(h, 0, source)
    if spec.kind is ChainKind.BURN_EMIT:
        h = chain.submit_burn(sender, spec.token, amount, [encode_target(target, target_addr)])
        return DepositIdentifier(h, 0, source)
    tx = _pay(chain, sender, [TxOut(amount, spec.bridge_address), TxOut(0, "", encode_target(target, target_addr))])
    return DepositIdentifier(chain.submit_tx(tx), 0, source)


def _pay(chain: UtxoChain, sender: str, outs: list[TxOut], lock_time: int = 0) -> UtxoTx:
    need = sum(o.value for o in outs)
    picked, total = [], 0
    for op, out in chain.unspent_for(sender):
        if not chain.spendable(op):
            continue
        picked.append(TxIn(*op))
        total += out.value
        if total >= need:
            break
    if total < need:
        raise InsufficientBalance(f"{sender} has {total} spendable < {need}")
    if total > need:
        outs = outs + [TxOut(total - need, sender)]
    return UtxoTx(tuple(picked), tuple(outs), lock_time)


def filler_tx(chain: UtxoChain, nonce: int, value: int = 1) -> Optional[bytes]:
    """Unrelated self-payment from the filler wallet; None when it is broke.

    ``nonce`` goes into the lock time so a re-spend after a reorg gets a fresh txid.
    """
    try:
        tx = _pay(chain, FILLER_WALLET, [TxOut(value, FILLER_WALLET)], lock_time=nonce)
    except InsufficientBalance:
        return None
    return chain.submit_tx(tx)


def circulating(world: World, chain_id: str) -> int:
    """Bridged-asset value held outside the bridge on one chain."""
    spec = world.specs[chain_id]
    chain = world.chains[chain_id]
    if spec.kind is ChainKind.EVM:
        return chain.total_supply(spec.token) - chain.balance_of(spec.token, spec.bridge_address)
    if spec.kind is ChainKind.BURN_EMIT:
        return chain.asset_supply.get(spec.token, 0)
    return sum(
        out.value for out in chain.utxo_set.values()
        if out.address not in (spec.bridge_address, FILLER_WALLET)
    )


def total_circulating(world: World, chain_ids: Mapping[str, object] | list[str] | None = None) -> int:
    ids = list(world.chains) if chain_ids is None else list(chain_ids)
    return sum(circulating(world, cid) for cid in ids)
