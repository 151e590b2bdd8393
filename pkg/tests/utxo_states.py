"""Random UTXO-chain states and an independent coin-selection oracle."""

import random

from bridgeless.clients import TokenRegistry
from bridgeless.ledgers import TxIn, TxOut, UtxoChain, UtxoTx
from bridgeless.model import DepositData
from bridgeless.tss import split_signature

VAULT = "bc1bridgevault0000"
EVM_TOKEN = "0x" + "7" * 40
ALICE = "0x" + "a" * 40
TOKENS = TokenRegistry({"BRG": {"evm-sim": EVM_TOKEN, "btc-sim": "", "zano-sim": "ZBRGasset01"}})


def a_deposit(amount, to="bc1receiver0001"):
    return DepositData("evm-sim", b"\x07" * 32, 0, ALICE, EVM_TOKEN, amount, "btc-sim", to)


def reference_selection(unspent, locked, amount):
    """Independent greedy oracle: sorted outpoints, skip locked, stop once covered."""
    picked, total = [], 0
    for op, value in sorted(unspent.items()):
        if op in locked:
            continue
        picked.append(op)
        total += value
        if total >= amount:
            return picked, total
    return None, total


def _spend(chain, owner, amount, to, signer=None):
    """Pay ``amount`` from ``owner`` to ``to`` with change; vault inputs are group-signed."""
    picked, total = [], 0
    for op, out in chain.unspent_for(owner):
        if chain.spendable(op):
            picked.append(op)
            total += out.value
            if total >= amount:
                break
    if total < amount:
        return None
    outs = [TxOut(amount, to)] + ([TxOut(total - amount, owner)] if total > amount else [])
    tx = UtxoTx(tuple(TxIn(*op) for op in picked), tuple(outs))
    if signer is not None:
        sig = signer.sign_unchecked([chain.sighash(tx, i) for i in range(len(picked))])
        tx = tx.with_witnesses(list(split_signature(sig)))
    return chain.submit_tx(tx)


def random_utxo_state(seed, signer):
    """Random history of vault funding, user deposits, signed vault payouts and reorgs.

    Returns the chain, a random set of locked vault outpoints and a withdrawal request.
    """
    rng = random.Random(seed)
    c = UtxoChain("btc-sim", VAULT, group_key=signer.group_key)
    for _ in range(rng.randint(1, 4)):
        c.fund(VAULT, rng.randint(1, 500))
    c.fund("bc1alice0000", 2000)
    c.advance_block()
    for _ in range(rng.randint(0, 10)):
        op = rng.random()
        if op < 0.4:
            _spend(c, "bc1alice0000", rng.randint(1, 300), VAULT)
        elif op < 0.7:
            _spend(c, VAULT, rng.randint(1, 200), f"bc1payee{rng.randint(0, 99):04d}", signer)
        elif op < 0.8 and c.blocks and c.blocks[-1]:
            c.inject_reorg(rng.choice(c.blocks[-1]))
        if rng.random() < 0.6:
            c.advance_block()
    c.advance_block()
    unspent = [op for op, _ in c.unspent_for(VAULT)]
    locked = set(rng.sample(unspent, rng.randint(0, len(unspent) // 2)))
    vault = sum(o.value for o in c.utxo_set.values() if o.address == VAULT)
    amount = rng.randint(1, max(1, vault * 2 // 3))
    return c, locked, a_deposit(amount, f"bc1receiver{rng.randint(0, 999):04d}")
