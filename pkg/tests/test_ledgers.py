import pytest
from hypothesis import given
from hypothesis import strategies as st

from bridgeless.ledgers import BurnEmitChain, EmitTx, EvmChain, TxIn, TxOut, UtxoChain, UtxoTx, encode_target
from bridgeless.ledgers.burnemit import BURN, EMIT, emit_sign_hash
from bridgeless.ledgers.common import BadSignature, DuplicateTx, InsufficientBalance, NotFound, ZeroAmount, decode_target
from bridgeless.ledgers.evm import AlreadyWithdrawn, EmptyAddress, WrongChain, withdraw_fields
from bridgeless.ledgers.utxo import BadWitness, DoubleSpend, MalformedTx, UnknownTx
from bridgeless.model import DepositData, evm_sign_hash, utxo_input_sighash
from bridgeless.tss import OracleTSS

TOKEN = "0x" + "7" * 40
BRIDGE = "0x" + "b" * 40
ALICE = "0x" + "a" * 40
BOB = "0x" + "c" * 40


@pytest.fixture
def signer():
    return OracleTSS(seed=77)


@pytest.fixture
def evm(signer):
    c = EvmChain("evm-sim", BRIDGE, group_key=signer.group_key)
    c.mint(TOKEN, ALICE, 100)
    c.mint(TOKEN, BRIDGE, 1000)
    return c


def fields(amount=25, to=BOB, token=TOKEN, target="evm-sim"):
    return DepositData("btc-sim", b"\x09" * 32, 0, "bc1sender000", token, amount, target, to)


# EVM

def test_erc20_deposit_moves_balance_and_emits_event(evm):
    h = evm.deposit_erc20(ALICE, TOKEN, 40, "btc-sim", "bc1receiver0001")
    assert evm.balance_of(TOKEN, ALICE) == 60 and evm.balance_of(TOKEN, BRIDGE) == 1040
    ev = evm.get_receipt(h).events
    assert len(ev) == 1 and ev[0].index == 0 and ev[0].amount == 40


def test_deposit_errors(evm):
    with pytest.raises(ZeroAmount):
        evm.deposit_erc20(ALICE, TOKEN, 0, "btc-sim", "x")
    with pytest.raises(InsufficientBalance):
        evm.deposit_erc20(ALICE, TOKEN, 101, "btc-sim", "x")
    with pytest.raises(EmptyAddress):
        evm.deposit_erc20(ALICE, "", 1, "btc-sim", "x")


def test_native_deposit(evm):
    evm.mint("", ALICE, 10)
    h = evm.deposit_native(ALICE, 4, "btc-sim", "bc1receiver0001")
    assert evm.balance_of("", BRIDGE) == 4
    assert evm.get_receipt(h).events[0].name == "DepositedNative"


def test_withdraw_then_replay(evm, signer):
    f = fields()
    sig = signer.sign_unchecked([evm_sign_hash(f)])
    evm.withdraw("erc20", f, sig)
    assert evm.balance_of(TOKEN, BOB) == 25
    with pytest.raises(AlreadyWithdrawn):
        evm.withdraw("erc20", f, sig)
    assert evm.balance_of(TOKEN, BOB) == 25


def test_withdraw_without_replay_protection_pays_twice(signer):
    c = EvmChain("evm-sim", BRIDGE, group_key=signer.group_key, replay_protection=False)
    c.mint(TOKEN, BRIDGE, 100)
    f = fields()
    sig = signer.sign_unchecked([evm_sign_hash(f)])
    c.withdraw("erc20", f, sig)
    c.withdraw("erc20", f, sig)
    assert c.balance_of(TOKEN, BOB) == 50


def test_withdraw_checks(evm, signer):
    f = fields()
    sig = bytearray(signer.sign_unchecked([evm_sign_hash(f)]))
    sig[0] ^= 1
    with pytest.raises(BadSignature):
        evm.withdraw("erc20", f, bytes(sig))
    with pytest.raises(WrongChain):
        evm.withdraw("erc20", fields(target="zano-sim"), b"")
    with pytest.raises(EmptyAddress):
        evm.withdraw("erc20", fields(to=""), b"")
    with pytest.raises(ValueError):
        evm.withdraw("weird", f, b"")


def test_zero_amount_withdraw_rejected(evm):
    f = fields()
    object.__setattr__(f, "amount", 0)
    with pytest.raises(ZeroAmount):
        evm.withdraw("erc20", f, b"")


def test_supply_constant_across_deposit_and_withdraw(evm, signer):
    before = evm.total_supply(TOKEN)
    evm.deposit_erc20(ALICE, TOKEN, 30, "btc-sim", "bc1receiver0001")
    f = fields(10)
    evm.withdraw("erc20", f, signer.sign_unchecked([evm_sign_hash(f)]))
    assert evm.total_supply(TOKEN) == before


def test_withdraw_fields_swaps_token():
    d = DepositData("btc-sim", b"\x01" * 32, 0, "s", "", 5, "evm-sim", BOB)
    assert withdraw_fields(d, TOKEN).token_addr == TOKEN


def test_confirmations_by_block(evm):
    h = evm.deposit_erc20(ALICE, TOKEN, 1, "btc-sim", "x")
    assert evm.get_transaction(h).confirmations == 0
    for k in range(1, 4):
        evm.advance_block()
        assert evm.get_transaction(h).confirmations == k
    with pytest.raises(NotFound):
        evm.get_transaction(b"\x00" * 32)


def test_reads_are_pure(evm):
    h = evm.deposit_erc20(ALICE, TOKEN, 1, "btc-sim", "x")
    evm.advance_block()
    snapshot = (evm.height, dict(evm.tokens[TOKEN]), len(evm.txs))
    evm.get_transaction(h)
    evm.get_receipt(h)
    assert snapshot == (evm.height, dict(evm.tokens[TOKEN]), len(evm.txs))


# UTXO

VAULT = "bc1bridgevault0000"


@pytest.fixture
def utxo(signer):
    c = UtxoChain("btc-sim", VAULT, group_key=signer.group_key)
    c.fund("bc1alice0000", 100)
    c.fund(VAULT, 30)
    c.fund(VAULT, 30)
    c.advance_block()
    return c


def spend_alice(utxo, value=40):
    op, _ = utxo.unspent_for("bc1alice0000")[0]
    return UtxoTx((TxIn(*op),), (TxOut(value, VAULT), TxOut(0, "", encode_target("evm-sim", BOB)),
                                 TxOut(100 - value, "bc1alice0000")))


def test_empty_block():
    c = UtxoChain("btc-sim", VAULT)
    assert c.advance_block() == 1 and c.blocks == [[]]


def test_deposit_enters_mempool_then_block(utxo):
    txid = utxo.submit_tx(spend_alice(utxo))
    assert utxo.confirmations(txid) == 0
    utxo.advance_block()
    assert utxo.confirmations(txid) == 1
    utxo.advance_block()
    assert utxo.get_transaction(txid).confirmations == 2


def test_double_spend(utxo):
    first, rival = spend_alice(utxo), spend_alice(utxo, 41)
    utxo.submit_tx(first)
    with pytest.raises(DoubleSpend):
        utxo.submit_tx(rival)
    utxo.advance_block()
    with pytest.raises(DoubleSpend):
        utxo.submit_tx(rival)
    with pytest.raises(DuplicateTx):
        utxo.submit_tx(first)


def test_unbalanced_and_empty_rejected(utxo):
    op, _ = utxo.unspent_for("bc1alice0000")[0]
    with pytest.raises(MalformedTx):
        utxo.submit_tx(UtxoTx((TxIn(*op),), (TxOut(99, "bc1x00000000"),)))
    with pytest.raises(MalformedTx):
        utxo.submit_tx(UtxoTx((), (TxOut(1, "bc1x00000000"),)))


def vault_spend(utxo):
    ins = tuple(TxIn(*op) for op, _ in utxo.unspent_for(VAULT))
    return UtxoTx(ins, (TxOut(50, "bc1bob000000"), TxOut(10, VAULT)))


def test_vault_spend_needs_group_signature(utxo, signer):
    tx = vault_spend(utxo)
    with pytest.raises(BadWitness):
        utxo.submit_tx(tx)
    wrong = [signer.sign_unchecked([b"\x00" * 32])] * 2
    with pytest.raises(BadWitness):
        utxo.submit_tx(tx.with_witnesses(wrong))
    good = [signer.sign_unchecked([utxo.sighash(tx, i)]) for i in range(2)]
    txid = utxo.submit_tx(tx.with_witnesses(good))
    assert txid == tx.txid  # witnesses are not part of the txid


def test_sighash_binds_index_and_prevout(utxo):
    tx = vault_spend(utxo)
    assert utxo.sighash(tx, 0) != utxo.sighash(tx, 1)
    assert utxo.sighash(tx, 0) == utxo_input_sighash(tx.preimage(), 0, TxOut(30, VAULT).script())


def test_reorg_marks_negative_and_cascades(utxo):
    dep = utxo.submit_tx(spend_alice(utxo))
    utxo.advance_block()
    op = (dep, 2)
    child = utxo.submit_tx(UtxoTx((TxIn(*op),), (TxOut(60, "bc1carol0000"),)))
    utxo.advance_block()
    utxo.inject_reorg(dep)
    assert utxo.get_transaction(dep).confirmations == -1
    assert utxo.confirmations(child) == -1
    utxo.advance_block()
    assert utxo.confirmations(dep) == -1  # never resurrected
    with pytest.raises(MalformedTx):
        utxo.submit_tx(utxo.txs[dep])
    with pytest.raises(UnknownTx):
        utxo.inject_reorg(b"\x00" * 32)
    # the original coin is spendable again
    assert any(o.address == "bc1alice0000" for _, o in utxo.unspent_for("bc1alice0000"))


@given(st.lists(st.integers(1, 50), min_size=1, max_size=6))
def test_value_conserved_per_tx(values):
    c = UtxoChain("btc-sim", VAULT)
    c.fund("bc1alice0000", sum(values))
    c.advance_block()
    op, _ = c.unspent_for("bc1alice0000")[0]
    tx = UtxoTx((TxIn(*op),), tuple(TxOut(v, f"bc1r{i:08d}") for i, v in enumerate(values)))
    c.submit_tx(tx)
    c.advance_block()
    assert sum(o.value for o in c.utxo_set.values()) == sum(values)


def test_txout_validation():
    with pytest.raises(ValueError):
        TxOut(-1, "a")
    with pytest.raises(ValueError):
        TxOut(0, "a", b"x")


# burn / emit

ASSET = "ZBRGasset01"


@pytest.fixture
def zano(signer):
    c = BurnEmitChain("zano-sim", group_key=signer.group_key)
    c.mint(ASSET, "Zalice00000", 100)
    return c


def test_burn_reduces_supply(zano):
    h = zano.submit_burn("Zalice00000", ASSET, 25, [encode_target("evm-sim", BOB)])
    assert zano.asset_supply[ASSET] == 75
    rec = zano.get_transaction(h)
    assert rec.kind == BURN and rec.amount == 25 and rec.confirmations == 0
    zano.advance_block()
    assert zano.get_transaction(h).confirmations == 1
    assert decode_target(rec.service_entries[0]) == ("evm-sim", BOB)


def test_burn_errors_and_permissive_entries(zano):
    with pytest.raises(ZeroAmount):
        zano.submit_burn("Zalice00000", ASSET, 0, [])
    with pytest.raises(InsufficientBalance):
        zano.submit_burn("Zalice00000", ASSET, 101, [])
    zano.submit_burn("Zalice00000", ASSET, 1, [b"not an encoding"])


def test_emit(zano, signer):
    tx = EmitTx(ASSET, "Zbob0000000", 25, "ref")
    with pytest.raises(BadSignature):
        zano.submit_emit(tx, b"")
    sig = signer.sign_unchecked([emit_sign_hash(tx)])
    h = zano.submit_emit(tx, sig)
    assert zano.asset_supply[ASSET] == 125 and zano.balance_of(ASSET, "Zbob0000000") == 25
    assert zano.get_transaction(h).kind == EMIT
    with pytest.raises(DuplicateTx):
        zano.submit_emit(tx, sig)
    assert zano.asset_supply[ASSET] == 125


def test_supply_delta_is_emits_minus_burns(zano, signer):
    zano.submit_burn("Zalice00000", ASSET, 30, [])
    for i, amount in enumerate((5, 7)):
        tx = EmitTx(ASSET, "Zbob0000000", amount, f"r{i}")
        zano.submit_emit(tx, signer.sign_unchecked([emit_sign_hash(tx)]))
    assert zano.asset_supply[ASSET] == 100 - 30 + 12
