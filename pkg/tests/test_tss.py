import pytest
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PublicKey
from hypothesis import given
from hypothesis import strategies as st

from bridgeless import tss
from bridgeless.model import encode_fields
from bridgeless.tss import (
    DuplicateSession,
    NotASigner,
    OracleTSS,
    Outcome,
    SessionClosed,
    UnknownSession,
    split_signature,
    verify,
)

H1, H2 = b"\x01" * 32, b"\x02" * 32
hashes = st.lists(st.binary(min_size=32, max_size=32), min_size=1, max_size=3)


def completed(engine, message=(H1,), sid="s"):
    engine.start_signing(sid, [0, 1], message, deadline_tick=10)
    engine.approve(sid, 0, message, 1)
    engine.approve(sid, 1, message, 2)
    return engine.session_result(sid, 3)


def test_session_lifecycle_errors(engine):
    engine.start_signing("s", [0, 1], [H1], 10)
    with pytest.raises(DuplicateSession):
        engine.start_signing("s", [0, 1], [H1], 10)
    with pytest.raises(ValueError):
        engine.start_signing("e", [], [H1], 10)
    with pytest.raises(ValueError):
        engine.start_signing("big", [0, 1, 2], [H1], 10)  # committee size is 2
    with pytest.raises(NotASigner):
        engine.approve("s", 5, [H1], 1)
    with pytest.raises(UnknownSession):
        engine.session_result("nope", 0)
    with pytest.raises(ValueError):
        engine.start_signing("short", [0, 1], [b"x"], 10)


def test_pending_before_approvals(engine):
    engine.start_signing("s", [0, 1], [H1], 10)
    assert engine.session_result("s", 0).outcome is Outcome.PENDING
    engine.approve("s", 0, [H1], 1)
    assert engine.session_result("s", 5).outcome is Outcome.PENDING


def test_all_approve_gives_same_valid_signature(engine):
    res = completed(engine)
    assert res.ok and verify(engine.group_key, [H1], res.signature)
    assert engine.session_result("s", 3) == res == engine.session_result("s", 100)


def test_signature_ready_one_tick_after_last_approval(engine):
    engine.start_signing("s", [0, 1], [H1], 10)
    engine.approve("s", 0, [H1], 1)
    engine.approve("s", 1, [H1], 4)
    assert engine.session_result("s", 4).outcome is Outcome.PENDING
    assert engine.session_result("s", 5).ok


def test_mismatched_messages_error_at_deadline(engine):
    engine.start_signing("s", [0, 1], [H1], 10)
    engine.approve("s", 0, [H1], 1)
    engine.approve("s", 1, [H2], 1)
    assert engine.session_result("s", 9).outcome is Outcome.PENDING
    assert engine.session_result("s", 10).outcome is Outcome.ERROR


def test_silent_signer_gives_uniform_error(engine):
    engine.start_signing("s", [0, 1], [H1], 10)
    engine.approve("s", 0, [H1], 1)
    results = {v: engine.session_result("s", 10) for v in (0, 1)}
    assert {r.outcome for r in results.values()} == {Outcome.ERROR}
    with pytest.raises(SessionClosed):
        engine.approve("s", 1, [H1], 10)


def test_verify_rejects_other_message_and_garbage(engine):
    res = completed(engine)
    assert not verify(engine.group_key, [H2], res.signature)
    assert not verify(engine.group_key, [H1], b"\x00" * 64)
    assert not verify(engine.group_key, [H1], b"")
    assert not verify(engine.group_key, [H1, H2], res.signature)
    assert not verify(OracleTSS(seed=999).group_key, [H1], res.signature)


def test_signature_is_plain_ed25519_over_tagged_digest(engine):
    """Independent check with the raw cryptography API."""
    res = completed(engine, (H1, H2))
    pk = Ed25519PublicKey.from_public_bytes(engine.group_key.public_key)
    for digest, part in zip((H1, H2), split_signature(res.signature)):
        pk.verify(part, encode_fields("bridgeless/tss", engine.group_key.group_id, digest))


def test_every_single_bit_flip_fails(engine):
    sig = completed(engine).signature
    for bit in range(len(sig) * 8):
        mutated = bytearray(sig)
        mutated[bit // 8] ^= 1 << (bit % 8)
        assert not verify(engine.group_key, [H1], bytes(mutated)), bit


@given(hashes, st.data())
def test_bit_flip_property(message, data):
    engine = OracleTSS(seed=5)
    sig = engine.sign_unchecked(message)
    assert verify(engine.group_key, message, sig)
    bit = data.draw(st.integers(0, len(sig) * 8 - 1))
    mutated = bytearray(sig)
    mutated[bit // 8] ^= 1 << (bit % 8)
    assert not verify(engine.group_key, message, bytes(mutated))


@given(hashes, st.integers(1, 5))
def test_all_honest_sessions_always_verify(message, size):
    engine = OracleTSS(seed=size, committee_size=size)
    signers = list(range(size))
    engine.start_signing("s", signers, message, 10)
    for v in signers:
        engine.approve("s", v, message, 0)
    res = engine.session_result("s", 1)
    assert res.ok and verify(engine.group_key, message, res.signature)


@given(st.binary(max_size=200))
def test_random_bytes_never_verify(blob):
    engine = OracleTSS(seed=3)
    assert not verify(engine.group_key, [H1], blob)


def test_same_seed_same_key():
    assert OracleTSS(seed=1).group_key == OracleTSS(seed=1).group_key != OracleTSS(seed=2).group_key


def test_split_signature_validation():
    with pytest.raises(ValueError):
        split_signature(b"\x00" * 63)
    assert len(split_signature(b"\x00" * 128)) == 2
    assert tss.SIG_LEN == 64
