import pytest
from hypothesis import given
from hypothesis import strategies as st

from bridgeless.simnet import (
    RB_ECHO,
    RB_READY,
    RB_SEND,
    DuplicateBroadcast,
    Envelope,
    EventLog,
    Network,
    ReliableBroadcast,
)
from rb_harness import (
    INSTANCE,
    PATTERNS,
    check_rb_properties,
    pattern_messages,
    relay_runs,
    run_rb,
    sender_equivocation_runs,
)


# network

def test_empty_queue_gives_empty_list():
    assert Network(3).advance_tick() == []


def test_delivery_one_tick_later():
    net = Network(3, start_tick=5)
    net.send(1, 2, ("x", "i"))
    assert net.pending() == 1
    out = net.advance_tick()
    assert [(e.frm, e.to, e.deliver_at, e.payload) for e in out] == [(1, 2, 6, ("x", "i"))]


def test_send_to_self_is_delivered_next_tick():
    net = Network(2)
    net.send(0, 0, ("x", "i"))
    assert [e.to for e in net.advance_tick()] == [0]


def test_due_in_two_ticks_not_in_this_list():
    net = Network(2)
    net.send(0, 1, ("now", "i"))
    net.tick += 1
    net.send(0, 1, ("later", "i"))
    net.tick -= 1
    assert [e.payload[0] for e in net.advance_tick()] == ["now"]
    assert [e.payload[0] for e in net.advance_tick()] == ["later"]


def test_order_is_from_to_seq():
    net = Network(3)
    net.send(2, 0, ("a", "i"))
    net.send(0, 1, ("b", "i"))
    net.send(0, 0, ("c", "i"))
    net.send(0, 1, ("d", "i"))
    out = net.advance_tick()
    assert [(e.frm, e.to, e.payload[0]) for e in out] == [(0, 0, "c"), (0, 1, "b"), (0, 1, "d"), (2, 0, "a")]
    assert [e.seq for e in out if (e.frm, e.to) == (0, 1)] == [1, 2]


def test_suppressed_sender_never_delivers():
    net = Network(3)
    net.suppressed.add(1)
    net.send(1, 2, ("x", "i"))
    net.multicast(1, ("y", "i"))
    assert net.advance_tick() == []


def test_filter_drops_selected_messages():
    net = Network(3)
    net.filters[0] = lambda to, payload: to != 2
    net.multicast(0, ("x", "i"))
    assert [e.to for e in net.advance_tick()] == [0, 1]


def test_unknown_endpoint_rejected():
    with pytest.raises(ValueError):
        Network(2).send(0, 5, ("x", "i"))


ops = st.lists(
    st.tuples(st.booleans(), st.integers(0, 3), st.integers(0, 3), st.integers(0, 9)), max_size=25
)


@given(ops)
def test_multicast_matches_reference_order(script):
    """Lazy multicast fan-out equals a naive model of individual sends sorted by (from, to, seq)."""
    net = Network(4)
    reference = []
    seq = 0
    for is_multi, frm, to, tag in script:
        payload = ("m", str(tag))
        targets = range(4) if is_multi else [to]
        if is_multi:
            net.multicast(frm, payload)
        else:
            net.send(frm, to, payload)
        for j in targets:
            seq += 1
            reference.append((frm, j, seq, payload))
    reference.sort(key=lambda x: x[:3])
    got = [(e.frm, e.to, e.payload) for e in net.advance_tick()]
    assert got == [(f, j, p) for f, j, _, p in reference]


def test_event_log_line_format():
    log = EventLog()
    net = Network(2, log=log)
    net.send(0, 1, ("kind", "inst-7", b"abc"))
    net.advance_tick()
    lines = log.text().splitlines()
    assert lines[0].startswith("tick=0 kind=send from=0 to=1 instance=inst-7 bytes=")
    assert lines[1].startswith("tick=1 kind=deliver from=0 to=1 instance=inst-7 bytes=")


# reliable broadcast: honest runs

def test_thresholds():
    rb = ReliableBroadcast(0, Network(4), 4, 1)
    assert (rb.echo_quorum, rb.ready_amplify, rb.deliver_quorum) == (3, 2, 3)
    rb = ReliableBroadcast(0, Network(10), 10, 3)
    assert rb.echo_quorum == 7  # ceil(14 / 2)


@pytest.mark.parametrize("n,t", [(1, 0), (4, 1), (7, 2), (10, 3)])
def test_honest_broadcast_delivers_everywhere_within_three_ticks(n, t):
    got, _, nodes = run_rb(n, t, set(), {}, honest_sender=0, message=b"hello", ticks=5)
    for i, deliveries in got.items():
        assert [(v, o) for _, v, o in deliveries] == [(b"hello", 0)]
        assert deliveries[0][0] <= 3
        assert nodes[i].deliver(INSTANCE) == (b"hello", 0)
        assert nodes[i].deliver(INSTANCE, 0) == (b"hello", 0)
        assert nodes[i].deliver(INSTANCE, 1) is None


def test_nothing_delivered_before_quorum_and_without_broadcast():
    net = Network(4)
    nodes = [ReliableBroadcast(i, net, 4, 1) for i in range(4)]
    nodes[0].broadcast(INSTANCE, b"m")
    assert all(nd.deliver(INSTANCE) is None for nd in nodes)
    got, _, _ = run_rb(4, 1, set(), {})
    assert all(not d for d in got.values())


def test_duplicate_broadcast_rejected():
    rb = ReliableBroadcast(0, Network(4), 4, 1)
    rb.broadcast("x", b"1")
    with pytest.raises(DuplicateBroadcast):
        rb.broadcast("x", b"2")


def test_forged_send_from_non_origin_is_ignored():
    # Node 3 claims node 0 sent a value; nobody echoes it.
    script = {0: [(3, j, RB_SEND, 0, b"fake") for j in range(4)]}
    got, _, _ = run_rb(4, 1, {3}, script)
    assert all(not d for d in got.values())


# reliable broadcast: exhaustive sender equivocation, n=4, t=1

@pytest.mark.parametrize("send_pattern", PATTERNS, ids=lambda p: "send-" + "".join("x" if v is None else v.decode()[-1] for v in p))
def test_byzantine_sender_equivocation_exhaustive(send_pattern):
    """Byzantine node 0 originates; every send, echo and ready pattern over {m0, m1, silent}."""
    for got, injected in sender_equivocation_runs([send_pattern]):
        check_rb_properties(got, injected)


def test_equivocation_suite_covers_both_outcomes():
    uniform = {0: pattern_messages(0, RB_SEND, (b"m0",) * 3, 0)}
    got, _, _ = run_rb(4, 1, {0}, uniform)
    assert all(d and d[0][1] == b"m0" for d in got.values())
    split = {0: pattern_messages(0, RB_SEND, (b"m0", b"m1", None), 0)}
    got, _, _ = run_rb(4, 1, {0}, split)
    assert not any(got.values())


@pytest.mark.parametrize("echo_pattern", PATTERNS)
def test_byzantine_relay_cannot_break_validity(echo_pattern):
    for got, injected in relay_runs([echo_pattern]):
        check_rb_properties(got, injected, honest_sender=1, message=b"m0")


byz_msg = st.tuples(
    st.integers(0, 5),  # tick
    st.sampled_from([RB_SEND, RB_ECHO, RB_READY]),
    st.integers(0, 6),  # recipient
    st.sampled_from([b"a", b"b"]),
)


@given(st.lists(byz_msg, max_size=40), st.sampled_from([None, 2]))
def test_rb_properties_random_schedules_n7_t2(msgs, honest_sender):
    """Two Byzantine nodes (0 and 1) send arbitrary messages at arbitrary ticks."""
    script = {}
    for k, (tick, kind, to, value) in enumerate(msgs):
        frm = k % 2
        script.setdefault(tick, []).append((frm, to, kind, 0 if honest_sender is None else honest_sender, value))
    got, injected, _ = run_rb(7, 2, {0, 1}, script, honest_sender=honest_sender, message=b"a", ticks=10)
    check_rb_properties(got, injected, honest_sender, b"a" if honest_sender is not None else None)


def test_envelope_fields():
    e = Envelope(0, 1, 1, 3, ("x",))
    assert e._fields == ("frm", "to", "seq", "deliver_at", "payload")
