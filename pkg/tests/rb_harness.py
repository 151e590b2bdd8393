"""Small driver for reliable-broadcast runs with scripted Byzantine nodes."""

import itertools

from bridgeless.simnet import RB_ECHO, RB_READY, RB_SEND, Network, ReliableBroadcast

INSTANCE = "inst"


def run_rb(n, t, byzantine, script, honest_sender=None, message=b"m0", ticks=8):
    """Run one RB instance; returns ({honest node: [(tick, value, origin)]}, values injected).

    ``script`` maps tick -> list of (from, to, kind, origin, value) sent by Byzantine nodes.
    """
    net = Network(n)
    nodes = {i: ReliableBroadcast(i, net, n, t) for i in range(n) if i not in byzantine}
    got = {i: [] for i in nodes}
    injected = set()
    if honest_sender is not None:
        nodes[honest_sender].broadcast(INSTANCE, message)
        injected.add(message)
    for tick in range(ticks):
        for frm, to, kind, origin, value in script.get(tick, ()):
            net.send(frm, to, (kind, INSTANCE, origin, value))
            injected.add(value)
        for env in net.advance_tick():
            if env.to in nodes:
                out = nodes[env.to].handle(env.frm, env.payload)
                if out is not None:
                    got[env.to].append((net.tick, out[1], out[2]))
    return got, injected, nodes


# n=4, t=1 equivocation patterns: one value (or silence) per honest recipient
VALUES = (b"m0", b"m1", None)
HONEST = (1, 2, 3)


def pattern_messages(frm, kind, pattern, origin):
    return [(frm, j, kind, origin, v) for j, v in zip(HONEST, pattern) if v is not None]


def check_rb_properties(got, injected, honest_sender=None, message=None):
    delivered = {i: d for i, d in got.items() if d}
    for d in got.values():
        assert len(d) <= 1  # integrity: at most once
    values = {d[0][1] for d in delivered.values()}
    assert len(values) <= 1  # agreement
    if delivered:
        assert len(delivered) == len(got)  # totality: all or none
        assert values <= injected  # integrity: only values somebody actually sent
    if honest_sender is not None:
        assert values == {message}  # validity
        assert len(delivered) == len(got)


PATTERNS = list(itertools.product(VALUES, repeat=3))


def sender_equivocation_runs(send_patterns=PATTERNS):
    """Byzantine node 0 originates; yields (got, injected) for every send/echo/ready pattern."""
    for send in send_patterns:
        for echo in PATTERNS:
            for ready in PATTERNS:
                script = {0: pattern_messages(0, RB_SEND, send, 0)
                          + pattern_messages(0, RB_ECHO, echo, 0)
                          + pattern_messages(0, RB_READY, ready, 0)}
                got, injected, _ = run_rb(4, 1, {0}, script)
                yield got, injected


def relay_runs(echo_patterns=PATTERNS):
    """Honest node 1 broadcasts m0 while Byzantine node 0 relays arbitrary echoes and readies."""
    for echo in echo_patterns:
        for ready in PATTERNS:
            for when in (0, 1, 2):
                script = {when: [(0, j, kind, 1, v)
                                 for kind, pat in ((RB_ECHO, echo), (RB_READY, ready))
                                 for j, v in zip(HONEST, pat) if v is not None]}
                got, injected, _ = run_rb(4, 1, {0}, script, honest_sender=1, message=b"m0")
                yield got, injected
