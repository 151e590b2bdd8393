"""Synchronous message fabric and Bracha-style reliable broadcast.

Time advances in integer ticks. A message sent during tick ``k`` is handed to
its recipient at tick ``k + 1``; within a tick, deliveries are ordered by
``(from, to, seq)`` so that runs are reproducible.
"""

from __future__ import annotations

from collections import defaultdict
from typing import Callable, Iterable, Iterator, NamedTuple, Optional

from .model import encode_fields

RB_SEND = "rb-send"
RB_ECHO = "rb-echo"
RB_READY = "rb-ready"
RB_KINDS = frozenset((RB_SEND, RB_ECHO, RB_READY))


class Envelope(NamedTuple):
    frm: int
    to: int
    seq: int
    deliver_at: int
    payload: tuple


class DuplicateBroadcast(Exception):
    pass


def _flatten(payload) -> Iterable:
    for item in payload:
        if isinstance(item, (tuple, list, frozenset)):
            yield from _flatten(sorted(item) if isinstance(item, frozenset) else item)
        elif item is None:
            yield b""
        elif isinstance(item, (bytes, str, int)):
            yield item
        else:
            yield repr(item)


def wire_size(payload: tuple) -> int:
    return len(encode_fields(*_flatten(payload)))


class EventLog:
    """Append-only list of formatted event lines."""

    def __init__(self) -> None:
        self.lines: list[str] = []

    def record(self, tick: int, kind: str, frm: int, to: int, instance: str, size: int) -> None:
        self.lines.append(
            f"tick={tick} kind={kind} from={frm} to={to} instance={instance} bytes={size}"
        )

    def note(self, tick: int, kind: str, **fields) -> None:
        body = " ".join(f"{k}={v}" for k, v in fields.items())
        self.lines.append(f"tick={tick} kind={kind} {body}".rstrip())

    def text(self) -> str:
        return "\n".join(self.lines) + ("\n" if self.lines else "")


def _instance_label(payload: tuple) -> str:
    return str(payload[1]) if len(payload) > 1 else "-"


ALL = -1


class Network:
    """Point-to-point authenticated channels among ``n`` nodes with delay 1.

    Queued items are ``(from, seq, to, payload)``; ``to == ALL`` marks a
    multicast, fanned out lazily at delivery in the same ``(from, to, seq)``
    order as individual sends would have been.
    """

    def __init__(self, n: int, log: Optional[EventLog] = None, start_tick: int = 0):
        self.n = n
        self.tick = start_tick
        self.log = log
        self._seq = 0
        self._queue: dict[int, list[tuple]] = defaultdict(list)
        # Senders whose outgoing traffic is suppressed (adversary capability).
        self.suppressed: set[int] = set()
        # Optional per-sender filter: return False to drop (to, payload).
        self.filters: dict[int, Callable[[int, tuple], bool]] = {}

    def send(self, frm: int, to: int, payload: tuple) -> None:
        if not (0 <= frm < self.n and 0 <= to < self.n):
            raise ValueError(f"unknown endpoint {frm}->{to}")
        if frm in self.suppressed:
            return
        flt = self.filters.get(frm)
        if flt is not None and not flt(to, payload):
            return
        self._seq += 1
        self._queue[self.tick + 1].append((frm, self._seq, to, payload))
        if self.log is not None:
            self.log.record(self.tick, "send", frm, to, _instance_label(payload), wire_size(payload))

    def multicast(self, frm: int, payload: tuple) -> None:
        """Send ``payload`` to every node, the sender included."""
        if frm in self.suppressed or frm in self.filters or self.log is not None:
            for to in range(self.n):
                self.send(frm, to, payload)
            return
        self._seq += self.n
        self._queue[self.tick + 1].append((frm, self._seq, ALL, payload))

    def pending(self) -> int:
        return sum(
            self.n if item[2] == ALL else 1
            for k, items in self._queue.items() if k > self.tick for item in items
        )

    def deliveries(self) -> Iterator[tuple[int, int, tuple]]:
        """Advance the clock and yield ``(from, to, payload)`` due at the new tick."""
        self.tick += 1
        due = self._queue.pop(self.tick, None)
        if not due:
            return iter(())
        due.sort(key=_frm_seq)
        return self._fan_out(due)

    def _fan_out(self, due: list[tuple]) -> Iterator[tuple[int, int, tuple]]:
        n = self.n
        log = self.log
        i, total = 0, len(due)
        while i < total:
            frm = due[i][0]
            j = i + 1
            while j < total and due[j][0] == frm:
                j += 1
            if j == i + 1 and due[i][2] == ALL:
                payload = due[i][3]
                for to in range(n):
                    yield frm, to, payload
            else:
                group = due[i:j]
                for to in range(n):
                    for _, _, dst, payload in group:
                        if dst == to or dst == ALL:
                            if log is not None:
                                log.record(self.tick, "deliver", frm, to, _instance_label(payload),
                                           wire_size(payload))
                            yield frm, to, payload
            i = j

    def advance_tick(self) -> list[Envelope]:
        """Advance the clock; envelopes due now, sorted by ``(from, to, seq)``."""
        out = []
        per_pair: dict[tuple[int, int], int] = defaultdict(int)
        at = self.tick + 1
        for frm, to, payload in self.deliveries():
            per_pair[(frm, to)] += 1
            out.append(Envelope(frm, to, per_pair[(frm, to)], at, payload))
        return out


def _frm_seq(item: tuple) -> tuple[int, int]:
    return item[0], item[1]


class _RBState:
    __slots__ = ("sent_echo", "sent_ready", "echo_from", "ready_from", "echoes", "readies", "delivered")

    def __init__(self) -> None:
        self.sent_echo = False
        self.sent_ready = False
        self.echo_from: set[int] = set()
        self.ready_from: set[int] = set()
        self.echoes: dict[bytes, int] = {}
        self.readies: dict[bytes, int] = {}
        self.delivered: Optional[bytes] = None


class ReliableBroadcast:
    """One node's endpoint for every RB instance it participates in.

    Instances are keyed by ``(instance_id, origin)``; echo and ready messages
    carry the origin so a Byzantine node cannot hijack another sender's slot.
    Thresholds: ready after ``ceil((n+t+1)/2)`` matching echoes or ``t+1``
    matching readies; deliver after ``2t+1`` matching readies.
    """

    def __init__(self, me: int, net: Network, n: int, t: int):
        self.me = me
        self.net = net
        self.n = n
        self.t = t
        self.echo_quorum = (n + t + 2) // 2
        self.ready_amplify = t + 1
        self.deliver_quorum = 2 * t + 1
        self._states: dict[tuple[str, int], _RBState] = {}
        self._broadcasted: set[str] = set()
        self._first: dict[str, tuple[bytes, int]] = {}

    def broadcast(self, instance: str, message: bytes) -> None:
        if instance in self._broadcasted:
            raise DuplicateBroadcast(instance)
        self._broadcasted.add(instance)
        self.net.multicast(self.me, (RB_SEND, instance, self.me, message))

    def deliver(self, instance: str, origin: Optional[int] = None) -> Optional[tuple[bytes, int]]:
        """Delivered ``(message, origin)`` for the instance, or None if not yet."""
        if origin is None:
            return self._first.get(instance)
        st = self._states.get((instance, origin))
        if st is None or st.delivered is None:
            return None
        return st.delivered, origin

    def handle(self, frm: int, payload: tuple) -> Optional[tuple[str, bytes, int]]:
        """Process one RB message; returns ``(instance, message, origin)`` on delivery."""
        kind, instance, origin, value = payload
        st = self._states.get((instance, origin))
        if st is None:
            st = self._states[(instance, origin)] = _RBState()
        if kind == RB_SEND:
            if frm != origin or st.sent_echo:
                return None
            st.sent_echo = True
            self.net.multicast(self.me, (RB_ECHO, instance, origin, value))
            return None
        if st.delivered is not None:
            return None
        if kind == RB_ECHO:
            seen = st.echo_from
            if frm in seen:
                return None
            seen.add(frm)
            counts = st.echoes
            c = counts[value] = counts.get(value, 0) + 1
            if c >= self.echo_quorum and not st.sent_ready:
                st.sent_ready = True
                self.net.multicast(self.me, (RB_READY, instance, origin, value))
            return None
        if kind == RB_READY:
            seen = st.ready_from
            if frm in seen:
                return None
            seen.add(frm)
            counts = st.readies
            c = counts[value] = counts.get(value, 0) + 1
            if c >= self.ready_amplify and not st.sent_ready:
                st.sent_ready = True
                self.net.multicast(self.me, (RB_READY, instance, origin, value))
            if c >= self.deliver_quorum:
                st.delivered = value
                self._first.setdefault(instance, (value, origin))
                if self.net.log is not None:
                    self.net.log.record(self.net.tick, "rb-deliver", origin, self.me, instance, len(value))
                return instance, value, origin
            return None
        raise ValueError(f"not an RB message kind: {kind!r}")
