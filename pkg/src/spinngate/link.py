"""SpiNNaker link physical layer.

Symbols travel as NRZ 2-of-7 transitions: every symbol toggles exactly two
of the seven data wires, and the receiver answers each symbol by toggling
the ack wire. A sender that never sees the ack toggle stalls.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Optional

from .aer import LONG_BITS, SHORT_BITS, SpinnPacket, parse_packet

NUM_WIRES = 7
EOP = 16
DEFAULT_ACK_TIMEOUT = 1000

_PAIRS = list(combinations(range(NUM_WIRES), 2))
# Data(0..15) take the first 16 pairs in lexicographic order; (5, 6) marks EOP.
# (3,5), (3,6), (4,5), (4,6) are reserved.
CODE_TABLE: dict[int, tuple[int, int]] = {n: _PAIRS[n] for n in range(16)}
CODE_TABLE[EOP] = (5, 6)
_TOGGLE_MASKS = {sym: (1 << i) | (1 << j) for sym, (i, j) in CODE_TABLE.items()}
_DECODE = {mask: sym for sym, mask in _TOGGLE_MASKS.items()}


class LinkError(Exception):
    pass


class InvalidTransition(LinkError):
    pass


class FramingError(LinkError):
    pass


class MissingEop(FramingError):
    pass


def symbol_name(sym: int) -> str:
    return "EOP" if sym == EOP else format(sym, "X")


def encode_symbol(prev: int, sym: int) -> int:
    """Wire vector after sending ``sym`` from wire state ``prev``."""
    try:
        return prev ^ _TOGGLE_MASKS[sym]
    except KeyError:
        raise ValueError(f"not a link symbol: {sym!r}") from None


def decode_transition(prev: int, nxt: int) -> Optional[int]:
    """Symbol carried by the change from ``prev`` to ``nxt``; None when idle."""
    changed = (prev ^ nxt) & 0x7F
    if not changed:
        return None
    try:
        return _DECODE[changed]
    except KeyError:
        raise InvalidTransition(
            f"{prev:07b} -> {nxt:07b} toggles {changed.bit_count()} wires "
            "or an unassigned pair"
        ) from None


def frame_word(word: int, nbits: int) -> list[int]:
    return [(word >> (4 * i)) & 0xF for i in range(nbits // 4)] + [EOP]


def frame_packet(packet: SpinnPacket) -> list[int]:
    """Nibbles of the serialized packet, least significant first, then EOP."""
    return frame_word(packet.word, packet.nbits)


def deframe_symbols(symbols: Iterable[int]) -> tuple[int, int]:
    """Reassemble ``(word, nbits)`` from one framed packet."""
    nibbles = []
    for sym in symbols:
        if sym == EOP:
            if len(nibbles) * 4 not in (SHORT_BITS, LONG_BITS):
                raise FramingError(f"{len(nibbles)} nibbles before EOP")
            word = sum(n << (4 * i) for i, n in enumerate(nibbles))
            return word, len(nibbles) * 4
        if not 0 <= sym <= 15:
            raise ValueError(f"not a link symbol: {sym!r}")
        nibbles.append(sym)
    raise MissingEop(f"stream ended after {len(nibbles)} nibbles without EOP")


@dataclass(frozen=True)
class AckPolicy:
    """How the receiving end acknowledges symbols: normal, never, or delay:N."""

    kind: str = "normal"
    delay: int = 0

    def __post_init__(self):
        if self.kind not in ("normal", "never", "delay"):
            raise ValueError(f"unknown ack policy {self.kind!r}")
        if self.delay < 0:
            raise ValueError("ack delay must be non-negative")

    @classmethod
    def parse(cls, text: str) -> "AckPolicy":
        text = text.strip().lower()
        if text.startswith("delay:"):
            return cls("delay", int(text.split(":", 1)[1]))
        return cls(text)

    def __str__(self):
        return f"delay:{self.delay}" if self.kind == "delay" else self.kind


NORMAL = AckPolicy()
NEVER_ACK = AckPolicy("never")


@dataclass
class WireState:
    data: int = 0
    ack: int = 0


class LinkSender:
    """Transmitting endpoint: one symbol in flight, next one only after ack."""

    def __init__(self, ack_timeout: int = DEFAULT_ACK_TIMEOUT):
        self.ack_timeout = ack_timeout
        self.wires = 0
        self.symbols: deque[int] = deque()
        self.pending: Optional[int] = None
        self.sent_tick = 0
        self.last_ack_seen = 0
        self.stalled = False
        self.stall_tick: Optional[int] = None
        self.symbols_sent = 0
        self.acks_received = 0
        self.packets_sent = 0

    def queue(self, packet: SpinnPacket) -> None:
        self.symbols.extend(frame_packet(packet))

    def idle(self) -> bool:
        return not self.symbols and self.pending is None

    def step(self, now: int, ack_wire: int) -> bool:
        """Advance one tick. Returns True when the data wires changed."""
        if self.stalled:
            return False
        if self.pending is not None:
            if ack_wire != self.last_ack_seen:
                self.last_ack_seen = ack_wire
                self.acks_received += 1
                if self.pending == EOP:
                    self.packets_sent += 1
                self.pending = None
            elif now - self.sent_tick >= self.ack_timeout:
                self.stalled = True
                self.stall_tick = now
                return False
            else:
                return False
        if not self.symbols:
            return False
        sym = self.symbols.popleft()
        self.wires = encode_symbol(self.wires, sym)
        self.pending = sym
        self.sent_tick = now
        self.symbols_sent += 1
        return True

    def reset(self) -> None:
        self.symbols.clear()
        self.pending = None
        self.stalled = False
        self.stall_tick = None


class LinkReceiver:
    """Receiving endpoint: decodes transitions, reassembles packet words.

    After an invalid transition the receiver drops input until the next
    EOP and counts one framing error.
    """

    def __init__(self, policy: AckPolicy = NORMAL):
        self.policy = policy
        self.last_wires = 0
        self.ack = 0
        self.nibbles: list[int] = []
        self.resync = False
        self.framing_errors = 0
        self.symbols_received = 0
        self.words: deque[tuple[int, int]] = deque()
        self._ack_due: deque[int] = deque()

    def step(self, now: int, wires: int) -> bool:
        """Observe the data wires at ``now``. Returns True when ack toggled."""
        sym = None
        if wires != self.last_wires:
            prev, self.last_wires = self.last_wires, wires
            self.symbols_received += 1
            try:
                sym = decode_transition(prev, wires)
            except InvalidTransition:
                if not self.resync:
                    self.framing_errors += 1
                self.resync = True
                self.nibbles.clear()
            else:
                self._accept(sym)
            if self.policy.kind == "normal":
                self._ack_due.append(now)
            elif self.policy.kind == "delay":
                self._ack_due.append(now + self.policy.delay)
        toggled = False
        while self._ack_due and self._ack_due[0] <= now:
            self._ack_due.popleft()
            self.ack ^= 1
            toggled = True
        return toggled

    def _accept(self, sym: int) -> None:
        if sym == EOP:
            if self.resync:
                self.resync = False
            elif len(self.nibbles) * 4 in (SHORT_BITS, LONG_BITS):
                word = sum(n << (4 * i) for i, n in enumerate(self.nibbles))
                self.words.append((word, len(self.nibbles) * 4))
            else:
                self.framing_errors += 1
            self.nibbles.clear()
        elif not self.resync:
            self.nibbles.append(sym)
            if len(self.nibbles) > LONG_BITS // 4:
                self.framing_errors += 1
                self.resync = True
                self.nibbles.clear()

    def next_ack_tick(self) -> Optional[int]:
        return self._ack_due[0] if self._ack_due else None


class Link:
    """One direction of a SpiNNaker link: a sender and receiver on shared wires."""

    def __init__(
        self,
        name: str = "a2b",
        policy: AckPolicy = NORMAL,
        ack_timeout: int = DEFAULT_ACK_TIMEOUT,
        trace: Optional[list] = None,
    ):
        self.name = name
        self.sender = LinkSender(ack_timeout)
        self.receiver = LinkReceiver(policy)
        self.trace = trace
        self.max_in_flight = 0

    def send(self, packet: SpinnPacket) -> None:
        self.sender.queue(packet)

    def step(self, now: int) -> list[tuple[int, int]]:
        """Advance both ends by one tick; return words completed this tick."""
        sent = self.sender.step(now, self.receiver.ack)
        acked = self.receiver.step(now, self.sender.wires)
        in_flight = self.sender.symbols_sent - self.sender.acks_received
        self.max_in_flight = max(self.max_in_flight, in_flight)
        if self.trace is not None and (sent or acked):
            self.trace.append((now, self.name, self.sender.wires, self.receiver.ack))
        words = list(self.receiver.words)
        self.receiver.words.clear()
        return words

    def busy(self) -> bool:
        return not self.sender.idle() and not self.sender.stalled

    def next_event_tick(self, now: int) -> Optional[int]:
        """Earliest tick after ``now`` at which stepping could change anything."""
        candidates = []
        ack_tick = self.receiver.next_ack_tick()
        if ack_tick is not None:
            candidates.append(max(ack_tick, now + 1))
        s = self.sender
        if not s.stalled:
            if s.pending is not None:
                if s.last_ack_seen != self.receiver.ack:
                    candidates.append(now + 1)
                else:
                    candidates.append(max(s.sent_tick + s.ack_timeout, now + 1))
            elif s.symbols:
                candidates.append(now + 1)
        return min(candidates) if candidates else None


@dataclass
class TransferReport:
    delivered: list = field(default_factory=list)
    symbols_sent: int = 0
    acks_received: int = 0
    stalled: bool = False
    stall_symbol: Optional[int] = None
    stall_tick: Optional[int] = None
    framing_errors: int = 0
    max_in_flight: int = 0
    ticks: int = 0

    def summary(self) -> str:
        if self.stalled:
            return (
                f"delivered {len(self.delivered)}, stalled at symbol "
                f"{self.stall_symbol}"
            )
        return f"delivered {len(self.delivered)}, symbols {self.symbols_sent}"


def link_transfer(
    packets: Iterable[SpinnPacket],
    ack_policy: AckPolicy = NORMAL,
    budget: int = 1_000_000,
    ack_timeout: int = DEFAULT_ACK_TIMEOUT,
    link: Optional[Link] = None,
) -> TransferReport:
    """Push ``packets`` across a link for at most ``budget`` ticks.

    A stall is reported in the result rather than raised.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    if link is None:
        link = Link(policy=ack_policy, ack_timeout=ack_timeout)
    for p in packets:
        link.send(p)
    report = TransferReport()
    now = 0
    while now < budget:
        for word, nbits in link.step(now):
            report.delivered.append(parse_packet(word, nbits))
        nxt = link.next_event_tick(now)
        if nxt is None:
            break
        now = nxt
    report.ticks = now
    s = link.sender
    report.symbols_sent = s.symbols_sent
    report.acks_received = s.acks_received
    report.stalled = s.stalled
    if s.stalled:
        report.stall_symbol = s.symbols_sent
        report.stall_tick = s.stall_tick
    report.framing_errors = link.receiver.framing_errors
    report.max_in_flight = link.max_in_flight
    return report


def write_wire_trace(path, trace) -> None:
    """CSV of wire changes: tick, direction, 7-bit data vector, ack bit."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tick", "direction", "data", "ack"])
        for tick, direction, data, ack in trace:
            w.writerow([tick, direction, format(data, "07b"), ack])
