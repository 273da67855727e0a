"""Address-event packets and the SpiNNaker multicast packet codec.

Packet bit layout (bit 0 is transmitted first)::

    bit  0      parity (odd over the whole packet)
    bit  1      payload present
    bits 2-3    timestamp (always 00)
    bits 4-5    emergency routing (always 00)
    bits 6-7    packet type (00 = multicast)
    bits 8-39   routing key, LSB first
    bits 40-71  payload, LSB first (only when bit 1 is set)

Field positions live in the constants below and nowhere else.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Mapping, Optional, Sequence

SHORT_BITS = 40
LONG_BITS = 72

PARITY_BIT = 0
PAYLOAD_FLAG_BIT = 1
TIMESTAMP_SHIFT = 2
EMERGENCY_SHIFT = 4
TYPE_SHIFT = 6
KEY_SHIFT = 8
PAYLOAD_SHIFT = 40

MASK32 = 0xFFFFFFFF


class PacketError(ValueError):
    """Base class for malformed packets."""


class IllegalLength(PacketError):
    pass


class ParityError(PacketError):
    pass


class UnsupportedPacketType(PacketError):
    pass


class UnroutableEvent(LookupError):
    pass


class UnroutableKey(LookupError):
    pass


class PacketType(IntEnum):
    MULTICAST = 0
    POINT_TO_POINT = 1
    NEAREST_NEIGHBOUR = 2
    FIXED_ROUTE = 3


@dataclass(frozen=True)
class AerEvent:
    """A spike, reduced to the address of the neuron that fired and when."""

    address: int
    timestamp: int = 0

    def __post_init__(self):
        if not 0 <= self.address <= MASK32:
            raise ValueError(f"address {self.address} does not fit in 32 bits")
        if not 0 <= self.timestamp < 1 << 64:
            raise ValueError(f"timestamp {self.timestamp} does not fit in 64 bits")


@dataclass(frozen=True)
class SpinnPacket:
    """A SpiNNaker link packet. Only multicast packets are ever built here."""

    key: int
    payload: Optional[int] = None
    packet_type: PacketType = PacketType.MULTICAST
    timestamp_bits: int = 0
    emergency_bits: int = 0

    def __post_init__(self):
        if not 0 <= self.key <= MASK32:
            raise ValueError(f"key {self.key:#x} does not fit in 32 bits")
        if self.payload is not None and not 0 <= self.payload <= MASK32:
            raise ValueError(f"payload {self.payload:#x} does not fit in 32 bits")
        if not 0 <= self.timestamp_bits <= 3 or not 0 <= self.emergency_bits <= 3:
            raise ValueError("timestamp and emergency fields are 2 bits wide")

    @property
    def nbits(self) -> int:
        return SHORT_BITS if self.payload is None else LONG_BITS

    @property
    def word(self) -> int:
        """The serialized packet, parity included, as an integer."""
        content = _content_word(self)
        return content | _parity_of(content)

    @property
    def parity(self) -> int:
        return self.word & 1

    def to_hex(self) -> str:
        return format_hex(self.word, self.nbits)


def _content_word(packet: SpinnPacket) -> int:
    word = (
        (packet.timestamp_bits << TIMESTAMP_SHIFT)
        | (packet.emergency_bits << EMERGENCY_SHIFT)
        | (int(packet.packet_type) << TYPE_SHIFT)
        | (packet.key << KEY_SHIFT)
    )
    if packet.payload is not None:
        word |= 1 << PAYLOAD_FLAG_BIT
        word |= packet.payload << PAYLOAD_SHIFT
    return word


def _parity_of(content: int) -> int:
    # odd parity: set the bit when the content has an even number of ones
    return 1 - (content.bit_count() & 1)


def compute_parity(content_bits: Sequence[int]) -> int:
    """Parity bit for a packet whose parity position is zero.

    ``content_bits`` is the packet as a bit sequence, bit 0 first. The
    returned bit makes the total number of ones odd.
    """
    if len(content_bits) not in (SHORT_BITS, LONG_BITS):
        raise IllegalLength(f"packets are 40 or 72 bits, got {len(content_bits)}")
    ones = sum(1 for b in content_bits if b)
    return 1 - (ones & 1)


def word_to_bits(word: int, nbits: int) -> list[int]:
    return [(word >> i) & 1 for i in range(nbits)]


def bits_to_word(bits: Sequence[int]) -> int:
    return sum((1 << i) for i, b in enumerate(bits) if b)


def build_mc_packet(key: int, payload: Optional[int] = None) -> SpinnPacket:
    """Multicast packet carrying ``key`` and, optionally, a 32-bit payload."""
    return SpinnPacket(key=key, payload=payload)


def parse_packet(word: int, nbits: Optional[int] = None) -> SpinnPacket:
    """Parse a serialized packet.

    ``nbits`` is the transmitted length (40 or 72). When omitted it is
    inferred from the magnitude of ``word`` and the payload flag, which is
    only reliable for uncorrupted input; receivers always know the length.
    """
    if word < 0:
        raise IllegalLength("negative packet word")
    if nbits is None:
        if word >> SHORT_BITS or (word >> PAYLOAD_FLAG_BIT) & 1:
            nbits = LONG_BITS
        else:
            nbits = SHORT_BITS
    if nbits not in (SHORT_BITS, LONG_BITS):
        raise IllegalLength(f"packets are 40 or 72 bits, got {nbits}")
    if word >> nbits:
        raise IllegalLength(f"word {word:#x} is wider than {nbits} bits")
    if not word.bit_count() & 1:
        raise ParityError(f"parity check failed for {format_hex(word, nbits)}")

    has_payload = (word >> PAYLOAD_FLAG_BIT) & 1
    if has_payload != (nbits == LONG_BITS):
        raise IllegalLength(
            f"payload flag {has_payload} disagrees with a {nbits}-bit packet"
        )
    ptype = (word >> TYPE_SHIFT) & 3
    if ptype != PacketType.MULTICAST:
        raise UnsupportedPacketType(f"packet type {PacketType(ptype).name}")
    return SpinnPacket(
        key=(word >> KEY_SHIFT) & MASK32,
        payload=(word >> PAYLOAD_SHIFT) & MASK32 if has_payload else None,
        timestamp_bits=(word >> TIMESTAMP_SHIFT) & 3,
        emergency_bits=(word >> EMERGENCY_SHIFT) & 3,
    )


def format_hex(word: int, nbits: int) -> str:
    return format(word, f"0{nbits // 4}x").upper()


def parse_hex(text: str) -> SpinnPacket:
    """Parse the 10- or 18-digit hex form used in traces and on the CLI."""
    text = text.strip()
    if text.lower().startswith("0x"):
        text = text[2:]
    if len(text) not in (SHORT_BITS // 4, LONG_BITS // 4):
        raise IllegalLength(f"expected 10 or 18 hex digits, got {len(text)}")
    return parse_packet(int(text, 16), len(text) * 4)


@dataclass
class RoutingTable:
    """Address-to-key mapper and its reverse.

    ``reverse`` always contains the inverse of ``forward`` and may hold extra
    keys, e.g. the key a remote population answers with.
    """

    forward: dict[int, int] = field(default_factory=dict)
    reverse: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        keys = list(self.forward.values())
        if len(set(keys)) != len(keys):
            raise ValueError("forward routing entries must be injective")
        for address, key in self.forward.items():
            if self.reverse.setdefault(key, address) != address:
                raise ValueError(
                    f"reverse entry for key {key:#x} conflicts with forward entry"
                )

    @classmethod
    def identity(cls, addresses) -> "RoutingTable":
        return cls({a: a for a in addresses})

    @classmethod
    def from_maps(
        cls, forward: Mapping[int, int], extra_reverse: Mapping[int, int] = ()
    ) -> "RoutingTable":
        return cls(dict(forward), dict(extra_reverse))

    def add(self, address: int, key: int) -> None:
        if key in self.reverse and self.reverse[key] != address:
            raise ValueError(f"key {key:#x} already routes to {self.reverse[key]}")
        if address in self.forward:
            raise ValueError(f"address {address} already has a key")
        self.forward[address] = key
        self.reverse[key] = address


def experiment_routing() -> RoutingTable:
    """External device neuron 0 sends key 0; the set-value answer arrives as key 6."""
    return RoutingTable({0: 0}, {6: 6})


def map_event_to_key(event: AerEvent, table: RoutingTable) -> int:
    try:
        return table.forward[event.address]
    except KeyError:
        raise UnroutableEvent(f"no routing key for address {event.address}") from None


def map_key_to_event(key: int, table: RoutingTable, now: int) -> AerEvent:
    try:
        return AerEvent(table.reverse[key], now)
    except KeyError:
        raise UnroutableKey(f"no address for key {key:#x}") from None
