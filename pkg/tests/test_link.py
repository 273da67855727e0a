import random

import pytest
from hypothesis import given, strategies as st

from spinngate.aer import build_mc_packet, parse_packet
from spinngate.link import (
    CODE_TABLE,
    EOP,
    NEVER_ACK,
    NORMAL,
    AckPolicy,
    FramingError,
    InvalidTransition,
    Link,
    LinkReceiver,
    MissingEop,
    decode_transition,
    deframe_symbols,
    encode_symbol,
    frame_packet,
    link_transfer,
    write_wire_trace,
)

ALL_SYMBOLS = list(range(16)) + [EOP]


def test_code_table_shape():
    pairs = set(CODE_TABLE.values())
    assert len(pairs) == 17
    assert CODE_TABLE[0] == (0, 1)
    assert CODE_TABLE[15] == (3, 4)
    assert CODE_TABLE[EOP] == (5, 6)
    for reserved in [(3, 5), (3, 6), (4, 5), (4, 6)]:
        assert reserved not in pairs


def test_encode_examples():
    assert encode_symbol(0b0000000, 0) == 0b0000011
    assert encode_symbol(0b0000011, 0) == 0b0000000
    assert encode_symbol(0b0000000, EOP) == 0b1100000


def test_decode_examples():
    assert decode_transition(0b0000000, 0b0000011) == 0
    for w in range(128):
        assert decode_transition(w, w) is None
    with pytest.raises(InvalidTransition):
        decode_transition(0b0000000, 0b0000111)


def test_decode_single_toggle_and_reserved_pairs():
    with pytest.raises(InvalidTransition):
        decode_transition(0, 0b0000001)
    with pytest.raises(InvalidTransition):
        decode_transition(0, (1 << 3) | (1 << 5))


def test_every_symbol_from_random_states():
    rng = random.Random(3)
    for sym in ALL_SYMBOLS:
        for _ in range(100):
            prev = rng.getrandbits(7)
            nxt = encode_symbol(prev, sym)
            assert (prev ^ nxt).bit_count() == 2
            assert decode_transition(prev, nxt) == sym


def test_frame_examples():
    assert frame_packet(build_mc_packet(0)) == [1, 0, 0, 0, 0, 0, 0, 0, 0, 0, EOP]
    assert frame_packet(build_mc_packet(6)) == [1, 0, 6, 0, 0, 0, 0, 0, 0, 0, EOP]
    assert len(frame_packet(build_mc_packet(6, 1))) == 19


def test_deframe_examples():
    assert deframe_symbols([1] + [0] * 9 + [EOP]) == (0x0000000001, 40)
    with pytest.raises(FramingError):
        deframe_symbols([0] * 9 + [EOP])
    with pytest.raises(MissingEop):
        deframe_symbols([1] + [0] * 9)
    word, nbits = deframe_symbols(frame_packet(build_mc_packet(6, 0xDEADBEEF)))
    assert nbits == 72
    assert parse_packet(word, nbits).payload == 0xDEADBEEF


def test_frame_round_trip_10k():
    rng = random.Random(11)
    for _ in range(10_000):
        payload = rng.getrandbits(32) if rng.random() < 0.5 else None
        p = build_mc_packet(rng.getrandbits(32), payload)
        word, nbits = deframe_symbols(frame_packet(p))
        assert parse_packet(word, nbits) == p


def test_transfer_normal_one_packet():
    r = link_transfer([build_mc_packet(0)], NORMAL, budget=100)
    assert len(r.delivered) == 1 and r.symbols_sent == 11
    assert not r.stalled


def test_transfer_never_ack():
    r = link_transfer([build_mc_packet(0)], NEVER_ACK, budget=10_000)
    assert r.delivered == []
    assert r.symbols_sent == 1
    assert r.stalled and r.stall_symbol == 1
    assert r.stall_tick == 1000
    assert r.summary() == "delivered 0, stalled at symbol 1"


def test_transfer_empty():
    r = link_transfer([], NORMAL, budget=10)
    assert (len(r.delivered), r.symbols_sent) == (0, 0)


def test_transfer_budget_must_be_positive():
    with pytest.raises(ValueError):
        link_transfer([], NORMAL, budget=0)


def test_transfer_delay_policy_slows_but_delivers():
    packets = [build_mc_packet(k, k if k % 2 else None) for k in range(4)]
    r = link_transfer(packets, AckPolicy("delay", 5), budget=10_000)
    assert r.delivered == packets
    assert r.ticks >= 5 * r.symbols_sent - 5


def test_transfer_delay_beyond_timeout_stalls():
    r = link_transfer([build_mc_packet(1)], AckPolicy("delay", 2000), budget=10_000, ack_timeout=1000)
    assert r.stalled and r.stall_symbol == 1


def test_flow_control_in_flight_bound():
    packets = [build_mc_packet(k) for k in range(20)]
    r = link_transfer(packets, AckPolicy("delay", 3), budget=100_000)
    assert r.max_in_flight == 1
    assert r.symbols_sent - r.acks_received in (0, 1)


def test_determinism():
    packets = [build_mc_packet(k, k * 3) for k in range(10)]
    assert link_transfer(packets, NORMAL) == link_transfer(packets, NORMAL)


def test_ack_policy_parse():
    assert AckPolicy.parse("never") == NEVER_ACK
    assert AckPolicy.parse("delay:7") == AckPolicy("delay", 7)
    assert str(AckPolicy.parse("delay:7")) == "delay:7"
    with pytest.raises(ValueError):
        AckPolicy.parse("sometimes")


def test_receiver_resyncs_at_eop():
    rx = LinkReceiver()
    wires = 0
    t = 0

    def send(w):
        nonlocal t
        rx.step(t, w)
        t += 1

    # three-wire glitch, garbage nibbles, then EOP: one framing error
    wires ^= 0b0000111
    send(wires)
    for sym in [3, 4, EOP]:
        wires = encode_symbol(wires, sym)
        send(wires)
    assert rx.framing_errors == 1
    assert not rx.words
    for sym in frame_packet(build_mc_packet(6)):
        wires = encode_symbol(wires, sym)
        send(wires)
    assert list(rx.words) == [(0x601, 40)]


def test_receiver_short_frame_counts_error():
    rx = LinkReceiver()
    wires = 0
    for t, sym in enumerate([1, 2, 3, EOP]):
        wires = encode_symbol(wires, sym)
        rx.step(t, wires)
    assert rx.framing_errors == 1 and not rx.words


@given(st.lists(st.tuples(st.integers(0, 2**32 - 1), st.booleans()), max_size=8))
def test_transfer_property(items):
    packets = [build_mc_packet(k, k if p else None) for k, p in items]
    r = link_transfer(packets, NORMAL, budget=10_000)
    assert r.delivered == packets
    assert r.symbols_sent == sum(p.nbits // 4 + 1 for p in packets)


def test_wire_trace_csv(tmp_path):
    trace = []
    link = Link("tx", trace=trace)
    link_transfer([build_mc_packet(0)], link=link, budget=100)
    path = tmp_path / "wires.csv"
    write_wire_trace(path, trace)
    lines = path.read_text().splitlines()
    assert lines[0] == "tick,direction,data,ack"
    assert lines[1] == "0,tx,0000101,1"  # Data(1) toggles wires 0 and 2
    assert len(lines) == 1 + 11
