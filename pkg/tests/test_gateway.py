
import pytest
from hypothesis import given, strategies as st

from spinngate.aer import RoutingTable, build_mc_packet
from spinngate.gateway import (
    ControlFrame,
    DisplayMode,
    Gateway,
    GatewayConfig,
    PayloadTooLong,
    decode_control_frame,
    encode_control_frame,
    seven_segment_digits,
)
from spinngate.rate import RateConfig, ValueOutOfRange, value_to_period


def run_ticks(gw, start, stop):
    sent = []
    for now in range(start, stop):
        sent += [(now, p) for p in gw.tick(now)]
    return sent


def test_ingest_one_hz():
    gw = Gateway()
    gw.ingest_sample(0, 0)
    assert gw.period == 1_000_000


def test_ingest_out_of_range_leaves_period():
    gw = Gateway()
    gw.ingest_sample(0, 0)
    with pytest.raises(ValueOutOfRange):
        gw.ingest_sample(300, 10)
    assert gw.period == 1_000_000
    assert gw.errors["range"] == 1


def test_tick_schedule():
    gw = Gateway(GatewayConfig(rate=RateConfig(tick_rate=1_000_000, f_min=1000, f_max=1_000_000)))
    gw.generator.set_period(10, 0)
    sent = run_ticks(gw, 0, 36)
    assert [t for t, _ in sent] == [10, 20, 30]
    assert all(p.key == 0 for _, p in sent)


def test_paused_gateway_is_silent():
    gw = Gateway()
    assert run_ticks(gw, 0, 5000) == []


def test_mid_train_change_waits_for_next_spike():
    gw = Gateway(GatewayConfig(rate=RateConfig(tick_rate=1000, f_min=1000, f_max=10_000)))
    gw.ingest_sample(0, 0)  # 1 Hz -> 1000 ticks
    sent = [t for t, _ in run_ticks(gw, 0, 1500)]
    gw.ingest_sample(255, 1500)  # 10 Hz -> 100 ticks
    sent += [t for t, _ in run_ticks(gw, 1500, 2350)]
    assert sent == [1000, 2000, 2100, 2200, 2300]


def test_experiment_tx_count_fast_path():
    gw = Gateway()
    gw.set_frequency(1000, 0)
    sent = []
    now = 0
    while True:
        if now == 5_000_000:
            gw.set_frequency(10_000, now)
        sent += gw.tick(now)
        nxt = gw.next_tx_tick()
        now = min(nxt, 5_000_000) if now < 5_000_000 else nxt
        if now >= 10_000_000:
            break
    assert len(sent) == 54


def test_rx_counts_key6():
    gw = Gateway()
    for n in range(54):
        gw.handle_rx_packet(build_mc_packet(6), 1000 * n)
    assert gw.counters[6] == 54


def test_first_rx_has_no_frequency():
    gw = Gateway()
    frames = gw.handle_rx_packet(build_mc_packet(6), 10)
    assert gw.counters[6] == 1
    assert gw.measured_frequency(6) is None
    assert frames == [ControlFrame.event_report(6, 10)]


def test_two_rx_100k_apart_is_10hz():
    gw = Gateway(GatewayConfig(detector_window=1))
    gw.handle_rx_packet(build_mc_packet(6), 0)
    gw.handle_rx_packet(build_mc_packet(6), 100_000)
    assert gw.measured_frequency(6) == 10_000


def test_rx_errors_never_reach_counters():
    gw = Gateway()
    gw.handle_rx_word(0x0000000600, 40, 0)
    gw.handle_rx_packet(build_mc_packet(0x1234), 0)
    assert gw.errors["parity"] == 1
    assert gw.errors["unroutable"] == 1
    assert sum(gw.counters.values()) == 0


def test_encode_examples():
    assert encode_control_frame(ControlFrame.set_value(258)) == bytes.fromhex("A5 01 02 01 02 00")
    assert encode_control_frame(ControlFrame.set_display_mode(DisplayMode.RX_COUNT)) == bytes.fromhex("A5 05 01 01 05")
    assert encode_control_frame(ControlFrame.query_counter(6)) == bytes.fromhex("A5 02 04 00 00 00 06 00")


def test_payload_too_long():
    with pytest.raises(PayloadTooLong):
        encode_control_frame(ControlFrame(0x01, bytes(256)))


def test_decode_resyncs_after_bad_checksum():
    bad = bytearray(encode_control_frame(ControlFrame.set_value(7)))
    bad[-1] ^= 0xFF
    good = encode_control_frame(ControlFrame.query_counter(6))
    frames, consumed, errors = decode_control_frame(bytes(bad) + good)
    assert frames == [ControlFrame.query_counter(6)]
    assert errors["ChecksumMismatch"] == 1
    assert consumed == len(bad) + len(good)


def test_decode_garbage():
    frames, consumed, errors = decode_control_frame(bytes(range(0x10, 0x60)))
    assert frames == [] and consumed == 0x50 and not errors


def test_decode_partial_frame_streaming():
    data = encode_control_frame(ControlFrame.event_report(6, 123456))
    frames, consumed, _ = decode_control_frame(data[:7], final=False)
    assert frames == [] and consumed == 0
    frames, _, errors = decode_control_frame(data[:7])
    assert errors["TruncatedFrame"] == 1


frame_strategy = st.one_of(
    st.integers(0, 0xFFFF).map(ControlFrame.set_value),
    st.integers(0, 2**32 - 1).map(ControlFrame.query_counter),
    st.tuples(st.integers(0, 2**32 - 1), st.integers(0, 2**64 - 1)).map(lambda a: ControlFrame.event_report(*a)),
    st.tuples(st.integers(0, 2**32 - 1), st.integers(0, 2**64 - 1)).map(lambda a: ControlFrame.counter_report(*a)),
    st.integers(0, 255).map(ControlFrame.set_display_mode),
)


@given(frame_strategy)
def test_frame_round_trip(frame):
    frames, consumed, errors = decode_control_frame(encode_control_frame(frame))
    assert frames == [frame] and not errors


@given(frame_strategy, st.data())
def test_single_byte_corruption_detected(frame, data):
    raw = bytearray(encode_control_frame(frame))
    pos = data.draw(st.integers(0, len(raw) - 1))
    flip = data.draw(st.integers(1, 255))
    raw[pos] ^= flip
    frames, _, _ = decode_control_frame(bytes(raw))
    assert frame not in frames


def test_seven_segment_digits():
    assert seven_segment_digits(0) == [0] * 7 + [0x3F]
    assert seven_segment_digits(54) == [0] * 6 + [0x6D, 0x66]
    assert seven_segment_digits(10**9) == [0x6F] * 8


def test_monitor_modes():
    gw = Gateway()
    gw.ingest_sample(42, 0)
    assert gw.monitor.displayed_value == 42
    gw.handle_pc_bytes(encode_control_frame(ControlFrame.set_display_mode(DisplayMode.RX_COUNT)))
    for n in range(3):
        gw.handle_rx_packet(build_mc_packet(6), n * 100_000)
    snap = gw.monitor.snapshot()
    assert snap["mode"] == "RX_COUNT"
    assert snap["displayed_value"] == 3
    assert snap["digits"] == seven_segment_digits(3)
    gw.handle_pc_bytes(encode_control_frame(ControlFrame.set_display_mode(DisplayMode.MEASURED_FREQ)))
    assert gw.monitor.displayed_value == 10_000


def test_pc_set_value_and_query():
    gw = Gateway()
    gw.handle_rx_packet(build_mc_packet(6), 0)
    gw.read_pc_output()
    stream = encode_control_frame(ControlFrame.set_value(255)) + encode_control_frame(ControlFrame.query_counter(6))
    # split mid-frame to exercise buffering
    gw.handle_pc_bytes(stream[:4], 0)
    gw.handle_pc_bytes(stream[4:], 0)
    assert gw.period == value_to_period(255, gw.config.rate)
    frames, _, _ = decode_control_frame(gw.read_pc_output())
    assert frames == [ControlFrame.counter_report(6, 1)]


def test_event_log(tmp_path):
    gw = Gateway()
    gw.generator.set_period(5, 0)
    run_ticks(gw, 0, 11)
    gw.handle_rx_packet(build_mc_packet(6), 12)
    path = tmp_path / "events.jsonl"
    gw.write_events(path)
    assert path.read_text().splitlines() == [
        '{"tick": 5, "dir": "tx", "key": 0, "counter": 1}',
        '{"tick": 10, "dir": "tx", "key": 0, "counter": 2}',
        '{"tick": 12, "dir": "rx", "key": 6, "counter": 1}',
    ]


def test_multi_address_routing():
    table = RoutingTable({0: 0x100, 1: 0x101}, {0x200: 7})
    gw = Gateway(GatewayConfig(routing=table, tx_address=1))
    gw.generator.set_period(3, 0)
    assert gw.tick(3)[0].key == 0x101
    gw.handle_rx_packet(build_mc_packet(0x200), 4)
    assert gw.counters[0x200] == 1
