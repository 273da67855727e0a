"""FPGA-side gateway: sensor -> rate generator -> TX packets, RX packets ->
counters and measured frequencies, plus the PC control channel and the
seven-segment monitor registers.
"""

from __future__ import annotations

import json
import struct
from collections import Counter, deque
from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple, Optional

from .aer import (
    AerEvent,
    PacketError,
    ParityError,
    RoutingTable,
    SpinnPacket,
    UnroutableKey,
    build_mc_packet,
    experiment_routing,
    map_event_to_key,
    map_key_to_event,
    parse_packet,
)
from .rate import (
    NotEnoughSpikes,
    RateConfig,
    RateError,
    RateGenerator,
    ValueOutOfRange,
    estimate_period,
    frequency_to_period,
    period_to_frequency,
    period_to_value,
    value_to_period,
)

MAGIC = 0xA5


class FrameType(IntEnum):
    SET_VALUE = 0x01
    QUERY_COUNTER = 0x02
    EVENT_REPORT = 0x03
    COUNTER_REPORT = 0x04
    SET_DISPLAY_MODE = 0x05


PAYLOAD_SIZES = {
    FrameType.SET_VALUE: 2,
    FrameType.QUERY_COUNTER: 4,
    FrameType.EVENT_REPORT: 12,
    FrameType.COUNTER_REPORT: 12,
    FrameType.SET_DISPLAY_MODE: 1,
}


class PayloadTooLong(ValueError):
    pass


class DisplayMode(IntEnum):
    SET_VALUE = 0
    RX_COUNT = 1
    MEASURED_FREQ = 2
    ERRORS = 3


@dataclass(frozen=True)
class ControlFrame:
    frame_type: int
    payload: bytes = b""

    @classmethod
    def set_value(cls, value: int) -> "ControlFrame":
        return cls(FrameType.SET_VALUE, struct.pack(">H", value))

    @classmethod
    def query_counter(cls, key: int) -> "ControlFrame":
        return cls(FrameType.QUERY_COUNTER, struct.pack(">I", key))

    @classmethod
    def event_report(cls, key: int, tick: int) -> "ControlFrame":
        return cls(FrameType.EVENT_REPORT, struct.pack(">IQ", key, tick))

    @classmethod
    def counter_report(cls, key: int, count: int) -> "ControlFrame":
        return cls(FrameType.COUNTER_REPORT, struct.pack(">IQ", key, count))

    @classmethod
    def set_display_mode(cls, mode: int) -> "ControlFrame":
        return cls(FrameType.SET_DISPLAY_MODE, bytes([int(mode)]))

    def fields(self) -> tuple:
        """Decoded payload values for the known frame types."""
        fmt = {
            FrameType.SET_VALUE: ">H",
            FrameType.QUERY_COUNTER: ">I",
            FrameType.EVENT_REPORT: ">IQ",
            FrameType.COUNTER_REPORT: ">IQ",
            FrameType.SET_DISPLAY_MODE: ">B",
        }[FrameType(self.frame_type)]
        return struct.unpack(fmt, self.payload)


def _checksum(data) -> int:
    c = 0
    for b in data:
        c ^= b
    return c


def encode_control_frame(frame: ControlFrame) -> bytes:
    """``A5 type len payload... xor(type, len, payload)``."""
    if len(frame.payload) > 255:
        raise PayloadTooLong(f"payload of {len(frame.payload)} bytes")
    body = bytes([frame.frame_type, len(frame.payload)]) + bytes(frame.payload)
    return bytes([MAGIC]) + body + bytes([_checksum(body)])


class DecodeResult(NamedTuple):
    frames: list
    consumed: int
    errors: Counter


def decode_control_frame(stream: bytes, final: bool = True) -> DecodeResult:
    """Scan ``stream`` for control frames.

    Bad frames are counted by error name and scanning resumes at the next
    magic byte after the bad frame's magic. With ``final`` False a trailing
    partial frame is left unconsumed for the next call; otherwise it is
    counted as ``TruncatedFrame``.
    """
    frames = []
    errors: Counter = Counter()
    i = 0
    n = len(stream)
    while i < n:
        if stream[i] != MAGIC:
            i += 1
            continue
        if i + 3 > n or i + 4 + stream[i + 2] > n:
            if final:
                errors["TruncatedFrame"] += 1
                i += 1
                continue
            break
        ftype, length = stream[i + 1], stream[i + 2]
        end = i + 3 + length
        payload = bytes(stream[i + 3:end])
        if _checksum(stream[i + 1:end]) != stream[end]:
            errors["ChecksumMismatch"] += 1
            i += 1
            continue
        if ftype not in PAYLOAD_SIZES:
            errors["UnknownFrameType"] += 1
            i += 1
            continue
        if PAYLOAD_SIZES[ftype] != length:
            errors["LengthMismatch"] += 1
            i += 1
            continue
        frames.append(ControlFrame(FrameType(ftype), payload))
        i = end + 1
    return DecodeResult(frames, i, errors)


# gfedcba, active high
SEGMENT_CODES = (
    0x3F, 0x06, 0x5B, 0x4F, 0x66, 0x6D, 0x7D, 0x07,
    0x7F, 0x6F, 0x77, 0x7C, 0x39, 0x5E, 0x79, 0x71,
)
NUM_DIGITS = 8
DISPLAY_MAX = 10**NUM_DIGITS - 1


def seven_segment_digits(value: int) -> list[int]:
    """Eight digit codes, most significant first, leading zeros blanked."""
    value = min(max(int(value), 0), DISPLAY_MAX)
    text = str(value).rjust(NUM_DIGITS)
    return [0 if ch == " " else SEGMENT_CODES[int(ch)] for ch in text]


@dataclass
class MonitorRegisters:
    displayed_value: int = 0
    display_mode: DisplayMode = DisplayMode.SET_VALUE

    @property
    def digits(self) -> list[int]:
        return seven_segment_digits(self.displayed_value)

    def snapshot(self) -> dict:
        return {
            "displayed_value": self.displayed_value,
            "mode": self.display_mode.name,
            "digits": self.digits,
        }


@dataclass
class GatewayConfig:
    rate: RateConfig = field(default_factory=RateConfig)
    routing: RoutingTable = field(default_factory=experiment_routing)
    tx_address: int = 0
    detector_window: int = 2
    monitor_key: int = 6


class Gateway:
    """Sequential gateway state machine driven one tick at a time."""

    def __init__(self, config: Optional[GatewayConfig] = None):
        self.config = config or GatewayConfig()
        self.generator = RateGenerator()
        self.set_value: Optional[int] = None
        self.counters: Counter = Counter()
        self.tx_count = 0
        self.errors: Counter = Counter(
            {"parity": 0, "framing": 0, "unroutable": 0, "stalled": 0, "range": 0}
        )
        self.monitor = MonitorRegisters()
        self.pc_out = bytearray()
        self.events: list[dict] = []
        self._pc_in = bytearray()
        self._detector: dict[int, deque] = {}

    @property
    def period(self) -> Optional[int]:
        return self.generator.period

    # sensor side

    def ingest_sample(self, value: int, now: int = 0) -> None:
        try:
            period = value_to_period(value, self.config.rate)
        except ValueOutOfRange:
            self.errors["range"] += 1
            raise
        self.set_value = value
        self.generator.set_period(period, now)
        self._refresh_monitor()

    def set_frequency(self, mhz: int, now: int = 0) -> None:
        """Drive the rate generator with a frequency directly (experiment schedule)."""
        self.generator.set_period(frequency_to_period(mhz, self.config.rate.tick_rate), now)

    def next_tx_tick(self) -> Optional[int]:
        return self.generator.next_spike

    def tick(self, now: int) -> list[SpinnPacket]:
        """Emit the TX packet due at ``now``, if any."""
        if self.generator.next_spike is None or self.generator.next_spike > now:
            return []
        self.generator.fire()
        key = map_event_to_key(AerEvent(self.config.tx_address, now), self.config.routing)
        self.tx_count += 1
        self.events.append({"tick": now, "dir": "tx", "key": key, "counter": self.tx_count})
        return [build_mc_packet(key)]

    # link side

    def handle_rx_word(self, word: int, nbits: int, now: int) -> list[ControlFrame]:
        try:
            packet = parse_packet(word, nbits)
        except ParityError:
            self.errors["parity"] += 1
            return []
        except PacketError:
            self.errors["framing"] += 1
            return []
        return self.handle_rx_packet(packet, now)

    def handle_rx_packet(self, packet: SpinnPacket, now: int) -> list[ControlFrame]:
        try:
            map_key_to_event(packet.key, self.config.routing, now)
        except UnroutableKey:
            self.errors["unroutable"] += 1
            return []
        key = packet.key
        self.counters[key] += 1
        det = self._detector.setdefault(key, deque(maxlen=self.config.detector_window + 1))
        det.append(now)
        self.events.append({"tick": now, "dir": "rx", "key": key, "counter": self.counters[key]})
        frame = ControlFrame.event_report(key, now)
        self.pc_out += encode_control_frame(frame)
        self._refresh_monitor()
        return [frame]

    def measured_period(self, key: int) -> Optional[int]:
        det = self._detector.get(key)
        if det is None:
            return None
        try:
            return estimate_period(list(det), min(self.config.detector_window, len(det) - 1) or 1)
        except NotEnoughSpikes:
            return None

    def measured_frequency(self, key: int) -> Optional[int]:
        """Millihertz, or None before two packets with ``key`` arrived."""
        p = self.measured_period(key)
        return None if p is None else period_to_frequency(p, self.config.rate.tick_rate)

    def measured_value(self, key: int) -> Optional[int]:
        p = self.measured_period(key)
        return None if p is None else period_to_value(p, self.config.rate)

    def record_stall(self) -> None:
        self.errors["stalled"] += 1
        self._refresh_monitor()

    # PC side

    def handle_pc_bytes(self, data: bytes, now: int = 0) -> list[ControlFrame]:
        """Feed bytes from the PC; returns the frames that were acted on."""
        self._pc_in += data
        result = decode_control_frame(bytes(self._pc_in), final=False)
        del self._pc_in[: result.consumed]
        self.errors["pc_checksum"] += sum(result.errors.values())
        for frame in result.frames:
            self._handle_pc_frame(frame, now)
        return result.frames

    def _handle_pc_frame(self, frame: ControlFrame, now: int) -> None:
        ftype = FrameType(frame.frame_type)
        if ftype == FrameType.SET_VALUE:
            (value,) = frame.fields()
            try:
                self.ingest_sample(value, now)
            except RateError:
                pass
        elif ftype == FrameType.QUERY_COUNTER:
            (key,) = frame.fields()
            reply = ControlFrame.counter_report(key, self.counters[key])
            self.pc_out += encode_control_frame(reply)
        elif ftype == FrameType.SET_DISPLAY_MODE:
            (mode,) = frame.fields()
            if mode in DisplayMode._value2member_map_:
                self.monitor.display_mode = DisplayMode(mode)
                self._refresh_monitor()

    def read_pc_output(self) -> bytes:
        out = bytes(self.pc_out)
        self.pc_out.clear()
        return out

    def _refresh_monitor(self) -> None:
        mode = self.monitor.display_mode
        key = self.config.monitor_key
        if mode == DisplayMode.SET_VALUE:
            value = self.set_value or 0
        elif mode == DisplayMode.RX_COUNT:
            value = self.counters[key]
        elif mode == DisplayMode.MEASURED_FREQ:
            value = self.measured_frequency(key) or 0
        else:
            value = sum(self.errors.values())
        self.monitor.displayed_value = value

    def summary(self) -> dict:
        return {
            "tx_count": self.tx_count,
            "rx_count": sum(self.counters.values()),
            "counters": {str(k): v for k, v in sorted(self.counters.items())},
            "measured_frequencies": {
                str(k): self.measured_frequency(k) for k in sorted(self.counters)
            },
            "errors": dict(sorted(self.errors.items())),
        }

    def write_events(self, path) -> None:
        with open(path, "w") as fh:
            for ev in self.events:
                fh.write(json.dumps(ev, sort_keys=False) + "\n")
