"""Closed-loop experiment: gateway -> link -> virtual SpiNN-3 -> link -> gateway.

Per tick the driver runs, in this order: gateway TX, link A->B, the neural
step (on step boundaries), link B->A, gateway RX. Idle stretches are
skipped; the result is identical to visiting every tick.
"""

from __future__ import annotations

import configparser
import json
import re
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from .aer import PacketError, RoutingTable, parse_packet
from .gateway import Gateway, GatewayConfig
from .link import DEFAULT_ACK_TIMEOUT, NORMAL, AckPolicy, Link, write_wire_trace
from .neuron import (
    LifParams,
    NetworkConfig,
    NetworkConfigError,
    PopulationSpec,
    ProjectionSpec,
    Recordings,
    VirtualSpinn,
    experiment_network,
)
from .rate import MAX_FREQUENCY_MHZ, RateConfig, RateError

DRAIN_LIMIT_TICKS = 1_000_000


class ConfigError(ValueError):
    def __init__(self, message, section=None, key=None, line=None):
        self.section, self.key, self.line = section, key, line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if section is not None:
            where.append(f"[{section}]" + (f" {key}" if key else ""))
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


@dataclass
class ExperimentConfig:
    schedule: list[tuple[int, int]] = field(
        default_factory=lambda: [(0, 1_000), (5_000, 10_000)]
    )  # (start ms, frequency mHz)
    duration: int = 10_000  # ms
    rate: RateConfig = field(default_factory=RateConfig)
    network: Optional[NetworkConfig] = None
    gateway: GatewayConfig = field(default_factory=GatewayConfig)
    ack_policy: AckPolicy = NORMAL
    ack_timeout: int = DEFAULT_ACK_TIMEOUT
    realtime_pacing: bool = False
    samples: list[tuple[int, int]] = field(default_factory=list)  # (start ms, sensor value)

    def __post_init__(self):
        if self.network is None:
            self.network = experiment_network()
        validate_schedule(self.schedule)
        if self.duration < 0:
            raise ConfigError("duration must be non-negative", "experiment", "duration_ms")
        if (self.duration * 1000) % self.network.dt:
            raise ConfigError("duration must be a multiple of dt", "experiment", "duration_ms")
        if self.network.tick_rate != self.rate.tick_rate:
            raise ConfigError("network and rate tick rates differ", "rate", "tick_rate")


def validate_schedule(schedule) -> None:
    if not schedule:
        return
    if schedule[0][0] != 0:
        raise ConfigError("schedule must start at 0 ms", "schedule")
    starts = [s for s, _ in schedule]
    if any(b <= a for a, b in zip(starts, starts[1:])):
        raise ConfigError("schedule starts must be strictly increasing", "schedule")
    for start, mhz in schedule:
        if mhz <= 0:
            raise ConfigError(f"frequency at {start} ms must be positive", "schedule", str(start))
        if mhz > MAX_FREQUENCY_MHZ:
            raise ConfigError(
                f"frequency {mhz} mHz at {start} ms exceeds the 1 kHz cap "
                f"({MAX_FREQUENCY_MHZ} mHz); the 1 ms neural step cannot follow it",
                "schedule",
                str(start),
            )


@dataclass
class ExperimentResult:
    gateway: Gateway
    network: VirtualSpinn
    recordings: Recordings
    wire_trace: list
    links: dict

    def summary(self) -> dict:
        s = self.gateway.summary()
        s["network_spikes"] = {
            p.name: self.recordings.spike_count(p.name)
            for p in self.network.config.populations
            if p.params is not None
        }
        s["link"] = {
            name: {
                "symbols_sent": link.sender.symbols_sent,
                "packets_sent": link.sender.packets_sent,
                "stalled": link.sender.stalled,
                "stall_symbol": link.sender.symbols_sent if link.sender.stalled else None,
                "framing_errors": link.receiver.framing_errors,
            }
            for name, link in self.links.items()
        }
        s["unknown_keys"] = self.network.unknown_keys
        s["dropped_packets"] = self.network.bad_packets
        return s

    def write(self, outdir) -> None:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        self.recordings.write_raster(out / "raster.csv")
        self.recordings.write_membrane(out / "membrane.csv")
        self.gateway.write_events(out / "events.jsonl")
        write_wire_trace(out / "wire_trace.csv", self.wire_trace)
        with open(out / "summary.json", "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def run_experiment(config: Optional[ExperimentConfig] = None) -> ExperimentResult:
    cfg = config or ExperimentConfig()
    tick_rate = cfg.rate.tick_rate
    gateway = Gateway(cfg.gateway)
    net = VirtualSpinn(cfg.network)
    trace: list = []
    a2b = Link("tx", cfg.ack_policy, cfg.ack_timeout, trace)
    b2a = Link("rx", NORMAL, cfg.ack_timeout, trace)
    end = cfg.duration * tick_rate // 1000
    changes = sorted(
        [(start * tick_rate // 1000, 0, mhz) for start, mhz in cfg.schedule]
        + [(start * tick_rate // 1000, 1, value) for start, value in cfg.samples]
    )
    ci = 0
    stalled_seen = False
    wall0 = time.monotonic()

    now = 0
    while True:
        while ci < len(changes) and changes[ci][0] <= now and now < end:
            _, is_sample, x = changes[ci]
            if is_sample:
                gateway.ingest_sample(x, now)
            else:
                gateway.set_frequency(x, now)
            ci += 1
        if now < end:
            for pkt in gateway.tick(now):
                a2b.send(pkt)
        for word, nbits in a2b.step(now):
            packet = _parse_or_none(word, nbits)
            if packet is None:
                net.bad_packets += 1
            else:
                net.deliver_packet(packet, now)
        if now <= end and now == net.next_step_tick():
            for _, pkt in net.step():
                b2a.send(pkt)
        for word, nbits in b2a.step(now):
            gateway.handle_rx_word(word, nbits, now)
        if a2b.sender.stalled and not stalled_seen:
            stalled_seen = True
            gateway.record_stall()

        nxt = _next_tick(now, end, changes, ci, gateway, net, a2b, b2a)
        if nxt is None:
            break
        if cfg.realtime_pacing:
            _pace(wall0, nxt, tick_rate, cfg.network.time_scale_factor)
        now = nxt

    gateway.errors["framing"] += a2b.receiver.framing_errors + b2a.receiver.framing_errors
    return ExperimentResult(gateway, net, net.finish(), trace, {"tx": a2b, "rx": b2a})


def _parse_or_none(word, nbits):
    try:
        return parse_packet(word, nbits)
    except PacketError:
        return None


def _next_tick(now, end, changes, ci, gateway, net, a2b, b2a) -> Optional[int]:
    cands = []
    if ci < len(changes) and changes[ci][0] < end:
        cands.append(max(changes[ci][0], now + 1))
    tx = gateway.next_tx_tick()
    if tx is not None and tx < end:
        cands.append(max(tx, now + 1))
    step = net.next_step_tick()
    if step <= end:
        cands.append(step)
    for link in (a2b, b2a):
        t = link.next_event_tick(now)
        if t is not None:
            cands.append(t)
    if not cands:
        return None
    nxt = min(cands)
    if nxt > end + DRAIN_LIMIT_TICKS:
        return None
    return nxt


def _pace(wall0, tick, tick_rate, scale) -> None:
    target = wall0 + tick / tick_rate * scale
    delay = target - time.monotonic()
    if delay > 0:
        time.sleep(delay)


# configuration files

_PAIR = re.compile(r"^\s*(\d+)\s*:\s*(\d+)\s*$")


def _find_line(text: str, section: str, key: Optional[str]) -> Optional[int]:
    current = None
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip()
            if key is None and current == section:
                return n
            continue
        if current == section and key is not None:
            name = re.split(r"[=:]", s, maxsplit=1)[0].strip()
            if name == key:
                return n
    return None


def _int(sec, key, default=None):
    if key not in sec:
        if default is None:
            raise ConfigError("missing value", sec.name, key)
        return default
    try:
        return int(sec[key].replace("_", ""), 0)
    except ValueError:
        raise ConfigError(f"expected an integer, got {sec[key]!r}", sec.name, key) from None


def _float(sec, key, default):
    if key not in sec:
        return default
    try:
        return float(sec[key])
    except ValueError:
        raise ConfigError(f"expected a number, got {sec[key]!r}", sec.name, key) from None


def _pairs(sec, key) -> dict[int, int]:
    out = {}
    raw = sec.get(key, "").strip()
    if not raw:
        return out
    for item in raw.split(","):
        m = _PAIR.match(item)
        if not m:
            raise ConfigError(f"expected 'a:b' pairs, got {item.strip()!r}", sec.name, key)
        out[int(m.group(1), 0)] = int(m.group(2), 0)
    return out


def parse_config(text: str) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from INI text.

    Errors are raised as :class:`ConfigError` carrying the section, key and
    line number of the offending entry.
    """
    try:
        return _parse_config(text)
    except ConfigError as exc:
        if exc.line is None and exc.section is not None:
            line = _find_line(text, exc.section, exc.key)
            raise ConfigError(str(exc).split(": ", 1)[-1], exc.section, exc.key, line) from None
        raise


def _parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0], line=getattr(exc, "lineno", None)) from None

    exp_sec = cp["experiment"] if cp.has_section("experiment") else cp[cp.default_section]
    duration = _int(exp_sec, "duration_ms", 10_000)
    realtime = exp_sec.getboolean("realtime", fallback=False)
    scale = _float(exp_sec, "time_scale_factor", 1.0)

    schedule = []
    if cp.has_section("schedule"):
        sec = cp["schedule"]
        for key in sec:
            try:
                start = int(key)
            except ValueError:
                raise ConfigError("schedule keys are start times in ms", "schedule", key) from None
            schedule.append((start, _int(sec, key)))
    else:
        schedule = [(0, 1_000), (5_000, 10_000)]
    validate_schedule(schedule)

    rsec = cp["rate"] if cp.has_section("rate") else cp[cp.default_section]
    try:
        rate = RateConfig(
            tick_rate=_int(rsec, "tick_rate", 1_000_000),
            f_min=_int(rsec, "f_min_mhz", 1_000),
            f_max=_int(rsec, "f_max_mhz", 10_000),
            v_min=_int(rsec, "v_min", 0),
            v_max=_int(rsec, "v_max", 255),
        )
    except RateError as exc:
        raise ConfigError(str(exc), "rate") from None
    window = _int(rsec, "detector_window", 2)
    if window < 1:
        raise ConfigError("detector_window must be at least 1", "rate", "detector_window")

    gsec = cp["routing"] if cp.has_section("routing") else None
    if gsec is not None:
        try:
            routing = RoutingTable.from_maps(_pairs(gsec, "forward"), _pairs(gsec, "reverse"))
        except ValueError as exc:
            raise ConfigError(str(exc), "routing") from None
        tx_address = _int(gsec, "tx_address", 0)
        monitor_key = _int(gsec, "monitor_key", 6)
    else:
        routing = RoutingTable({0: 0}, {6: 6})
        tx_address, monitor_key = 0, 6

    lsec = cp["link"] if cp.has_section("link") else cp[cp.default_section]
    try:
        policy = AckPolicy.parse(lsec.get("ack_policy", "normal"))
    except ValueError as exc:
        raise ConfigError(str(exc), "link", "ack_policy") from None
    ack_timeout = _int(lsec, "ack_timeout", DEFAULT_ACK_TIMEOUT)

    network = _parse_network(cp, rate.tick_rate, scale)
    try:
        return ExperimentConfig(
            schedule=schedule,
            duration=duration,
            rate=rate,
            network=network,
            gateway=GatewayConfig(rate, routing, tx_address, window, monitor_key),
            ack_policy=policy,
            ack_timeout=ack_timeout,
            realtime_pacing=realtime,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc), "experiment") from None


_LIF_FIELDS = [f for f in LifParams.__dataclass_fields__]


def _parse_network(cp, tick_rate, scale) -> NetworkConfig:
    pops, projs, live, inputs = [], [], {}, {}
    for name in cp.sections():
        sec = cp[name]
        if name.startswith("population:"):
            pname = name.split(":", 1)[1].strip()
            model = sec.get("model", "IF_curr_exp").strip()
            size = _int(sec, "size", 1)
            if model == "external":
                pops.append(PopulationSpec(pname, size, None, record_v=False))
            elif model == "IF_curr_exp":
                kwargs = {f: _float(sec, f, getattr(LifParams(), f)) for f in _LIF_FIELDS}
                try:
                    params = LifParams(**kwargs)
                except ValueError as exc:
                    raise ConfigError(str(exc), name) from None
                record = sec.getboolean("record_v", fallback=True)
                pops.append(PopulationSpec(pname, size, params, record))
            else:
                raise ConfigError(f"unknown model {model!r}", name, "model")
            keys = sec.get("live_output", "").strip()
            if keys:
                live[pname] = _pairs(sec, "live_output")
            for nrn, key in _pairs(sec, "input_keys").items():
                inputs[key] = (pname, nrn)
        elif name.startswith("projection:"):
            ends = name.split(":", 1)[1]
            if "->" not in ends:
                raise ConfigError("projection sections are named 'projection:src->dst'", name)
            src, dst = (s.strip() for s in ends.split("->", 1))
            projs.append(
                ProjectionSpec(src, dst, _float(sec, "weight", 40.9), _float(sec, "delay", 0.0),
                               sec.get("kind", "static").strip())
            )
    dt = 1000
    if cp.has_section("experiment"):
        dt = _int(cp["experiment"], "dt_us", 1000)
    if not pops:
        base = experiment_network()
        pops, projs, inputs, live = base.populations, base.projections, base.inputs, base.live_output
    try:
        return NetworkConfig(pops, projs, inputs, live, dt, scale, tick_rate)
    except NetworkConfigError as exc:
        raise ConfigError(str(exc), "network") from None


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text()
    return parse_config(text)


def default_config_text() -> str:
    return resources.files("spinngate").joinpath("data/experiment.ini").read_text()


def default_config() -> ExperimentConfig:
    return parse_config(default_config_text())
