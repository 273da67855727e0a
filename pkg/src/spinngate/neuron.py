"""Virtual SpiNN-3: current-based LIF populations on a fixed 1 ms grid.

Per neural step, for every IF_curr_exp neuron:

1. a refractory neuron counts down and holds ``v_reset``;
2. otherwise the membrane relaxes toward rest with the synaptic current
   held constant over the step (exact exponential solution);
3. synaptic currents decay;
4. threshold test, spike, reset;
5. ``v`` is recorded;
6. weights delivered during this step are added for the next one.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .aer import SpinnPacket, build_mc_packet
from .rate import MAX_FREQUENCY_MHZ, SpikeTrain

FIXED_POINT_BITS = 32


class NetworkConfigError(ValueError):
    pass


class UnknownKey(LookupError):
    pass


@dataclass(frozen=True)
class LifParams:
    """IF_curr_exp parameters. Times in ms, voltages in mV, c_m in nF, currents in nA."""

    tau_m: float = 3.0
    tau_syn_E: float = 0.5
    tau_syn_I: float = 0.5
    tau_refrac: float = 0.0
    v_rest: float = -65.0
    v_reset: float = -65.0
    v_thresh: float = -50.0
    c_m: float = 1.0
    i_offset: float = 0.0

    def __post_init__(self):
        if self.tau_m <= 0 or self.tau_syn_E <= 0 or self.tau_syn_I <= 0:
            raise NetworkConfigError("time constants must be positive")
        if self.tau_refrac < 0:
            raise NetworkConfigError("tau_refrac must be non-negative")
        if self.c_m <= 0:
            raise NetworkConfigError("c_m must be positive")
        if self.v_reset > self.v_thresh:
            raise NetworkConfigError("v_reset must not exceed v_thresh")


def fixed_point_decay(dt_ms: float, tau_ms: float) -> float:
    """``exp(-dt/tau)`` quantized to 32 fractional bits (exactly representable)."""
    return round(math.exp(-dt_ms / tau_ms) * (1 << FIXED_POINT_BITS)) / (
        1 << FIXED_POINT_BITS
    )


@dataclass(frozen=True)
class LifConstants:
    decay_m: float
    decay_syn_E: float
    decay_syn_I: float
    gain: float  # mV per nA held over one step
    refrac_steps: int

    @classmethod
    def from_params(cls, params: LifParams, dt_us: int) -> "LifConstants":
        dt_ms = dt_us / 1000.0
        decay_m = fixed_point_decay(dt_ms, params.tau_m)
        return cls(
            decay_m=decay_m,
            decay_syn_E=fixed_point_decay(dt_ms, params.tau_syn_E),
            decay_syn_I=fixed_point_decay(dt_ms, params.tau_syn_I),
            gain=(params.tau_m / params.c_m) * (1.0 - decay_m),
            refrac_steps=int(round(params.tau_refrac / dt_ms)),
        )


@dataclass
class LifState:
    """Membrane and synapse state; fields are scalars or equal-length arrays."""

    v: np.ndarray
    i_syn_E: np.ndarray
    i_syn_I: np.ndarray
    refrac_remaining: np.ndarray

    @classmethod
    def rest(cls, params: LifParams, size: int = 1) -> "LifState":
        return cls(
            v=np.full(size, params.v_rest),
            i_syn_E=np.zeros(size),
            i_syn_I=np.zeros(size),
            refrac_remaining=np.zeros(size, dtype=np.int64),
        )

    def copy(self) -> "LifState":
        return LifState(
            self.v.copy(), self.i_syn_E.copy(), self.i_syn_I.copy(),
            self.refrac_remaining.copy(),
        )


def step_lif(
    state: LifState,
    injected,
    params: LifParams,
    dt: int = 1000,
    injected_inh=0.0,
    constants: Optional[LifConstants] = None,
) -> tuple[LifState, np.ndarray]:
    """Advance one neural step of ``dt`` microseconds.

    ``injected`` is the excitatory weight (nA) delivered during this step; it
    enters the synaptic current at the end of the step. Returns the new state
    and a boolean spike mask.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    c = constants if constants is not None else LifConstants.from_params(params, dt)
    v = np.asarray(state.v, dtype=float)
    i_e = np.asarray(state.i_syn_E, dtype=float)
    i_i = np.asarray(state.i_syn_I, dtype=float)
    refrac = np.asarray(state.refrac_remaining, dtype=np.int64)

    in_refrac = refrac > 0
    current = i_e - i_i + params.i_offset
    v_free = params.v_rest + (v - params.v_rest) * c.decay_m + current * c.gain
    v = np.where(in_refrac, params.v_reset, v_free)
    refrac = np.where(in_refrac, refrac - 1, refrac)

    i_e = i_e * c.decay_syn_E
    i_i = i_i * c.decay_syn_I

    spiked = (~in_refrac) & (v >= params.v_thresh)
    v = np.where(spiked, params.v_reset, v)
    refrac = np.where(spiked, c.refrac_steps, refrac)

    i_e = i_e + injected
    i_i = i_i + injected_inh
    return LifState(v, i_e, i_i, refrac), spiked


@dataclass(frozen=True)
class PopulationSpec:
    """``params=None`` marks a spike-source population fed from outside."""

    name: str
    size: int = 1
    params: Optional[LifParams] = None
    record_v: bool = True


@dataclass(frozen=True)
class ProjectionSpec:
    """One-to-one static projection."""

    source: str
    target: str
    weight: float = 40.9
    delay: float = 0.0
    kind: str = "static"


@dataclass
class NetworkConfig:
    populations: list[PopulationSpec]
    projections: list[ProjectionSpec] = field(default_factory=list)
    inputs: dict[int, tuple[str, int]] = field(default_factory=dict)
    live_output: dict[str, dict[int, int]] = field(default_factory=dict)
    dt: int = 1000
    time_scale_factor: float = 1.0
    tick_rate: int = 1_000_000

    def __post_init__(self):
        names = [p.name for p in self.populations]
        if len(set(names)) != len(names):
            raise NetworkConfigError("population names must be unique")
        pops = {p.name: p for p in self.populations}
        if self.dt <= 0:
            raise NetworkConfigError("dt must be positive")
        if (self.dt * self.tick_rate) % 1_000_000:
            raise NetworkConfigError("dt must be a whole number of ticks")
        for proj in self.projections:
            for end in (proj.source, proj.target):
                if end not in pops:
                    raise NetworkConfigError(f"projection endpoint {end!r} not defined")
            if pops[proj.target].params is None:
                raise NetworkConfigError(f"projection target {proj.target!r} is not a neuron population")
            if pops[proj.source].size != pops[proj.target].size:
                raise NetworkConfigError("one-to-one projection needs equal sizes")
            if proj.kind != "static":
                raise NetworkConfigError(f"unsupported synapse kind {proj.kind!r}")
            if proj.delay < 0:
                raise NetworkConfigError("delay must be non-negative")
        for key, (pop, idx) in self.inputs.items():
            if pop not in pops or not 0 <= idx < pops[pop].size:
                raise NetworkConfigError(f"input key {key:#x} targets unknown neuron {pop}:{idx}")
        seen = set()
        for pop, keys in self.live_output.items():
            if pop not in pops:
                raise NetworkConfigError(f"live output population {pop!r} not defined")
            for idx, key in keys.items():
                if not 0 <= idx < pops[pop].size:
                    raise NetworkConfigError(f"live output neuron {pop}:{idx} out of range")
                if key in seen:
                    raise NetworkConfigError(f"live output key {key:#x} used twice")
                seen.add(key)

    @property
    def step_ticks(self) -> int:
        return self.dt * self.tick_rate // 1_000_000


def experiment_network(**overrides) -> NetworkConfig:
    """External device neuron 0 (key 0) drives one set-value neuron answering on key 6."""
    params = LifParams(**{k: v for k, v in overrides.items() if k in LifParams.__dataclass_fields__})
    weight = overrides.get("weight", 40.9)
    delay = overrides.get("delay", 0.0)
    return NetworkConfig(
        populations=[
            PopulationSpec("external_device", 1, None, record_v=False),
            PopulationSpec("set_value", 1, params),
        ],
        projections=[ProjectionSpec("external_device", "set_value", weight, delay)],
        inputs={0: ("external_device", 0)},
        live_output={"set_value": {0: 6}},
    )


@dataclass
class Recordings:
    raster: list = field(default_factory=list)  # (tick, population, neuron)
    membrane: dict = field(default_factory=dict)  # population -> (ticks, v[steps, size])
    output_packets: list = field(default_factory=list)  # (tick, SpinnPacket)

    def spike_count(self, population: Optional[str] = None) -> int:
        return sum(1 for _, p, _ in self.raster if population is None or p == population)

    def spike_ticks(self, population: str, neuron: int = 0) -> list[int]:
        return [t for t, p, n in self.raster if p == population and n == neuron]

    def write_raster(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["tick", "population", "neuron"])
            w.writerows(self.raster)

    def write_membrane(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["tick", "population", "neuron", "v"])
            for pop, (ticks, v) in self.membrane.items():
                for row, tick in enumerate(ticks):
                    for n in range(v.shape[1]):
                        w.writerow([tick, pop, n, f"{v[row, n]:.6f}"])


class VirtualSpinn:
    """A running network instance advanced one neural step at a time.

    Step ``n`` happens at tick ``n * step_ticks``. A packet that arrives at
    tick ``t`` belongs to step ``ceil(t / step_ticks)`` and takes effect no
    earlier than the step after.
    """

    def __init__(self, config: NetworkConfig):
        self.config = config
        self.step_ticks = config.step_ticks
        self.step_index = 0
        self.unknown_keys = 0
        self.bad_packets = 0
        self.packets_received = 0
        self._pops = {p.name: p for p in config.populations}
        self._lif = [p for p in config.populations if p.params is not None]
        self._state = {p.name: LifState.rest(p.params, p.size) for p in self._lif}
        self._const = {
            p.name: LifConstants.from_params(p.params, config.dt) for p in self._lif
        }
        self._incoming = defaultdict(list)
        for proj in config.projections:
            self._incoming[proj.source].append(proj)
        # step index -> target population -> weight vector
        self._pending: dict[int, dict[str, np.ndarray]] = defaultdict(dict)
        self._source_spikes: dict[int, list[tuple[str, int]]] = defaultdict(list)
        self._out_keys = config.live_output
        self.recordings = Recordings()
        self._mem_ticks = {p.name: [] for p in self._lif if p.record_v}
        self._mem_v = {p.name: [] for p in self._lif if p.record_v}

    def state(self, population: str) -> LifState:
        return self._state[population]

    def _schedule(self, source: str, neuron: int, arrival_step: int) -> None:
        for proj in self._incoming.get(source, ()):
            delay_steps = max(int(round(proj.delay * 1000 / self.config.dt)), 1)
            add_step = arrival_step + delay_steps - 1
            if add_step <= self.step_index:
                self._state[proj.target].i_syn_E[neuron] += proj.weight
                continue
            size = self._pops[proj.target].size
            vec = self._pending[add_step].setdefault(proj.target, np.zeros(size))
            vec[neuron] += proj.weight

    def deliver_packet(self, packet: SpinnPacket, at: int) -> bool:
        """Inject a spike from outside. Returns False for an unknown key."""
        target = self.config.inputs.get(packet.key)
        if target is None:
            self.unknown_keys += 1
            return False
        self.packets_received += 1
        pop, neuron = target
        arrival_step = -(-at // self.step_ticks)
        if arrival_step <= self.step_index:
            arrival_step = self.step_index
        if self._pops[pop].params is None:
            self.recordings.raster.append((at, pop, neuron))
        self._schedule(pop, neuron, arrival_step)
        return True

    def next_step_tick(self) -> int:
        return (self.step_index + 1) * self.step_ticks

    def step(self) -> list[tuple[int, SpinnPacket]]:
        """Run one neural step; return live-output packets it produced."""
        self.step_index += 1
        n = self.step_index
        tick = n * self.step_ticks
        injections = self._pending.pop(n, {})
        out = []
        spiking = []
        for spec in self._lif:
            name = spec.name
            inj = injections.get(name, 0.0)
            new, spiked = step_lif(
                self._state[name], inj, spec.params, self.config.dt,
                constants=self._const[name],
            )
            self._state[name] = new
            if spec.record_v:
                self._mem_ticks[name].append(tick)
                self._mem_v[name].append(new.v.copy())
            for idx in np.flatnonzero(spiked):
                spiking.append((name, int(idx)))
        for name, idx in spiking:
            self.recordings.raster.append((tick, name, idx))
            key = self._out_keys.get(name, {}).get(idx)
            if key is not None:
                pkt = build_mc_packet(key)
                out.append((tick, pkt))
                self.recordings.output_packets.append((tick, pkt))
            # a spike at step n is delivered like an arrival in step n
            self._schedule(name, idx, n)
        return out

    def advance_to(self, tick: int) -> list[tuple[int, SpinnPacket]]:
        out = []
        while self.next_step_tick() <= tick:
            out.extend(self.step())
        return out

    def collect_live_output(self, since: int = 0) -> list[SpinnPacket]:
        return [p for t, p in self.recordings.output_packets if t >= since]

    def finish(self) -> Recordings:
        rec = self.recordings
        for name in self._mem_ticks:
            v = self._mem_v[name]
            size = self._pops[name].size
            rec.membrane[name] = (
                list(self._mem_ticks[name]),
                np.array(v).reshape(len(v), size) if v else np.zeros((0, size)),
            )
        return rec


def run_network(
    config: NetworkConfig,
    stimulus: Mapping[int, SpikeTrain],
    duration: int,
) -> Recordings:
    """Drive ``config`` with spike trains keyed by routing key for ``duration`` ms.

    Steps 1 .. duration/dt are simulated; stimulus spikes must fall inside
    ``[0, duration)`` ms.
    """
    if (duration * 1000) % config.dt:
        raise ValueError("duration must be a multiple of dt")
    end_tick = duration * config.tick_rate // 1000
    max_freq_ticks = config.tick_rate * 1000 // MAX_FREQUENCY_MHZ
    events = []
    for key, train in stimulus.items():
        ticks = train.ticks if isinstance(train, SpikeTrain) else np.asarray(train)
        if len(ticks) > 1 and np.min(np.diff(ticks)) < max_freq_ticks:
            raise ValueError(f"stimulus on key {key:#x} exceeds 1 kHz")
        events.extend((int(t), key) for t in ticks if t < end_tick)
    events.sort()
    net = VirtualSpinn(config)
    steps = duration * 1000 // config.dt
    i = 0
    for _ in range(steps):
        boundary = net.next_step_tick()
        while i < len(events) and events[i][0] <= boundary:
            t, key = events[i]
            net.deliver_packet(build_mc_packet(key), t)
            i += 1
        net.step()
    return net.finish()


def write_recordings(rec: Recordings, raster_path, membrane_path) -> None:
    rec.write_raster(raster_path)
    rec.write_membrane(membrane_path)
