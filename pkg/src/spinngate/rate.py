"""Integer-only rate coding.

Frequencies are carried as integer millihertz, times as integer ticks.
Every division rounds half up; no floating point appears on any path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

MAX_FREQUENCY_MHZ = 1_000_000  # 1 kHz


class RateError(ValueError):
    pass


class ValueOutOfRange(RateError):
    pass


class FrequencyCapExceeded(RateError):
    pass


class ZeroPeriod(RateError):
    pass


class NotEnoughSpikes(RateError):
    pass


def div_round_half_up(num: int, den: int) -> int:
    """``num / den`` rounded to the nearest integer, ties upward. ``den > 0``."""
    if den <= 0:
        raise ZeroDivisionError("denominator must be positive")
    return (2 * num + den) // (2 * den)


@dataclass(frozen=True)
class RateConfig:
    """Linear map between sensor values and spike frequencies.

    Parameters
    ----------
    tick_rate : int
        Virtual clock ticks per second.
    f_min, f_max : int
        Frequencies in millihertz assigned to ``v_min`` and ``v_max``.
    v_min, v_max : int
        Sensor range, inclusive.
    """

    tick_rate: int = 1_000_000
    f_min: int = 1_000
    f_max: int = 10_000
    v_min: int = 0
    v_max: int = 255

    def __post_init__(self):
        for name in ("tick_rate", "f_min", "f_max", "v_min", "v_max"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise RateError(f"{name} must be an integer, got {value!r}")
        if self.tick_rate <= 0:
            raise RateError("tick_rate must be positive")
        if not 0 < self.f_min <= self.f_max:
            raise RateError("need 0 < f_min <= f_max")
        if self.f_max > MAX_FREQUENCY_MHZ:
            raise FrequencyCapExceeded(
                f"f_max {self.f_max} mHz is above the 1 kHz cap"
            )
        if not self.v_min < self.v_max:
            raise RateError("need v_min < v_max")


def _check_value(value: int, cfg: RateConfig) -> None:
    if not cfg.v_min <= value <= cfg.v_max:
        raise ValueOutOfRange(f"{value} outside [{cfg.v_min}, {cfg.v_max}]")


def _frequency_fraction(value: int, cfg: RateConfig) -> tuple[int, int]:
    # f(value) as num/den millihertz
    span = cfg.v_max - cfg.v_min
    num = cfg.f_min * span + (value - cfg.v_min) * (cfg.f_max - cfg.f_min)
    return num, span


def value_to_frequency(value: int, cfg: RateConfig) -> int:
    """Frequency in millihertz for a sensor value, rounded half up."""
    _check_value(value, cfg)
    num, den = _frequency_fraction(value, cfg)
    if num > MAX_FREQUENCY_MHZ * den:
        raise FrequencyCapExceeded(f"value {value} maps above 1 kHz")
    return div_round_half_up(num, den)


def value_to_period(value: int, cfg: RateConfig) -> int:
    """Spike period in ticks for a sensor value.

    The period is rounded once, from the exact rational frequency.
    """
    _check_value(value, cfg)
    num, den = _frequency_fraction(value, cfg)
    if num > MAX_FREQUENCY_MHZ * den:
        raise FrequencyCapExceeded(f"value {value} maps above 1 kHz")
    return div_round_half_up(1000 * cfg.tick_rate * den, num)


def frequency_to_period(mhz: int, tick_rate: int = 1_000_000) -> int:
    if mhz <= 0:
        raise RateError("frequency must be positive")
    if mhz > MAX_FREQUENCY_MHZ:
        raise FrequencyCapExceeded(f"{mhz} mHz is above the 1 kHz cap")
    return div_round_half_up(1000 * tick_rate, mhz)


def period_to_frequency(period: int, tick_rate: int = 1_000_000) -> int:
    if period < 1:
        raise ZeroPeriod("period must be at least one tick")
    return div_round_half_up(1000 * tick_rate, period)


def period_to_value(period: int, cfg: RateConfig) -> int:
    """Sensor value whose frequency matches ``period``, clamped to the range."""
    if period < 1:
        raise ZeroPeriod("period must be at least one tick")
    df = cfg.f_max - cfg.f_min
    if df == 0:
        return cfg.v_min
    # value - v_min = (1000*T - f_min*P) * span / (P * df)
    num = (1000 * cfg.tick_rate - cfg.f_min * period) * (cfg.v_max - cfg.v_min)
    value = cfg.v_min + div_round_half_up(num, period * df)
    return min(max(value, cfg.v_min), cfg.v_max)


class SpikeTrain:
    """Strictly increasing spike ticks."""

    def __init__(self, ticks: Iterable[int] = ()):
        arr = np.asarray(list(ticks) if not isinstance(ticks, np.ndarray) else ticks,
                         dtype=np.int64)
        if arr.ndim != 1:
            raise ValueError("spike ticks must be one-dimensional")
        if arr.size and (arr[0] < 0 or np.any(np.diff(arr) <= 0)):
            raise ValueError("spike ticks must be non-negative and strictly increasing")
        self.ticks = arr

    def __len__(self):
        return int(self.ticks.size)

    def __iter__(self):
        return (int(t) for t in self.ticks)

    def __getitem__(self, i):
        return self.ticks[i]

    def __eq__(self, other):
        if isinstance(other, SpikeTrain):
            return np.array_equal(self.ticks, other.ticks)
        return NotImplemented

    def __repr__(self):
        return f"SpikeTrain({self.ticks.tolist()!r})"

    def intervals(self) -> np.ndarray:
        return np.diff(self.ticks)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.writelines(f"{t}\n" for t in self.ticks.tolist())


def generate_spike_train(period: int, start: int, duration: int) -> SpikeTrain:
    """Spikes at ``start + k*period`` for k >= 1 inside ``[start, start+duration)``."""
    if period < 1:
        raise ZeroPeriod("period must be at least one tick")
    if duration <= 0:
        return SpikeTrain()
    count = (duration - 1) // period
    return SpikeTrain(start + period * np.arange(1, count + 1, dtype=np.int64))


class RateGenerator:
    """Spike scheduler for one output address.

    A new period never restarts the running countdown: the spike already
    scheduled is emitted on time and later gaps use the new period.
    """

    def __init__(self):
        self.period: Optional[int] = None
        self.next_spike: Optional[int] = None
        self._pending_period: Optional[int] = None

    @property
    def paused(self) -> bool:
        return self.next_spike is None

    def set_period(self, period: int, now: int) -> None:
        if period < 1:
            raise ZeroPeriod("period must be at least one tick")
        if self.next_spike is None:
            self.period = period
            self.next_spike = now + period
        else:
            self._pending_period = period

    def pause(self) -> None:
        self.period = self.next_spike = self._pending_period = None

    def fire(self) -> int:
        """Consume the scheduled spike and return its tick."""
        tick = self.next_spike
        if tick is None:
            raise RuntimeError("generator is paused")
        if self._pending_period is not None:
            self.period, self._pending_period = self._pending_period, None
        self.next_spike = tick + self.period
        return tick


def schedule_spike_train(
    segments: Sequence[tuple[int, int]], duration: int
) -> SpikeTrain:
    """Spike train for a piecewise-constant rate schedule.

    ``segments`` holds ``(start_tick, period)`` pairs in increasing order;
    period changes follow :class:`RateGenerator` semantics and spikes stop
    at ``duration`` (exclusive).
    """
    gen = RateGenerator()
    spikes = []
    order = sorted(segments)
    i = 0
    while True:
        change = order[i][0] if i < len(order) else None
        nxt = gen.next_spike
        if change is not None and (nxt is None or change <= nxt):
            gen.set_period(order[i][1], change)
            i += 1
            continue
        if nxt is None or nxt >= duration:
            break
        spikes.append(gen.fire())
    return SpikeTrain(spikes)


def estimate_period(train, k: int = 1) -> int:
    """Mean of the last ``k`` inter-spike intervals, rounded half up."""
    if k < 1:
        raise ValueError("window must hold at least one interval")
    ticks = train.ticks if isinstance(train, SpikeTrain) else list(train)
    if len(ticks) < k + 1:
        raise NotEnoughSpikes(f"need {k + 1} spikes, have {len(ticks)}")
    return div_round_half_up(int(ticks[-1]) - int(ticks[-1 - k]), k)
