# %% [markdown]
# # Integer rate coding
#
# Sensor values map linearly to frequencies in millihertz, frequencies to
# periods in clock ticks. Everything is integer arithmetic with
# round-half-up, and nothing above 1 kHz is ever produced.

# %%
from spinngate.rate import (
    RateConfig,
    estimate_period,
    generate_spike_train,
    period_to_value,
    schedule_spike_train,
    value_to_frequency,
    value_to_period,
)

cfg = RateConfig(tick_rate=1_000_000, f_min=1_000, f_max=10_000, v_min=0, v_max=255)
for value in (0, 64, 128, 255):
    period = value_to_period(value, cfg)
    print(f"value {value:3d}: {value_to_frequency(value, cfg):6d} mHz, period {period:7d} ticks,"
          f" decoded {period_to_value(period, cfg)}")

# %% Spike trains start one period after the window opens
print(generate_spike_train(period=10, start=0, duration=35))

# %% The 1 Hz -> 10 Hz schedule: the pending 1 Hz spike at 5 s still fires
train = schedule_spike_train([(0, 1_000_000), (5_000_000, 100_000)], 10_000_000)
print(len(train), "spikes; first six:", train.ticks[:6].tolist())

# %% Frequency detection from the last intervals
print("estimated period:", estimate_period(train, k=4))
