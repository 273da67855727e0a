# %% [markdown]
# # The virtual SpiNN-3 network
#
# One external-device neuron projects onto one IF_curr_exp neuron with a
# static synapse (weight 40.9). With tau_m = 3 ms and tau_syn = 0.5 ms each
# input spike produces exactly one output spike two steps later.

# %%
import numpy as np

from spinngate.neuron import LifParams, LifState, experiment_network, run_network, step_lif
from spinngate.rate import generate_spike_train

params = LifParams()
state = LifState.rest(params)
for step, weight in enumerate([40.9, 0, 0, 0]):
    state, spiked = step_lif(state, weight, params)
    print(f"step {step}: v = {state.v[0]:8.3f} mV  spike = {bool(spiked[0])}")

# %% 1:1 relation over a frequency sweep
for period in (1_000_000, 100_000, 10_000, 1_000):
    stim = generate_spike_train(period, 0, 10_000_000)
    rec = run_network(experiment_network(), {0: stim}, 10_000)
    print(f"{1_000_000 // period:5d} Hz: in {len(stim):5d}  out {rec.spike_count('set_value'):5d}")

# %% The recorded membrane never shows a value at or above threshold
ticks, v = rec.membrane["set_value"]
print("max recorded v:", np.max(v), "mV")
