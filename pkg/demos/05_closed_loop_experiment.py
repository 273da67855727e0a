# %% [markdown]
# # Closed loop: gateway, links, virtual board
#
# Neuron address 0 is driven at 1 Hz, then 10 Hz from 5 s on. Each spike
# travels gateway -> link -> network -> link -> gateway, and the gateway
# counts answers on key 6.

# %%
import json
import tempfile
from pathlib import Path

from spinngate.experiment import default_config, run_experiment

result = run_experiment(default_config())
summary = result.summary()
print(json.dumps({k: summary[k] for k in ("tx_count", "rx_count", "counters", "measured_frequencies")}, indent=2))

# %% Artifacts for plotting: raster, membrane trace, event log, wire trace
out = Path(tempfile.mkdtemp())
result.write(out)
for path in sorted(out.iterdir()):
    print(f"{path.name:16s} {len(path.read_text().splitlines()):6d} lines")

# %% The seven-segment display, switched to the RX counter
from spinngate.gateway import ControlFrame, DisplayMode, encode_control_frame

gw = result.gateway
gw.handle_pc_bytes(encode_control_frame(ControlFrame.set_display_mode(DisplayMode.RX_COUNT)))
print(gw.monitor.snapshot())

# %% Sensor values instead of a frequency schedule
cfg = default_config()
cfg.schedule, cfg.samples, cfg.duration = [], [(0, 200)], 2_000
loop = run_experiment(cfg)
print("sent value 200, recovered", loop.gateway.measured_value(6))
