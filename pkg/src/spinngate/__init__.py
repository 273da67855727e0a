"""Software model of an FPGA gateway between conventional sensors and a
SpiNNaker board, with a virtual SpiNN-3 endpoint for closed-loop runs."""

from .aer import (
    AerEvent,
    RoutingTable,
    SpinnPacket,
    build_mc_packet,
    compute_parity,
    map_event_to_key,
    map_key_to_event,
    parse_packet,
)
from .experiment import ExperimentConfig, load_config, run_experiment
from .gateway import ControlFrame, Gateway, decode_control_frame, encode_control_frame
from .link import (
    AckPolicy,
    Link,
    decode_transition,
    deframe_symbols,
    encode_symbol,
    frame_packet,
    link_transfer,
)
from .neuron import LifParams, LifState, NetworkConfig, VirtualSpinn, run_network, step_lif
from .rate import (
    RateConfig,
    SpikeTrain,
    estimate_period,
    generate_spike_train,
    period_to_value,
    value_to_period,
)

__version__ = "0.1.0"
