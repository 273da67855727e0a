# %% [markdown]
# # 2-of-7 symbols and the ack handshake
#
# Packets cross the link one nibble at a time. Each nibble toggles two of
# seven wires; the receiver toggles the ack wire in reply. Without the ack
# the sender gives up after its first symbol.

# %%
from spinngate.aer import build_mc_packet
from spinngate.link import (
    NEVER_ACK,
    NORMAL,
    AckPolicy,
    Link,
    encode_symbol,
    frame_packet,
    link_transfer,
    symbol_name,
)

packet = build_mc_packet(6)
symbols = frame_packet(packet)
print("symbols:", " ".join(symbol_name(s) for s in symbols))

wires = 0
for sym in symbols:
    nxt = encode_symbol(wires, sym)
    print(f"{symbol_name(sym):>3}  {wires:07b} -> {nxt:07b}")
    wires = nxt

# %% Normal acknowledgement: one symbol per tick
trace = []
report = link_transfer([packet, build_mc_packet(7)], NORMAL, link=Link(trace=trace))
print(report.summary(), "in", report.ticks + 1, "ticks")

# %% A slow receiver stretches the transfer but keeps one symbol in flight
slow = link_transfer([packet], AckPolicy("delay", 20))
print(slow.summary(), "in", slow.ticks + 1, "ticks; max in flight", slow.max_in_flight)

# %% No acknowledgement at all: the transfer aborts after the first symbol
print(link_transfer([packet], NEVER_ACK).summary())
