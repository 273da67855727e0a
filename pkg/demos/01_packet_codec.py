# %% [markdown]
# # Multicast packets and routing keys
#
# A spike leaves the gateway as nothing more than a neuron address. The
# routing table turns the address into a 32-bit key, and the key rides in a
# 40-bit multicast packet protected by odd parity.

# %%
from spinngate.aer import (
    AerEvent,
    ParityError,
    build_mc_packet,
    experiment_routing,
    map_event_to_key,
    map_key_to_event,
    parse_hex,
)

table = experiment_routing()
event = AerEvent(address=0, timestamp=1_000_000)
key = map_event_to_key(event, table)
packet = build_mc_packet(key)
print("event", event, "-> key", key, "-> packet", packet.to_hex())

# %% The set-value population answers with key 6
answer = build_mc_packet(6)
print("answer on the wire:", answer.to_hex())
print("decoded back:", map_key_to_event(parse_hex(answer.to_hex()).key, table, now=1_002_000))

# %% A payload makes the packet 72 bits long
long_packet = build_mc_packet(6, 0xDEADBEEF)
print(long_packet.nbits, "bits:", long_packet.to_hex())

# %% Any single flipped bit is caught by the parity check
corrupted = answer.word ^ (1 << 12)
try:
    parse_hex(f"{corrupted:010X}")
except ParityError as exc:
    print("dropped:", exc)
