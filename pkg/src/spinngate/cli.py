"""Command-line front end.

    spinngate run --config PATH --out DIR [--realtime]
    spinngate codec encode --key K [--payload P]
    spinngate codec decode HEX
    spinngate codec frame HEX
    spinngate loopback --ack-policy {normal,never,delay:N} --packets N
"""

from __future__ import annotations

import argparse
import sys

from . import aer, link
from .experiment import ConfigError, load_config, parse_config, default_config_text, run_experiment


def _int(text: str) -> int:
    return int(text, 0)


def cmd_run_experiment(args) -> int:
    try:
        cfg = load_config(args.config) if args.config else parse_config(default_config_text())
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.realtime:
        cfg.realtime_pacing = True
    result = run_experiment(cfg)
    result.write(args.out)
    s = result.summary()
    print(f"tx {s['tx_count']}, rx {s['rx_count']}, counters {s['counters']}")
    return 0


def cmd_codec(args) -> int:
    if args.action == "encode":
        try:
            packet = aer.build_mc_packet(args.key, args.payload)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        print(packet.to_hex())
        return 0
    text = args.hex
    try:
        int(text, 16)
    except ValueError:
        print(f"error: not a hex packet: {text!r}", file=sys.stderr)
        return 2
    if args.action == "frame":
        digits = text[2:] if text.lower().startswith("0x") else text
        if len(digits) not in (10, 18):
            print("error: expected 10 or 18 hex digits", file=sys.stderr)
            return 2
        symbols = link.frame_word(int(digits, 16), len(digits) * 4)
        print(" ".join(link.symbol_name(s) for s in symbols))
        return 0
    try:
        packet = aer.parse_hex(text)
    except aer.IllegalLength as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except aer.PacketError as exc:
        print(type(exc).__name__)
        return 0
    payload = "none" if packet.payload is None else f"0x{packet.payload:08X}"
    print(f"type={packet.packet_type.name} key=0x{packet.key:08X} payload={payload}")
    return 0


def cmd_loopback(args) -> int:
    try:
        policy = link.AckPolicy.parse(args.ack_policy)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.packets < 0:
        print("error: --packets must be non-negative", file=sys.stderr)
        return 2
    packets = [aer.build_mc_packet(k) for k in range(args.packets)]
    report = link.link_transfer(packets, policy, budget=args.budget)
    print(report.summary())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spinngate", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the closed-loop experiment")
    run.add_argument("--config", help="INI experiment config (default: shipped config)")
    run.add_argument("--out", required=True, help="output directory for artifacts")
    run.add_argument("--realtime", action="store_true", help="pace virtual time on the wall clock")
    run.set_defaults(func=cmd_run_experiment)

    codec = sub.add_parser("codec", help="packet and framing codecs")
    csub = codec.add_subparsers(dest="action", required=True)
    enc = csub.add_parser("encode")
    enc.add_argument("--key", type=_int, required=True)
    enc.add_argument("--payload", type=_int)
    dec = csub.add_parser("decode")
    dec.add_argument("hex")
    frm = csub.add_parser("frame")
    frm.add_argument("hex")
    codec.set_defaults(func=cmd_codec)

    loop = sub.add_parser("loopback", help="push packets across one link")
    loop.add_argument("--ack-policy", default="normal")
    loop.add_argument("--packets", type=int, default=1)
    loop.add_argument("--budget", type=int, default=1_000_000)
    loop.set_defaults(func=cmd_loopback)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
