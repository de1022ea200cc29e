"""Command-line interface: serve, query, select, layouts, simulate.

Every command writes JSON to stdout. Exit codes: 0 success, 1 domain error,
2 usage error. DISCOVER_LAYOUT_CAP overrides the default layout cap.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import threading
from pathlib import Path

from .client import (
    LayoutChoice,
    PeerChoice,
    SelectionStrategy,
    select_endorsers,
)
from .discovery import EndorsementDescriptor
from .errors import DiscoveryError, SchemaError
from .layouts import DEFAULT_LAYOUT_CAP, compute_layouts
from .membership import load_network
from .policy import parse_policy, policy_to_wire
from .scenario import load_scenario, run_scenario
from .server import serve
from .wire import WireClient, canonical_json, query_envelope

_QUERY_NAMES = {
    "config": "config",
    "members": "peer_membership",
    "endorsers": "endorsement",
    "local": "local_membership",
}


def _default_cap() -> int:
    raw = os.environ.get("DISCOVER_LAYOUT_CAP")
    if raw is None:
        return DEFAULT_LAYOUT_CAP
    try:
        cap = int(raw)
    except ValueError:
        raise SchemaError(f"DISCOVER_LAYOUT_CAP must be an integer, got {raw!r}")
    if cap < 1:
        raise SchemaError("DISCOVER_LAYOUT_CAP must be >= 1")
    return cap


def _emit(obj) -> None:
    sys.stdout.write(canonical_json(obj).decode("utf-8") + "\n")
    sys.stdout.flush()


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="discover",
        description="Discovery service for a simulated permissioned ledger network.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="serve discovery queries for a network file")
    p.add_argument("--network", required=True, help="network JSON file")
    p.add_argument("--peer", required=True, help="responder peer id")
    p.add_argument("--listen", required=True, help="host:port to listen on")
    p.add_argument("--strict-channel", action="store_true",
                   help="answer only channels the responder joined")
    p.add_argument("--strict-version", action="store_true",
                   help="require exact chaincode version installation")

    p = sub.add_parser("query", help="issue one discovery query")
    p.add_argument("kind", choices=sorted(_QUERY_NAMES))
    p.add_argument("--server", required=True, help="host:port of a serving peer")
    p.add_argument("--channel", help="channel name (not used for 'local')")
    p.add_argument("--chaincode", action="append", default=None,
                   help="chaincode name for 'endorsers' (repeatable)")
    p.add_argument("--id", dest="request_id", help="request id to echo")

    p = sub.add_parser("select", help="pick endorsers from a descriptor file")
    p.add_argument("--descriptor", required=True, help="descriptor JSON file")
    p.add_argument("--strategy", choices=["random", "height"], default="random")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--deny", help="JSON file with an array of peer ids to avoid")
    p.add_argument("--layout", choices=["first", "fewest", "random"], default="first")

    p = sub.add_parser("layouts", help="compute the layouts of a policy expression")
    p.add_argument("--policy", required=True, help="policy DSL text")
    p.add_argument("--no-prune", action="store_true",
                   help="keep dominated layouts")
    p.add_argument("--cap", type=int, default=None, help="layout explosion cap")

    p = sub.add_parser("simulate", help="run a scripted scenario")
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--transcript", help="write the JSONL transcript here")
    return parser


def _cmd_serve(args) -> int:
    state = load_network(args.network)
    server = serve(
        state,
        args.peer,
        args.listen,
        strict_channel=args.strict_channel,
        strict_version=args.strict_version,
        layout_cap=_default_cap(),
    )
    _emit({"listening": server.address, "peer": args.peer})
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        pass
    finally:
        server.close()
    return 0


def _cmd_query(args) -> int:
    qtype = _QUERY_NAMES[args.kind]
    payload = None
    channel = args.channel
    if qtype == "endorsement":
        if not args.chaincode:
            raise SchemaError("'endorsers' queries need at least one --chaincode")
        payload = {"chaincodes": args.chaincode}
    if qtype == "local_membership":
        channel = None
    elif channel is None:
        raise SchemaError(f"'{args.kind}' queries need --channel")
    envelope = query_envelope(
        qtype, channel=channel, payload=payload,
        request_id=args.request_id or "cli",
    )
    with WireClient(args.server) as conn:
        response = conn.request(envelope)
    _emit(response)
    return 0 if response.get("ok") else 1


def _load_descriptor(path: str) -> EndorsementDescriptor:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, dict) and "result" in data:
        data = data["result"]
    if isinstance(data, dict) and "descriptors" in data:
        data = data["descriptors"][0]
    if not isinstance(data, dict) or "endorsers_by_groups" not in data:
        raise SchemaError(f"{path} does not contain an endorsement descriptor")
    return EndorsementDescriptor.from_wire(data)


def _cmd_select(args) -> int:
    descriptor = _load_descriptor(args.descriptor)
    deny: frozenset[str] = frozenset()
    if args.deny:
        entries = json.loads(Path(args.deny).read_text(encoding="utf-8"))
        if not isinstance(entries, list):
            raise SchemaError("deny file must be a JSON array of peer ids")
        deny = frozenset(entries)
    if args.deny:
        peer_choice = PeerChoice.EXCLUDE_OFFLINE_THEN_RANDOM
    elif args.strategy == "height":
        peer_choice = PeerChoice.PREFER_HEIGHT
    else:
        peer_choice = PeerChoice.RANDOM
    strategy = SelectionStrategy(
        peer_choice=peer_choice,
        layout_choice={
            "first": LayoutChoice.FIRST,
            "fewest": LayoutChoice.FEWEST_PEERS,
            "random": LayoutChoice.RANDOM,
        }[args.layout],
        deny=deny,
    )
    result = select_endorsers(descriptor, strategy, args.seed)
    _emit(result.to_wire())
    return 0


def _cmd_layouts(args) -> int:
    cap = args.cap if args.cap is not None else _default_cap()
    policy = parse_policy(args.policy)
    layout_set = compute_layouts(policy, cap=cap, prune=not args.no_prune)
    _emit({"policy": policy_to_wire(policy), "layouts": layout_set.to_wire()})
    return 0


def _cmd_simulate(args) -> int:
    script = load_scenario(args.scenario)
    result = run_scenario(
        script, transcript_path=args.transcript, layout_cap=_default_cap()
    )
    if args.transcript:
        _emit({"ok": result.ok, "steps": len(result.lines),
               "transcript": args.transcript})
    else:
        sys.stdout.write(result.transcript())
        sys.stdout.flush()
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "serve": _cmd_serve,
        "query": _cmd_query,
        "select": _cmd_select,
        "layouts": _cmd_layouts,
        "simulate": _cmd_simulate,
    }
    try:
        return handlers[args.command](args)
    except DiscoveryError as exc:
        _emit({"error": {"code": exc.code, "message": str(exc)}})
        return 1
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        _emit({"error": {"code": "io_error", "message": str(exc)}})
        return 1


if __name__ == "__main__":
    sys.exit(main())
