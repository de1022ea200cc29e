"""Authoritative network membership state.

Holds organizations, channels, peers, chaincode definitions, ledger heights
and aliveness, and advances through explicit events. Readers never touch the
live structures: :func:`channel_view` returns an immutable snapshot tagged
with the event sequence number it was taken at.
"""

from __future__ import annotations

import base64
import binascii
import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

from .errors import (
    DanglingReference,
    DiscoveryError,
    HeightRegression,
    PolicyError,
    SchemaError,
    UnknownChannel,
)
from .policy import (
    Identity,
    Role,
    SignaturePolicy,
    derive_secret,
    parse_policy,
    policy_to_text,
)

__all__ = [
    "OrgConfig",
    "ChaincodeDefinition",
    "ChannelConfig",
    "PeerRecord",
    "NetworkState",
    "ChannelView",
    "ChannelPeer",
    "PeerJoinedChannel",
    "PeerLeftChannel",
    "PeerOnline",
    "PeerOffline",
    "ChaincodeInstalled",
    "ChaincodeDefined",
    "LedgerHeight",
    "OrgAdded",
    "PeerAdded",
    "MembershipEvent",
    "new_network",
    "load_network",
    "apply_event",
    "event_from_wire",
    "channel_view",
    "network_to_wire",
]


@dataclass(frozen=True)
class OrgConfig:
    msp_id: str
    ca_cert: bytes
    tls_ca_cert: bytes

    def __post_init__(self):
        if not self.ca_cert or not self.tls_ca_cert:
            raise SchemaError(f"org {self.msp_id!r} has an empty certificate blob")


@dataclass(frozen=True)
class ChaincodeDefinition:
    name: str
    version: str
    endorsement_policy: SignaturePolicy


@dataclass
class ChannelConfig:
    name: str
    orgs: list[OrgConfig]
    orderer_endpoints: list[str]
    chaincodes: dict[str, ChaincodeDefinition]


@dataclass
class PeerRecord:
    peer_id: str
    identity: Identity
    endpoint: str
    channels: set[str] = field(default_factory=set)
    installed_chaincodes: dict[str, set[tuple[str, str]]] = field(default_factory=dict)
    ledger_heights: dict[str, int] = field(default_factory=dict)
    alive: bool = True


@dataclass
class NetworkState:
    channels: dict[str, ChannelConfig] = field(default_factory=dict)
    peers: dict[str, PeerRecord] = field(default_factory=dict)
    event_seq: int = 0


# --- events -----------------------------------------------------------------

@dataclass(frozen=True)
class PeerJoinedChannel:
    peer: str
    channel: str


@dataclass(frozen=True)
class PeerLeftChannel:
    peer: str
    channel: str


@dataclass(frozen=True)
class PeerOnline:
    peer: str


@dataclass(frozen=True)
class PeerOffline:
    peer: str


@dataclass(frozen=True)
class ChaincodeInstalled:
    peer: str
    channel: str
    name: str
    version: str


@dataclass(frozen=True)
class ChaincodeDefined:
    channel: str
    name: str
    version: str
    policy_dsl: str


@dataclass(frozen=True)
class LedgerHeight:
    peer: str
    channel: str
    height: int


@dataclass(frozen=True)
class OrgAdded:
    channel: str
    org: OrgConfig


@dataclass(frozen=True)
class PeerAdded:
    record: PeerRecord


MembershipEvent = Union[
    PeerJoinedChannel,
    PeerLeftChannel,
    PeerOnline,
    PeerOffline,
    ChaincodeInstalled,
    ChaincodeDefined,
    LedgerHeight,
    OrgAdded,
    PeerAdded,
]

_EVENT_TYPES = {
    cls.__name__: cls
    for cls in (
        PeerJoinedChannel,
        PeerLeftChannel,
        PeerOnline,
        PeerOffline,
        ChaincodeInstalled,
        ChaincodeDefined,
        LedgerHeight,
        OrgAdded,
        PeerAdded,
    )
}


# --- file loading -----------------------------------------------------------

def _b64_bytes(value, what: str) -> bytes:
    if not isinstance(value, str):
        raise SchemaError(f"{what} must be a base64 string")
    try:
        return base64.b64decode(value, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise SchemaError(f"{what} is not valid base64: {exc}") from exc


def _role(value, what: str) -> Role:
    try:
        return Role(value)
    except ValueError:
        raise SchemaError(f"{what}: unknown role {value!r}") from None


def _org_from_wire(data: dict) -> OrgConfig:
    if not isinstance(data, dict) or "msp" not in data:
        raise SchemaError("org entry must be an object with an 'msp' field")
    return OrgConfig(
        msp_id=data["msp"],
        ca_cert=_b64_bytes(data.get("ca_cert", ""), f"org {data['msp']} ca_cert"),
        tls_ca_cert=_b64_bytes(
            data.get("tls_ca_cert", ""), f"org {data['msp']} tls_ca_cert"
        ),
    )


def _org_to_wire(org: OrgConfig) -> dict:
    return {
        "msp": org.msp_id,
        "ca_cert": base64.b64encode(org.ca_cert).decode(),
        "tls_ca_cert": base64.b64encode(org.tls_ca_cert).decode(),
    }


def _split_installed(entry: str, peer_id: str) -> tuple[str, str]:
    name, sep, version = entry.rpartition("@")
    if not sep or not name or not version:
        raise SchemaError(
            f"peer {peer_id!r}: installed entry {entry!r} must be 'name@version'"
        )
    return name, version


def _peer_from_wire(data: dict, known_channels: set[str] | None) -> PeerRecord:
    """Parse one peer entry; channel references are checked against
    ``known_channels`` unless None (events re-check at application time)."""
    for key in ("id", "msp", "endpoint"):
        if key not in data:
            raise SchemaError(f"peer entry missing {key!r}")
    peer_id = data["id"]
    channels = set(data.get("channels", []))
    if known_channels is not None:
        for ch in channels:
            if ch not in known_channels:
                raise DanglingReference(
                    f"peer {peer_id!r} references undefined channel {ch!r}"
                )
    installed: dict[str, set[tuple[str, str]]] = {}
    for ch, entries in data.get("installed", {}).items():
        if ch not in channels:
            raise DanglingReference(
                f"peer {peer_id!r} installs on channel {ch!r} it has not joined"
            )
        installed[ch] = {_split_installed(e, peer_id) for e in entries}
    heights: dict[str, int] = {}
    for ch, h in data.get("heights", {}).items():
        if ch not in channels:
            raise DanglingReference(
                f"peer {peer_id!r} has a height for channel {ch!r} it has not joined"
            )
        if not isinstance(h, int) or h < 0:
            raise SchemaError(f"peer {peer_id!r}: height for {ch!r} must be >= 0")
        heights[ch] = h
    role = _role(data.get("role", "peer"), f"peer {peer_id!r}")
    return PeerRecord(
        peer_id=peer_id,
        identity=Identity(peer_id, data["msp"], role, derive_secret(peer_id)),
        endpoint=data["endpoint"],
        channels=channels,
        installed_chaincodes=installed,
        ledger_heights=heights,
        alive=bool(data.get("alive", True)),
    )


def _peer_to_wire(peer: PeerRecord) -> dict:
    return {
        "id": peer.peer_id,
        "msp": peer.identity.msp_id,
        "role": peer.identity.role.value,
        "endpoint": peer.endpoint,
        "channels": sorted(peer.channels),
        "installed": {
            ch: sorted(f"{name}@{version}" for name, version in entries)
            for ch, entries in sorted(peer.installed_chaincodes.items())
        },
        "heights": dict(sorted(peer.ledger_heights.items())),
        "alive": peer.alive,
    }


def new_network(bootstrap: dict) -> NetworkState:
    """Build a state from a parsed network file; event_seq starts at 0."""
    if not isinstance(bootstrap, dict):
        raise SchemaError("network file must be a JSON object")
    state = NetworkState()
    for ch_data in bootstrap.get("channels", []):
        if "name" not in ch_data:
            raise SchemaError("channel entry missing 'name'")
        name = ch_data["name"]
        if name in state.channels:
            raise SchemaError(f"duplicate channel {name!r}")
        orgs = [_org_from_wire(o) for o in ch_data.get("orgs", [])]
        seen_msps = set()
        for org in orgs:
            if org.msp_id in seen_msps:
                raise SchemaError(f"channel {name!r}: duplicate org {org.msp_id!r}")
            seen_msps.add(org.msp_id)
        orderers = list(ch_data.get("orderers", []))
        if not orderers:
            raise SchemaError(f"channel {name!r} has no orderer endpoints")
        chaincodes: dict[str, ChaincodeDefinition] = {}
        for cc in ch_data.get("chaincodes", []):
            for key in ("name", "version", "policy"):
                if key not in cc:
                    raise SchemaError(f"chaincode entry missing {key!r}")
            try:
                policy = parse_policy(cc["policy"])
            except DiscoveryError as exc:
                raise PolicyError(
                    f"chaincode {cc['name']!r} on {name!r}: {exc}"
                ) from exc
            chaincodes[cc["name"]] = ChaincodeDefinition(
                cc["name"], cc["version"], policy
            )
        state.channels[name] = ChannelConfig(name, orgs, orderers, chaincodes)
    for peer_data in bootstrap.get("peers", []):
        record = _peer_from_wire(peer_data, set(state.channels))
        if record.peer_id in state.peers:
            raise SchemaError(f"duplicate peer {record.peer_id!r}")
        state.peers[record.peer_id] = record
    return state


def load_network(path: str | Path) -> NetworkState:
    with open(path, encoding="utf-8") as fh:
        return new_network(json.load(fh))


def network_to_wire(state: NetworkState) -> dict:
    """Canonical serializable form of the whole state (for files and tests)."""
    return {
        "channels": [
            {
                "name": ch.name,
                "orgs": [_org_to_wire(o) for o in ch.orgs],
                "orderers": list(ch.orderer_endpoints),
                "chaincodes": [
                    {
                        "name": cc.name,
                        "version": cc.version,
                        "policy": policy_to_text(cc.endorsement_policy),
                    }
                    for _, cc in sorted(ch.chaincodes.items())
                ],
            }
            for _, ch in sorted(state.channels.items())
        ],
        "peers": [_peer_to_wire(p) for _, p in sorted(state.peers.items())],
        "event_seq": state.event_seq,
    }


# --- event application --------------------------------------------------------

def _require_peer(state: NetworkState, peer_id: str) -> PeerRecord:
    record = state.peers.get(peer_id)
    if record is None:
        raise DanglingReference(f"unknown peer {peer_id!r}")
    return record


def _require_channel(state: NetworkState, channel: str) -> ChannelConfig:
    config = state.channels.get(channel)
    if config is None:
        raise DanglingReference(f"unknown channel {channel!r}")
    return config


def _require_joined(record: PeerRecord, channel: str):
    if channel not in record.channels:
        raise DanglingReference(
            f"peer {record.peer_id!r} has not joined channel {channel!r}"
        )


def apply_event(state: NetworkState, event: MembershipEvent) -> NetworkState:
    """Apply one event in place; event_seq advances only on success."""
    match event:
        case PeerJoinedChannel(peer=peer, channel=channel):
            record = _require_peer(state, peer)
            _require_channel(state, channel)
            record.channels.add(channel)
        case PeerLeftChannel(peer=peer, channel=channel):
            record = _require_peer(state, peer)
            _require_channel(state, channel)
            record.channels.discard(channel)
            record.installed_chaincodes.pop(channel, None)
            record.ledger_heights.pop(channel, None)
        case PeerOnline(peer=peer):
            _require_peer(state, peer).alive = True
        case PeerOffline(peer=peer):
            _require_peer(state, peer).alive = False
        case ChaincodeInstalled(peer=peer, channel=channel, name=name, version=version):
            record = _require_peer(state, peer)
            _require_channel(state, channel)
            _require_joined(record, channel)
            record.installed_chaincodes.setdefault(channel, set()).add((name, version))
        case ChaincodeDefined(channel=channel, name=name, version=version, policy_dsl=dsl):
            config = _require_channel(state, channel)
            try:
                policy = parse_policy(dsl)
            except DiscoveryError as exc:
                raise PolicyError(f"chaincode {name!r} on {channel!r}: {exc}") from exc
            config.chaincodes[name] = ChaincodeDefinition(name, version, policy)
        case LedgerHeight(peer=peer, channel=channel, height=height):
            record = _require_peer(state, peer)
            _require_channel(state, channel)
            _require_joined(record, channel)
            current = record.ledger_heights.get(channel, 0)
            if height < current:
                raise HeightRegression(
                    f"peer {peer!r} on {channel!r}: height {height} < {current}"
                )
            record.ledger_heights[channel] = height
        case OrgAdded(channel=channel, org=org):
            config = _require_channel(state, channel)
            if any(o.msp_id == org.msp_id for o in config.orgs):
                raise SchemaError(
                    f"channel {channel!r} already has org {org.msp_id!r}"
                )
            config.orgs.append(org)
        case PeerAdded(record=seed):
            if seed.peer_id in state.peers:
                raise SchemaError(f"duplicate peer {seed.peer_id!r}")
            for ch in seed.channels:
                _require_channel(state, ch)
            state.peers[seed.peer_id] = copy.deepcopy(seed)
        case _:
            raise SchemaError(f"unknown event {event!r}")
    state.event_seq += 1
    return state


def event_from_wire(data: dict) -> MembershipEvent:
    """Build an event from its JSON form {"type": ..., "args": {...}}."""
    if not isinstance(data, dict) or "type" not in data:
        raise SchemaError("event must be an object with a 'type' field")
    cls = _EVENT_TYPES.get(data["type"])
    if cls is None:
        raise SchemaError(f"unknown event type {data['type']!r}")
    args = dict(data.get("args", {}))
    try:
        if cls is OrgAdded:
            return OrgAdded(channel=args["channel"], org=_org_from_wire(args["org"]))
        if cls is PeerAdded:
            record_data = args.get("record", args)
            return PeerAdded(record=_peer_from_wire(record_data, None))
        return cls(**args)
    except KeyError as exc:
        raise SchemaError(f"event {data['type']}: missing argument {exc}") from exc
    except TypeError as exc:
        raise SchemaError(f"event {data['type']}: {exc}") from exc


# --- snapshots ---------------------------------------------------------------

@dataclass(frozen=True)
class ChannelPeer:
    """Channel-scoped immutable snapshot of one live peer."""

    peer_id: str
    identity: Identity
    endpoint: str
    ledger_height: int
    installed: frozenset[tuple[str, str]]

    @property
    def msp_id(self) -> str:
        return self.identity.msp_id


@dataclass(frozen=True)
class ChannelView:
    """Immutable snapshot of one channel at a given event_seq."""

    name: str
    orgs: tuple[OrgConfig, ...]
    orderer_endpoints: tuple[str, ...]
    chaincodes: dict[str, ChaincodeDefinition]
    peers: tuple[ChannelPeer, ...]
    event_seq: int


def channel_view(state: NetworkState, channel: str) -> ChannelView:
    """Snapshot the channel: its config plus its alive, joined peers."""
    config = state.channels.get(channel)
    if config is None:
        raise UnknownChannel(f"unknown channel {channel!r}")
    peers = tuple(
        ChannelPeer(
            peer_id=p.peer_id,
            identity=p.identity,
            endpoint=p.endpoint,
            ledger_height=p.ledger_heights.get(channel, 0),
            installed=frozenset(p.installed_chaincodes.get(channel, ())),
        )
        for _, p in sorted(state.peers.items())
        if p.alive and channel in p.channels
    )
    return ChannelView(
        name=config.name,
        orgs=tuple(config.orgs),
        orderer_endpoints=tuple(config.orderer_endpoints),
        chaincodes=dict(config.chaincodes),
        peers=peers,
        event_seq=state.event_seq,
    )
