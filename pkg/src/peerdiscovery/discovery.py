"""The four discovery queries served from a channel snapshot.

* configuration: org CA certs plus orderer endpoints
* peer membership: alive peers that joined the channel
* endorsement: layouts plus a principal-to-peer mapping (the descriptor)
* local membership: alive peers network-wide, as seen by the responder

The endorsement pipeline: compute the policy's layouts, connect principals to
eligible peers in a bipartite graph, drop layouts no live peer set can fill,
and package the rest as an EndorsementDescriptor.
"""

from __future__ import annotations

import base64
from dataclasses import dataclass

from . import layouts as layout_engine
from .errors import (
    BadRequest,
    DiscoveryError,
    NoSatisfiableLayout,
    UnknownChaincode,
    UnknownChannel,
    UnknownPeer,
    UnknownQueryType,
)
from .layouts import Layout, compute_layouts
from .matching import maximum_matching
from .membership import ChannelPeer, ChannelView, NetworkState, channel_view
from .policy import Principal, SignaturePolicy, group_id, satisfies_principal

__all__ = [
    "ConfigResult",
    "PeerInfo",
    "LocalPeerInfo",
    "SatisfactionGraph",
    "EndorsementDescriptor",
    "config_query",
    "peer_membership_query",
    "local_membership_query",
    "build_satisfaction_graph",
    "endorsement_query",
    "handle_query",
    "QUERY_TYPES",
]

QUERY_TYPES = ("config", "peer_membership", "endorsement", "local_membership")


@dataclass(frozen=True)
class ConfigResult:
    msps: dict[str, tuple[bytes, bytes]]  # msp id -> (ca_cert, tls_ca_cert)
    orderers: tuple[str, ...]

    def to_wire(self) -> dict:
        return {
            "msps": {
                msp: {
                    "ca_cert": base64.b64encode(ca).decode(),
                    "tls_ca_cert": base64.b64encode(tls).decode(),
                }
                for msp, (ca, tls) in self.msps.items()
            },
            "orderers": list(self.orderers),
        }

    @classmethod
    def from_wire(cls, data: dict) -> "ConfigResult":
        return cls(
            msps={
                msp: (
                    base64.b64decode(certs["ca_cert"]),
                    base64.b64decode(certs["tls_ca_cert"]),
                )
                for msp, certs in data["msps"].items()
            },
            orderers=tuple(data["orderers"]),
        )


@dataclass(frozen=True)
class PeerInfo:
    peer_id: str
    msp_id: str
    endpoint: str
    ledger_height: int
    chaincodes: frozenset[str]

    def to_wire(self, include_chaincodes: bool = True) -> dict:
        data = {
            "peer_id": self.peer_id,
            "msp": self.msp_id,
            "endpoint": self.endpoint,
            "ledger_height": self.ledger_height,
        }
        if include_chaincodes:
            data["chaincodes"] = sorted(self.chaincodes)
        return data

    @classmethod
    def from_wire(cls, data: dict) -> "PeerInfo":
        return cls(
            peer_id=data["peer_id"],
            msp_id=data["msp"],
            endpoint=data["endpoint"],
            ledger_height=int(data.get("ledger_height", 0)),
            chaincodes=frozenset(data.get("chaincodes", ())),
        )


@dataclass(frozen=True)
class LocalPeerInfo:
    """Network-wide membership entry; channel-scoped fields do not apply."""

    peer_id: str
    msp_id: str
    endpoint: str

    def to_wire(self) -> dict:
        return {"peer_id": self.peer_id, "msp": self.msp_id, "endpoint": self.endpoint}


@dataclass(frozen=True)
class SatisfactionGraph:
    """Bipartite graph between policy principals and eligible peers."""

    principals: tuple[Principal, ...]
    peers: tuple[PeerInfo, ...]
    edges: frozenset[tuple[int, int]]  # (principal index, peer index)

    def peers_for(self, principal_index: int) -> list[PeerInfo]:
        return [
            self.peers[v]
            for u, v in sorted(self.edges)
            if u == principal_index
        ]


@dataclass(frozen=True)
class EndorsementDescriptor:
    chaincode: str
    endorsers_by_groups: dict[str, tuple[PeerInfo, ...]]
    layouts: tuple[Layout, ...]
    view_seq: int

    def to_wire(self) -> dict:
        return {
            "chaincode": self.chaincode,
            "view_seq": self.view_seq,
            "endorsers_by_groups": {
                group: [p.to_wire(include_chaincodes=False) for p in peers]
                for group, peers in self.endorsers_by_groups.items()
            },
            "layouts": [l.to_wire() for l in self.layouts],
        }

    @classmethod
    def from_wire(cls, data: dict) -> "EndorsementDescriptor":
        return cls(
            chaincode=data["chaincode"],
            endorsers_by_groups={
                group: tuple(PeerInfo.from_wire(p) for p in peers)
                for group, peers in data["endorsers_by_groups"].items()
            },
            layouts=tuple(Layout.from_wire(l) for l in data["layouts"]),
            view_seq=int(data.get("view_seq", 0)),
        )


# --- the four queries ---------------------------------------------------------

def config_query(view: ChannelView) -> ConfigResult:
    """Channel configuration: per-org certificate pair plus orderer list."""
    return ConfigResult(
        msps={o.msp_id: (o.ca_cert, o.tls_ca_cert) for o in view.orgs},
        orderers=tuple(view.orderer_endpoints),
    )


def _peer_info(peer: ChannelPeer) -> PeerInfo:
    return PeerInfo(
        peer_id=peer.peer_id,
        msp_id=peer.msp_id,
        endpoint=peer.endpoint,
        ledger_height=peer.ledger_height,
        chaincodes=frozenset(name for name, _ in peer.installed),
    )


def peer_membership_query(view: ChannelView) -> list[PeerInfo]:
    """Alive peers that joined the channel, sorted by peer id."""
    return [_peer_info(p) for p in sorted(view.peers, key=lambda p: p.peer_id)]


def local_membership_query(state: NetworkState, responder_peer: str) -> list[LocalPeerInfo]:
    """All alive peers in the network, as known to the responding peer."""
    if responder_peer not in state.peers:
        raise UnknownPeer(f"unknown peer {responder_peer!r}")
    return [
        LocalPeerInfo(p.peer_id, p.identity.msp_id, p.endpoint)
        for _, p in sorted(state.peers.items())
        if p.alive
    ]


def _installed(peer: ChannelPeer, chaincode: str, version: str, strict: bool) -> bool:
    if strict:
        return (chaincode, version) in peer.installed
    return any(name == chaincode for name, _ in peer.installed)


def build_satisfaction_graph(
    policy: SignaturePolicy,
    view: ChannelView,
    chaincode: str,
    strict_version: bool = False,
) -> SatisfactionGraph:
    """Connect each distinct policy principal to every eligible peer.

    Eligible means alive, joined to the channel (both guaranteed by the view)
    and having the chaincode installed. An edge (u, v) states that peer v's
    identity satisfies principal u.
    """
    definition = view.chaincodes.get(chaincode)
    if definition is None:
        raise UnknownChaincode(f"chaincode {chaincode!r} not defined on {view.name!r}")
    principals: list[Principal] = []
    for p in policy.principals:
        if p not in principals:
            principals.append(p)
    eligible = [
        p
        for p in sorted(view.peers, key=lambda p: p.peer_id)
        if _installed(p, chaincode, definition.version, strict_version)
    ]
    edges = frozenset(
        (u, v)
        for u, principal in enumerate(principals)
        for v, peer in enumerate(eligible)
        if satisfies_principal(peer.identity, principal)
    )
    return SatisfactionGraph(
        principals=tuple(principals),
        peers=tuple(_peer_info(p) for p in eligible),
        edges=edges,
    )


def _first_unfillable_group(layout: Layout, endorsers: dict) -> str | None:
    """The first group (canonical order) that cannot be staffed with peers
    distinct from every other group's picks; None when the layout is
    fillable.

    A per-group headcount is not enough once groups overlap: one peer may sit
    in several groups but can only endorse once, so fillability is a system
    of distinct representatives, checked by bipartite matching.
    """
    peer_index: dict[str, int] = {}
    slots: list[tuple[str, list[int]]] = []
    for group, quantity in layout.quantities:
        pool = endorsers.get(group, ())
        if quantity > len(pool):
            return group
        candidates = []
        for peer in pool:
            if peer.peer_id not in peer_index:
                peer_index[peer.peer_id] = len(peer_index)
            candidates.append(peer_index[peer.peer_id])
        slots.extend((group, candidates) for _ in range(quantity))
    assignment = maximum_matching([c for _, c in slots], len(peer_index))
    for (group, _), matched in zip(slots, assignment):
        if matched == -1:
            return group
    return None


def endorsement_query(
    view: ChannelView,
    chaincodes: list[str],
    layout_cap: int = layout_engine.DEFAULT_LAYOUT_CAP,
    strict_version: bool = False,
) -> list[EndorsementDescriptor]:
    """One descriptor per requested chaincode, in request order.

    Layouts that cannot be filled by distinct live peers are dropped; if none
    survive the query fails rather than returning an unfillable descriptor.
    """
    descriptors = []
    for chaincode in chaincodes:
        definition = view.chaincodes.get(chaincode)
        if definition is None:
            raise UnknownChaincode(
                f"chaincode {chaincode!r} not defined on {view.name!r}"
            )
        policy = definition.endorsement_policy
        layout_set = compute_layouts(policy, cap=layout_cap)
        graph = build_satisfaction_graph(policy, view, chaincode, strict_version)
        endorsers = {
            group_id(principal): tuple(graph.peers_for(index))
            for index, principal in enumerate(graph.principals)
        }
        survivors = []
        starved = []
        for layout in layout_set:
            short = _first_unfillable_group(layout, endorsers)
            if short is None:
                survivors.append(layout)
            else:
                starved.append(f"{layout.as_dict()} lacks peers in {short!r}")
        if not survivors:
            raise NoSatisfiableLayout(
                f"no layout of {chaincode!r} is satisfiable: " + "; ".join(starved)
            )
        referenced = {g for layout in survivors for g in layout.groups}
        descriptors.append(
            EndorsementDescriptor(
                chaincode=chaincode,
                endorsers_by_groups={
                    g: peers for g, peers in endorsers.items() if g in referenced
                },
                layouts=tuple(survivors),
                view_seq=view.event_seq,
            )
        )
    return descriptors


# --- envelope-level dispatch ----------------------------------------------------

def handle_query(
    state: NetworkState,
    responder_peer: str,
    query: dict,
    *,
    strict_channel: bool = False,
    layout_cap: int = layout_engine.DEFAULT_LAYOUT_CAP,
    strict_version: bool = False,
) -> dict:
    """Dispatch one query envelope and return a response envelope.

    Domain errors become error envelopes carrying the exception's code; the
    request id is echoed whenever the envelope carries one.
    """
    request_id = query.get("id") if isinstance(query, dict) else None
    try:
        result, view_seq = _dispatch(
            state,
            responder_peer,
            query,
            strict_channel=strict_channel,
            layout_cap=layout_cap,
            strict_version=strict_version,
        )
    except DiscoveryError as exc:
        return {
            "id": request_id,
            "ok": False,
            "view_seq": state.event_seq,
            "error": {"code": exc.code, "message": str(exc)},
        }
    return {"id": request_id, "ok": True, "view_seq": view_seq, "result": result}


def _dispatch(
    state: NetworkState,
    responder_peer: str,
    query: dict,
    *,
    strict_channel: bool,
    layout_cap: int,
    strict_version: bool,
) -> tuple[dict, int]:
    if not isinstance(query, dict):
        raise BadRequest("query envelope must be a JSON object")
    if not isinstance(query.get("id"), str):
        raise BadRequest("query envelope needs a string 'id'")
    responder = state.peers.get(responder_peer)
    if responder is None:
        raise UnknownPeer(f"unknown responder peer {responder_peer!r}")
    if not responder.alive:
        raise UnknownPeer(f"responder peer {responder_peer!r} is offline")
    qtype = query.get("type")
    if qtype not in QUERY_TYPES:
        raise UnknownQueryType(f"unknown query type {qtype!r}")

    if qtype == "local_membership":
        if "channel" in query:
            raise BadRequest("local_membership queries must not name a channel")
        peers = local_membership_query(state, responder_peer)
        return {"peers": [p.to_wire() for p in peers]}, state.event_seq

    channel = query.get("channel")
    if not isinstance(channel, str):
        raise BadRequest(f"{qtype} queries need a string 'channel'")
    if strict_channel and channel not in responder.channels:
        raise UnknownChannel(
            f"responder {responder_peer!r} has not joined channel {channel!r}"
        )
    view = channel_view(state, channel)

    if qtype == "config":
        return config_query(view).to_wire(), view.event_seq
    if qtype == "peer_membership":
        peers = peer_membership_query(view)
        return {"peers": [p.to_wire() for p in peers]}, view.event_seq

    payload = query.get("payload")
    if not isinstance(payload, dict) or not payload.get("chaincodes"):
        raise BadRequest("endorsement queries need payload {'chaincodes': [...]}")
    names = payload["chaincodes"]
    if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
        raise BadRequest("'chaincodes' must be a list of names")
    descriptors = endorsement_query(
        view, names, layout_cap=layout_cap, strict_version=strict_version
    )
    return {"descriptors": [d.to_wire() for d in descriptors]}, view.event_seq
