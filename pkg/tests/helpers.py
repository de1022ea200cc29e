"""Harness helpers: act as endorsing peers and as the verifying committer."""

from __future__ import annotations

import json
from importlib import resources

from peerdiscovery.discovery import PeerInfo
from peerdiscovery.membership import NetworkState, new_network
from peerdiscovery.policy import (
    Endorsement,
    Identity,
    Role,
    derive_secret,
    simulate_endorsement,
)


def fig1_network_dict() -> dict:
    with resources.files("peerdiscovery").joinpath("data/fig1_network.json").open() as fh:
        return json.load(fh)


def fig1_state() -> NetworkState:
    return new_network(fig1_network_dict())


def identity_for(peer: PeerInfo, state: NetworkState | None = None) -> Identity:
    """The simulated identity behind a discovery PeerInfo.

    An endorsing peer signs with its own identity, so when the originating
    network state is at hand the true record is used; otherwise a plain
    PEER-role identity is reconstructed (correct for all bundled networks).
    """
    if state is not None and peer.peer_id in state.peers:
        return state.peers[peer.peer_id].identity
    return Identity(peer.peer_id, peer.msp_id, Role.PEER, derive_secret(peer.peer_id))


def endorsements_for(
    peers, payload_digest: bytes, state: NetworkState | None = None
) -> list[Endorsement]:
    """What the selected peers would sign and return for one proposal."""
    return [
        simulate_endorsement(identity_for(p, state), payload_digest) for p in peers
    ]
