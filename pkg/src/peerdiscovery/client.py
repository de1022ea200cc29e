"""Client-side SDK: bootstrap against trusted peers, discover endorsers, and
pick a concrete peer set out of an endorsement descriptor.

Selection walks the chosen layout's groups in canonical (sorted) order and
draws each group's quota from the peers mapped to it. Draws are reproducible:
every randomized step runs on a generator derived from the caller's 64-bit
seed, and the subset draw is a seeded shuffle of the group's peers (sorted by
peer id) followed by taking the prefix. A peer already taken by an earlier
group is removed from later pools, so the result size always equals the
layout's total.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .discovery import ConfigResult, EndorsementDescriptor, PeerInfo
from .errors import (
    AllBootstrapPeersUnreachable,
    DiscoveryError,
    EmptyResponseSet,
    InsufficientPeers,
)
from .layouts import Layout
from .matching import maximum_matching
from .policy import Endorsement, SignaturePolicy, evaluate
from .wire import WireClient, query_envelope

__all__ = [
    "PeerChoice",
    "LayoutChoice",
    "SelectionStrategy",
    "SelectionResult",
    "ClientConfig",
    "ChannelContext",
    "bootstrap",
    "discover_endorsers",
    "select_endorsers",
    "check_consistency",
    "validate_endorsement_set",
]


class PeerChoice(Enum):
    RANDOM = "random"
    PREFER_HEIGHT = "prefer_height"
    EXCLUDE_OFFLINE_THEN_RANDOM = "exclude_offline_then_random"


class LayoutChoice(Enum):
    FIRST = "first"
    FEWEST_PEERS = "fewest_peers"
    RANDOM = "random"


@dataclass(frozen=True)
class SelectionStrategy:
    peer_choice: PeerChoice = PeerChoice.RANDOM
    layout_choice: LayoutChoice = LayoutChoice.FIRST
    deny: frozenset[str] = frozenset()  # peer ids treated as offline


@dataclass(frozen=True)
class SelectionResult:
    peers: frozenset[PeerInfo]
    layout_used: Layout
    seed_used: int

    def sorted_peers(self) -> list[PeerInfo]:
        return sorted(self.peers, key=lambda p: p.peer_id)

    def to_wire(self) -> dict:
        return {
            "peers": [p.to_wire() for p in self.sorted_peers()],
            "layout": self.layout_used.to_wire(),
            "seed": self.seed_used,
        }


@dataclass(frozen=True)
class ClientConfig:
    bootstrap_endpoints: tuple[str, ...]
    channel: str
    rng_seed: int = 0
    strategy: SelectionStrategy = field(default_factory=SelectionStrategy)

    def __post_init__(self):
        if not self.bootstrap_endpoints:
            raise ValueError("at least one bootstrap endpoint is required")


@dataclass(frozen=True)
class ChannelContext:
    channel: str
    config: ConfigResult
    endpoint: str  # the bootstrap endpoint that answered


def bootstrap(client_config: ClientConfig, timeout: float = 5.0) -> ChannelContext:
    """Fetch the channel configuration from the first responsive endpoint."""
    failures: dict[str, str] = {}
    for endpoint in client_config.bootstrap_endpoints:
        try:
            with WireClient(endpoint, timeout=timeout) as conn:
                response = conn.request_ok(
                    query_envelope("config", channel=client_config.channel)
                )
            return ChannelContext(
                channel=client_config.channel,
                config=ConfigResult.from_wire(response["result"]),
                endpoint=endpoint,
            )
        except (OSError, DiscoveryError, KeyError, ValueError) as exc:
            failures[endpoint] = f"{type(exc).__name__}: {exc}"
    raise AllBootstrapPeersUnreachable(failures)


def discover_endorsers(
    ctx: ChannelContext, chaincode: str, timeout: float = 5.0
) -> EndorsementDescriptor:
    """Ask the discovery service which peers can endorse a chaincode.

    Can be re-issued at any time to pick up membership or policy changes;
    service-side error envelopes surface as :class:`ServiceError`.
    """
    with WireClient(ctx.endpoint, timeout=timeout) as conn:
        response = conn.request_ok(
            query_envelope(
                "endorsement",
                channel=ctx.channel,
                payload={"chaincodes": [chaincode]},
            )
        )
    return EndorsementDescriptor.from_wire(response["result"]["descriptors"][0])


def _subseed(seed: int, label: str) -> int:
    digest = hashlib.sha256(f"{seed}|{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _choose_layout(
    layouts: Sequence[Layout], choice: LayoutChoice, seed: int
) -> Layout:
    if choice is LayoutChoice.FIRST:
        return layouts[0]
    if choice is LayoutChoice.FEWEST_PEERS:
        return min(layouts, key=lambda l: l.total)  # ties: earliest wins
    rng = random.Random(_subseed(seed, "::layout"))
    return layouts[rng.randrange(len(layouts))]


def select_endorsers(
    descriptor: EndorsementDescriptor,
    strategy: SelectionStrategy,
    seed: int,
) -> SelectionResult:
    """Pick the peers to request endorsements from, per the descriptor.

    For each group g of the chosen layout (walked in canonical order),
    n = layout[g] peers are drawn from the group's endorsers. RANDOM draws a
    uniform n-subset via the seeded generator (a shuffle of the pool sorted
    by peer id, taking the prefix); PREFER_HEIGHT takes the n highest ledger
    heights, equal heights tie-broken by the seeded shuffle;
    EXCLUDE_OFFLINE_THEN_RANDOM first drops deny-listed peers, then draws
    randomly.

    A peer never endorses for two groups at once: when groups overlap, a
    peer taken by an earlier group is replaced from later preferences via
    augmenting paths, so a selection is always found when distinct peers can
    fill the layout at all.
    """
    if not descriptor.layouts:
        raise InsufficientPeers("<none>", 0, 0)
    layout = _choose_layout(descriptor.layouts, strategy.layout_choice, seed)

    peers_by_id: dict[str, PeerInfo] = {}
    slots: list[tuple[str, list[str]]] = []  # (group, peer ids in preference order)
    for group, needed in layout.quantities:
        pool = sorted(
            descriptor.endorsers_by_groups.get(group, ()), key=lambda p: p.peer_id
        )
        if strategy.peer_choice is PeerChoice.EXCLUDE_OFFLINE_THEN_RANDOM:
            pool = [p for p in pool if p.peer_id not in strategy.deny]
        if len(pool) < needed:
            raise InsufficientPeers(group, needed, len(pool))
        rng = random.Random(_subseed(seed, group))
        rng.shuffle(pool)
        if strategy.peer_choice is PeerChoice.PREFER_HEIGHT:
            pool.sort(key=lambda p: -p.ledger_height)  # stable: ties stay shuffled
        for p in pool:
            peers_by_id.setdefault(p.peer_id, p)
        slots.extend((group, [p.peer_id for p in pool]) for _ in range(needed))

    index_of = {pid: i for i, pid in enumerate(peers_by_id)}
    assignment = maximum_matching(
        [[index_of[pid] for pid in prefs] for _, prefs in slots], len(index_of)
    )
    ids = list(peers_by_id)
    chosen: dict[str, PeerInfo] = {}
    for (group, prefs), matched in zip(slots, assignment):
        if matched == -1:
            free = sum(1 for pid in prefs if pid not in chosen)
            raise InsufficientPeers(group, layout[group], free)
        chosen[ids[matched]] = peers_by_id[ids[matched]]
    return SelectionResult(
        peers=frozenset(chosen.values()), layout_used=layout, seed_used=seed
    )


def check_consistency(responses: Sequence[Endorsement]) -> bool:
    """True iff every endorsement response signed the same payload."""
    if not responses:
        raise EmptyResponseSet("no endorsement responses to compare")
    first = responses[0].payload_digest
    return all(r.payload_digest == first for r in responses)


def validate_endorsement_set(
    policy: SignaturePolicy,
    responses: Iterable[Endorsement],
    payload_digest: bytes,
) -> bool:
    """Check collected endorsements against the chaincode's policy."""
    return evaluate(policy, responses, payload_digest)
