"""Discovery engine for a simulated permissioned ledger network.

Evaluates signature-based endorsement policies, computes endorsement
descriptors from live membership state, serves the discovery queries over a
framed-JSON wire protocol, and selects endorsers client-side.
"""

from .client import (
    ChannelContext,
    ClientConfig,
    LayoutChoice,
    PeerChoice,
    SelectionResult,
    SelectionStrategy,
    bootstrap,
    check_consistency,
    discover_endorsers,
    select_endorsers,
    validate_endorsement_set,
)
from .discovery import (
    ConfigResult,
    EndorsementDescriptor,
    LocalPeerInfo,
    PeerInfo,
    SatisfactionGraph,
    build_satisfaction_graph,
    config_query,
    endorsement_query,
    handle_query,
    local_membership_query,
    peer_membership_query,
)
from .errors import DiscoveryError
from .layouts import (
    DEFAULT_LAYOUT_CAP,
    Layout,
    LayoutSet,
    compute_layouts,
    oracle_satisfies,
    prune_dominated,
)
from .membership import (
    ChannelView,
    NetworkState,
    apply_event,
    channel_view,
    event_from_wire,
    load_network,
    network_to_wire,
    new_network,
)
from .policy import (
    Endorsement,
    Identity,
    Principal,
    Role,
    Signature,
    SignaturePolicy,
    derive_secret,
    evaluate,
    group_id,
    parse_policy,
    policy_from_wire,
    policy_to_text,
    policy_to_wire,
    satisfies_principal,
    sim_sign,
    sim_verify,
    simulate_endorsement,
    validate_policy,
)
from .scenario import load_scenario, run_scenario
from .server import DiscoveryServer, StateHandle, serve

__version__ = "0.1.0"
