"""Exception hierarchy shared across the package.

Every domain error carries a stable snake_case ``code`` so transport code can
map exceptions onto error envelopes without a separate lookup table.
"""

from __future__ import annotations


class DiscoveryError(Exception):
    """Base class for all domain errors raised by this package."""

    code = "error"


# --- policy ---------------------------------------------------------------

class PolicySyntaxError(DiscoveryError):
    """Policy DSL text failed to parse; ``position`` is a 0-based offset."""

    code = "syntax_error"

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at offset {position})")
        self.position = position


class ArityError(DiscoveryError):
    """An OutOf node's threshold is below 1 or above its child count."""

    code = "arity_error"


class IndexOutOfRange(DiscoveryError):
    """A leaf points past the end of the principal array."""

    code = "index_out_of_range"


# --- layouts --------------------------------------------------------------

class LayoutExplosion(DiscoveryError):
    """Working layout set exceeded the configured cap at ``vertex``."""

    code = "layout_explosion"

    def __init__(self, vertex: str, cap: int):
        super().__init__(f"layout cap {cap} exceeded at vertex {vertex}")
        self.vertex = vertex
        self.cap = cap


class OracleTooLarge(DiscoveryError):
    """Exhaustive satisfaction check was asked to run beyond desk scale."""

    code = "oracle_too_large"


# --- membership -----------------------------------------------------------

class SchemaError(DiscoveryError):
    """Network/scenario file does not match its schema."""

    code = "schema_error"


class DanglingReference(DiscoveryError):
    """An event or file entry references an unknown peer/channel."""

    code = "dangling_reference"


class HeightRegression(DiscoveryError):
    """A ledger-height event tried to lower a recorded height."""

    code = "height_regression"


class PolicyError(DiscoveryError):
    """An embedded policy DSL string failed to parse or validate."""

    code = "policy_error"


class UnknownChannel(DiscoveryError):
    code = "unknown_channel"


class UnknownPeer(DiscoveryError):
    code = "unknown_peer"


# --- discovery ------------------------------------------------------------

class UnknownChaincode(DiscoveryError):
    code = "unknown_chaincode"


class UnknownQueryType(DiscoveryError):
    code = "unknown_query_type"


class BadRequest(DiscoveryError):
    """Query envelope is structurally invalid (missing/extra fields)."""

    code = "bad_request"


class NoSatisfiableLayout(DiscoveryError):
    """Every layout required more live peers in some group than exist."""

    code = "no_satisfiable_layout"


# --- client ---------------------------------------------------------------

class AllBootstrapPeersUnreachable(DiscoveryError):
    """No bootstrap endpoint produced a usable configuration response."""

    code = "all_bootstrap_peers_unreachable"

    def __init__(self, failures: dict[str, str]):
        detail = "; ".join(f"{ep}: {why}" for ep, why in failures.items())
        super().__init__(f"all bootstrap endpoints failed: {detail}")
        self.failures = failures


class InsufficientPeers(DiscoveryError):
    """A group ran out of selectable peers during endorser selection."""

    code = "insufficient_peers"

    def __init__(self, group: str, needed: int, available: int):
        super().__init__(
            f"group {group!r} needs {needed} peers, only {available} selectable"
        )
        self.group = group
        self.needed = needed
        self.available = available


class EmptyResponseSet(DiscoveryError):
    code = "empty_response_set"


class ServiceError(DiscoveryError):
    """An error envelope returned by the discovery service, verbatim."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


# --- wire / server / scenario ---------------------------------------------

class FrameTooLarge(DiscoveryError):
    code = "frame_too_large"


class TruncatedFrame(DiscoveryError):
    code = "truncated_frame"


class InvalidJson(DiscoveryError):
    code = "invalid_json"


class BindError(DiscoveryError):
    code = "bind_error"


class ScenarioParseError(DiscoveryError):
    code = "scenario_parse_error"


class AssertionFailed(DiscoveryError):
    """A scenario assertion step did not match the last response."""

    code = "assertion_failed"

    def __init__(self, path: str, expected, actual):
        super().__init__(
            f"assertion failed at {path!r}: expected {expected!r}, got {actual!r}"
        )
        self.path = path
        self.expected = expected
        self.actual = actual
