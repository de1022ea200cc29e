"""Signature policies: principals, identities, the threshold tree, and the
evaluation function that decides whether a set of endorsements satisfies a
policy.

A policy is a pair (principals, tree). Leaves of the tree point into the
principal array; inner nodes are thresholds satisfied when at least ``n`` of
their children are satisfied. ``OutOf(1, ...)`` therefore behaves as OR and
``OutOf(k, <k children>)`` as AND.
"""

from __future__ import annotations

import hashlib
import hmac
import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from itertools import combinations
from typing import Iterable, Iterator, Union

from .errors import ArityError, IndexOutOfRange, PolicySyntaxError
from .matching import maximum_matching

__all__ = [
    "Role",
    "Principal",
    "Identity",
    "Signature",
    "Endorsement",
    "Leaf",
    "NOutOf",
    "PolicyNode",
    "SignaturePolicy",
    "group_id",
    "parse_policy",
    "policy_to_text",
    "policy_to_wire",
    "policy_from_wire",
    "validate_policy",
    "satisfies_principal",
    "evaluate",
    "sim_sign",
    "sim_verify",
    "derive_secret",
    "simulate_endorsement",
]

_MSP_ID_RE = re.compile(r"[A-Za-z0-9._-]+\Z")


class Role(Enum):
    MEMBER = "member"
    PEER = "peer"
    ADMIN = "admin"


@dataclass(frozen=True)
class Principal:
    """An endorsement-privileged class: an organization plus a role.

    ``MEMBER`` acts as a role wildcard within the organization: any identity
    of the same msp_id satisfies a MEMBER principal.
    """

    msp_id: str
    role: Role

    def __post_init__(self):
        if not _MSP_ID_RE.match(self.msp_id):
            raise ValueError(f"invalid msp_id: {self.msp_id!r}")


def group_id(principal: Principal) -> str:
    """Canonical group name for a principal, e.g. ``"OrgA/member"``."""
    return f"{principal.msp_id}/{principal.role.value}"


@dataclass(frozen=True)
class Identity:
    """A network member: unique id, organization, role, verification key."""

    id: str
    msp_id: str
    role: Role
    verification_key: bytes


@dataclass(frozen=True)
class Signature:
    signer_id: str
    payload_digest: bytes
    tag: bytes


@dataclass(frozen=True)
class Endorsement:
    """An (identity, signature) pair over one payload digest."""

    identity: Identity
    signature: Signature
    payload_digest: bytes

    def __post_init__(self):
        if self.signature.payload_digest != self.payload_digest:
            raise ValueError("signature digest differs from endorsement digest")


@dataclass(frozen=True)
class Leaf:
    """Tree leaf: an index into the policy's principal array."""

    principal_index: int


@dataclass(frozen=True)
class NOutOf:
    """Threshold node: satisfied when at least ``n`` children are satisfied."""

    n: int
    children: tuple["PolicyNode", ...]


PolicyNode = Union[Leaf, NOutOf]


@dataclass(frozen=True)
class SignaturePolicy:
    principals: tuple[Principal, ...]
    root: PolicyNode

    def leaves(self) -> tuple[Principal, ...]:
        """Leaf principals in tree (pre-)order; repetitions preserved."""
        return tuple(self.principals[i] for i in leaf_indices(self.root))

    def leaf_count(self) -> int:
        return len(leaf_indices(self.root))

    def digest(self) -> bytes:
        from .wire import canonical_json  # local import to avoid a cycle

        return hashlib.sha256(canonical_json(policy_to_wire(self))).digest()


def leaf_indices(node: PolicyNode) -> tuple[int, ...]:
    """Principal indices of all leaves under ``node``, in pre-order."""
    if isinstance(node, Leaf):
        return (node.principal_index,)
    out: list[int] = []
    for child in node.children:
        out.extend(leaf_indices(child))
    return tuple(out)


# --- DSL parser -------------------------------------------------------------
#
#   expr := AND(expr, expr, ...) | OR(expr, ...) | OutOf(n, expr, ...)
#         | ident "." role
#   role := member | peer | admin
#
# AND(k args) desugars to OutOf(k, args); OR desugars to OutOf(1, args).
# Identical (msp_id, role) leaves share one principal-array entry, but every
# textual occurrence is its own leaf node.

_TOKEN_RE = re.compile(r"[A-Za-z0-9._-]+")
_ROLES = {r.value: r for r in Role}


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.principals: list[Principal] = []
        self.index_of: dict[Principal, int] = {}

    def error(self, message: str) -> PolicySyntaxError:
        return PolicySyntaxError(message, self.pos)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def expect(self, ch: str):
        self.skip_ws()
        if self.pos >= len(self.text) or self.text[self.pos] != ch:
            raise self.error(f"expected {ch!r}")
        self.pos += 1

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def token(self) -> str:
        self.skip_ws()
        m = _TOKEN_RE.match(self.text, self.pos)
        if not m:
            raise self.error("expected identifier")
        self.pos = m.end()
        return m.group()

    def parse(self) -> SignaturePolicy:
        root = self.expr()
        self.skip_ws()
        if self.pos != len(self.text):
            raise self.error("trailing input after policy expression")
        return SignaturePolicy(tuple(self.principals), root)

    def expr(self) -> PolicyNode:
        start = self.pos
        tok = self.token()
        if tok in ("AND", "OR", "OutOf") and self.peek() == "(":
            return self.combinator(tok, start)
        return self.leaf(tok, start)

    def combinator(self, kind: str, start: int) -> NOutOf:
        self.expect("(")
        n: int | None = None
        if kind == "OutOf":
            self.skip_ws()
            m = re.match(r"\d+", self.text[self.pos:])
            if not m:
                raise self.error("OutOf requires a leading integer threshold")
            n = int(m.group())
            self.pos += m.end()
            self.expect(",")
        children = [self.expr()]
        while self.peek() == ",":
            self.expect(",")
            children.append(self.expr())
        self.expect(")")
        if kind == "AND":
            n = len(children)
        elif kind == "OR":
            n = 1
        assert n is not None
        if n < 1 or n > len(children):
            self.pos = start
            raise ArityError(
                f"OutOf threshold {n} not in 1..{len(children)} (at offset {start})"
            )
        return NOutOf(n, tuple(children))

    def leaf(self, tok: str, start: int) -> Leaf:
        msp, sep, role_name = tok.rpartition(".")
        if not sep or not msp:
            self.pos = start
            raise self.error(f"expected '<msp>.<role>', got {tok!r}")
        role = _ROLES.get(role_name)
        if role is None:
            self.pos = start
            raise self.error(f"unknown role {role_name!r} (member/peer/admin)")
        principal = Principal(msp, role)
        index = self.index_of.get(principal)
        if index is None:
            index = len(self.principals)
            self.principals.append(principal)
            self.index_of[principal] = index
        return Leaf(index)


def parse_policy(text: str) -> SignaturePolicy:
    """Parse policy DSL text into a validated :class:`SignaturePolicy`.

    Principals are ordered by first textual appearance; repeating the same
    principal creates additional leaves sharing one array entry.
    """
    policy = _Parser(text).parse()
    validate_policy(policy)
    return policy


def policy_to_text(policy: SignaturePolicy) -> str:
    """Render a policy back to DSL text; reparsing yields an identical tree."""

    def render(node: PolicyNode) -> str:
        if isinstance(node, Leaf):
            p = policy.principals[node.principal_index]
            return f"{p.msp_id}.{p.role.value}"
        parts = ", ".join(render(c) for c in node.children)
        if node.n == len(node.children):
            return f"AND({parts})"
        if node.n == 1:
            return f"OR({parts})"
        return f"OutOf({node.n}, {parts})"

    return render(policy.root)


def policy_to_wire(policy: SignaturePolicy) -> dict:
    """JSON form: principal list plus nested {"n", "children"}/{"leaf"} tree."""

    def node(n: PolicyNode) -> dict:
        if isinstance(n, Leaf):
            return {"leaf": n.principal_index}
        return {"n": n.n, "children": [node(c) for c in n.children]}

    return {
        "principals": [
            {"msp": p.msp_id, "role": p.role.value} for p in policy.principals
        ],
        "root": node(policy.root),
    }


def policy_from_wire(data: dict) -> SignaturePolicy:
    def node(obj: dict) -> PolicyNode:
        if "leaf" in obj:
            return Leaf(int(obj["leaf"]))
        return NOutOf(int(obj["n"]), tuple(node(c) for c in obj["children"]))

    principals = tuple(
        Principal(p["msp"], Role(p["role"])) for p in data["principals"]
    )
    policy = SignaturePolicy(principals, node(data["root"]))
    validate_policy(policy)
    return policy


# --- validation -------------------------------------------------------------

def validate_policy(policy: SignaturePolicy) -> None:
    """Raise if any structural invariant is violated; return None when ok."""
    if len(policy.principals) < 1:
        raise IndexOutOfRange("policy has an empty principal array")

    def walk(node: PolicyNode):
        if isinstance(node, Leaf):
            if not 0 <= node.principal_index < len(policy.principals):
                raise IndexOutOfRange(
                    f"leaf index {node.principal_index} out of range "
                    f"(|P| = {len(policy.principals)})"
                )
            return
        if len(node.children) < 1:
            raise ArityError("threshold node has no children")
        if not 1 <= node.n <= len(node.children):
            raise ArityError(
                f"threshold {node.n} not in 1..{len(node.children)}"
            )
        for child in node.children:
            walk(child)

    walk(policy.root)


# --- satisfaction and evaluation --------------------------------------------

def satisfies_principal(identity: Identity, principal: Principal) -> bool:
    """True iff msp ids match and the principal's role is MEMBER or equal."""
    if identity.msp_id != principal.msp_id:
        return False
    return principal.role is Role.MEMBER or principal.role is identity.role


def sim_sign(signer_secret: bytes, payload_digest: bytes) -> bytes:
    """Deterministic keyed tag over a digest (simulated signature scheme)."""
    return hmac.new(signer_secret, payload_digest, hashlib.sha256).digest()


def sim_verify(verification_key: bytes, payload_digest: bytes, tag: bytes) -> bool:
    """Verify a simulated tag; the verification key doubles as the secret."""
    return hmac.compare_digest(tag, sim_sign(verification_key, payload_digest))


def derive_secret(identity_id: str) -> bytes:
    """Stable 32-byte signing secret for a simulated identity."""
    return hashlib.sha256(b"sim-identity-secret\x00" + identity_id.encode()).digest()


def simulate_endorsement(
    identity: Identity, payload_digest: bytes, secret: bytes | None = None
) -> Endorsement:
    """Produce the endorsement ``identity`` would return for a payload."""
    tag = sim_sign(secret if secret is not None else identity.verification_key,
                   payload_digest)
    sig = Signature(identity.id, payload_digest, tag)
    return Endorsement(identity, sig, payload_digest)


@dataclass(frozen=True)
class _IndexedLeaf:
    position: int
    principal: Principal


def _indexed_leaves(policy: SignaturePolicy) -> tuple[_IndexedLeaf, ...]:
    return tuple(
        _IndexedLeaf(pos, policy.principals[idx])
        for pos, idx in enumerate(leaf_indices(policy.root))
    )


@lru_cache(maxsize=512)
def _satisfying_leaf_position_sets(policy: SignaturePolicy) -> tuple[frozenset[int], ...]:
    """All leaf-position sets obtainable by taking exactly n children at every
    threshold node, deduplicated. Any one of them, fully endorsed, satisfies
    the policy."""

    counter = iter(range(policy.leaf_count() + 1)).__next__

    def rec(node: PolicyNode) -> list[frozenset[int]]:
        if isinstance(node, Leaf):
            return [frozenset((counter(),))]
        child_sets = [rec(c) for c in node.children]
        out: set[frozenset[int]] = set()
        for combo in combinations(range(len(node.children)), node.n):
            partial: list[frozenset[int]] = [frozenset()]
            for ci in combo:
                partial = [base | s for base in partial for s in child_sets[ci]]
            out.update(partial)
        return list(out)

    return tuple(sorted(rec(policy.root), key=sorted))


def evaluate(
    policy: SignaturePolicy,
    endorsements: Iterable[Endorsement],
    payload_digest: bytes,
) -> bool:
    """Decide whether the endorsements satisfy the policy over one payload.

    Endorsements are a set: listing the same endorsement twice cannot fake
    plurality. Entries with a mismatched digest or a failing signature are
    discarded first. The remainder must admit an injective assignment onto a
    satisfying set of leaves, each assigned identity satisfying its leaf's
    principal.
    """
    valid = [
        e
        for e in dict.fromkeys(endorsements)
        if e.payload_digest == payload_digest
        and sim_verify(e.identity.verification_key, payload_digest, e.signature.tag)
    ]
    if not valid:
        return False

    leaves = _indexed_leaves(policy)
    satisfied_by = {
        leaf.position: [
            j
            for j, e in enumerate(valid)
            if satisfies_principal(e.identity, leaf.principal)
        ]
        for leaf in leaves
    }
    for leaf_set in _satisfying_leaf_position_sets(policy):
        if len(leaf_set) > len(valid):
            continue
        candidates = [satisfied_by[pos] for pos in sorted(leaf_set)]
        if any(not c for c in candidates):
            continue
        if -1 not in maximum_matching(candidates, len(valid)):
            return True
    return False


def _distinct_principals(policy: SignaturePolicy) -> Iterator[Principal]:
    seen = set()
    for p in policy.principals:
        if p not in seen:
            seen.add(p)
            yield p
