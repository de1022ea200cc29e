"""Layout computation: the satisfying principal combinations of a policy.

A layout is a histogram from group id to a required signature count. The set
of layouts of a policy is computed bottom-up: a leaf yields the singleton
histogram for its principal's group; a threshold node yields, for every
size-n subset of its children, every sum of one layout per chosen child.
Duplicates are always removed; componentwise-dominated layouts are removed by
default so the result is the minimal antichain of satisfying multisets.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from typing import Iterable, Mapping

from .errors import LayoutExplosion, OracleTooLarge
from .policy import (
    Leaf,
    PolicyNode,
    SignaturePolicy,
    group_id,
    leaf_indices,
)

__all__ = [
    "DEFAULT_LAYOUT_CAP",
    "Layout",
    "LayoutSet",
    "compute_layouts",
    "prune_dominated",
    "oracle_satisfies",
]

DEFAULT_LAYOUT_CAP = 1024

_ORACLE_MAX_TOTAL = 12
_ORACLE_MAX_LEAVES = 16


@dataclass(frozen=True)
class Layout:
    """Required signature counts per group; one satisfying combination.

    ``quantities`` is kept as a tuple of (group id, count) pairs sorted by
    group id, which makes layouts hashable and their order canonical.
    """

    quantities: tuple[tuple[str, int], ...]

    @classmethod
    def from_counts(cls, counts: Mapping[str, int]) -> "Layout":
        if not counts:
            raise ValueError("a layout must cover at least one group")
        if any(c < 1 for c in counts.values()):
            raise ValueError("layout counts must be positive")
        return cls(tuple(sorted(counts.items())))

    def as_dict(self) -> dict[str, int]:
        return dict(self.quantities)

    @property
    def total(self) -> int:
        return sum(c for _, c in self.quantities)

    @property
    def groups(self) -> tuple[str, ...]:
        return tuple(g for g, _ in self.quantities)

    def __getitem__(self, group: str) -> int:
        for g, c in self.quantities:
            if g == group:
                return c
        raise KeyError(group)

    def covered_by(self, other: Mapping[str, int]) -> bool:
        """True iff every group's count is available in ``other``."""
        return all(other.get(g, 0) >= c for g, c in self.quantities)

    def to_wire(self) -> list[dict]:
        return [{"group": g, "quantity": c} for g, c in self.quantities]

    @classmethod
    def from_wire(cls, data: list[dict]) -> "Layout":
        return cls.from_counts({e["group"]: int(e["quantity"]) for e in data})


def _canonical_order(layouts: Iterable[Layout]) -> tuple[Layout, ...]:
    return tuple(sorted(set(layouts), key=lambda l: (l.total, l.quantities)))


@dataclass(frozen=True)
class LayoutSet:
    layouts: tuple[Layout, ...]
    source_policy_digest: bytes

    def __iter__(self):
        return iter(self.layouts)

    def __len__(self):
        return len(self.layouts)

    def to_wire(self) -> list[list[dict]]:
        return [l.to_wire() for l in self.layouts]


def compute_layouts(
    policy: SignaturePolicy,
    cap: int = DEFAULT_LAYOUT_CAP,
    prune: bool = True,
) -> LayoutSet:
    """Compute the layout set of a validated policy.

    Raises :class:`LayoutExplosion` as soon as the working set of partial
    layouts at any vertex exceeds ``cap``; the error names the vertex by its
    path from the root. With ``prune`` (the default) the result is the
    minimal antichain; without it, dominated layouts are kept.
    """
    if cap < 1:
        raise ValueError("cap must be >= 1")

    def rec(node: PolicyNode, path: str) -> list[dict[str, int]]:
        if isinstance(node, Leaf):
            return [{group_id(policy.principals[node.principal_index]): 1}]
        child_sets = [
            rec(child, f"{path}/{i}") for i, child in enumerate(node.children)
        ]
        acc: dict[tuple[tuple[str, int], ...], dict[str, int]] = {}
        for combo in combinations(range(len(node.children)), node.n):
            partial: list[dict[str, int]] = [{}]
            for ci in combo:
                merged: list[dict[str, int]] = []
                for base in partial:
                    for child_layout in child_sets[ci]:
                        summed = dict(base)
                        for g, c in child_layout.items():
                            summed[g] = summed.get(g, 0) + c
                        merged.append(summed)
                        if len(merged) + len(acc) > cap:
                            raise LayoutExplosion(path, cap)
                partial = merged
            for hist in partial:
                acc[tuple(sorted(hist.items()))] = hist
            if len(acc) > cap:
                raise LayoutExplosion(path, cap)
        return list(acc.values())

    layouts = [Layout.from_counts(h) for h in rec(policy.root, "root")]
    if prune:
        layouts = prune_dominated(layouts)
    return LayoutSet(_canonical_order(layouts), policy.digest())


def _dominates(smaller: Layout, larger: Layout) -> bool:
    """True iff ``smaller`` needs no more of any group than ``larger``."""
    have = larger.as_dict()
    return all(have.get(g, 0) >= c for g, c in smaller.quantities)


def prune_dominated(layouts: Iterable[Layout]) -> list[Layout]:
    """Reduce to the minimal antichain under componentwise domination."""
    distinct = list(set(layouts))
    kept = [
        l
        for l in distinct
        if not any(o != l and _dominates(o, l) for o in distinct)
    ]
    return list(_canonical_order(kept))


@lru_cache(maxsize=512)
def _satisfying_histograms(policy: SignaturePolicy) -> tuple[tuple[tuple[str, int], ...], ...]:
    """Group histograms of every satisfying leaf subset, by exhaustive
    enumeration over all 2^L subsets. Independent of compute_layouts."""
    leaf_groups = [group_id(policy.principals[i]) for i in leaf_indices(policy.root)]
    n = len(leaf_groups)
    if n > _ORACLE_MAX_LEAVES:
        raise OracleTooLarge(f"{n} leaves exceeds the desk-scale bound")

    def satisfied(node: PolicyNode, members: int, base: int) -> tuple[bool, int]:
        # base: pre-order position of the node's first leaf; returns the
        # node's verdict and its leaf span.
        if isinstance(node, Leaf):
            return bool(members >> base & 1), 1
        count = 0
        span = 0
        for child in node.children:
            ok, width = satisfied(child, members, base + span)
            span += width
            count += ok
        return count >= node.n, span

    minimal: list[dict[str, int]] = []
    for mask in range(1, 1 << n):
        if not satisfied(policy.root, mask, 0)[0]:
            continue
        hist: dict[str, int] = {}
        for pos in range(n):
            if mask >> pos & 1:
                g = leaf_groups[pos]
                hist[g] = hist.get(g, 0) + 1
        if any(
            all(hist.get(g, 0) >= c for g, c in kept.items()) for kept in minimal
        ):
            continue
        minimal = [
            kept
            for kept in minimal
            if not all(kept.get(g, 0) >= c for g, c in hist.items())
        ]
        minimal.append(hist)
    return tuple(sorted(tuple(sorted(h.items())) for h in minimal))


def oracle_satisfies(policy: SignaturePolicy, multiset: Mapping[str, int]) -> bool:
    """Exhaustive check that a group multiset satisfies the policy.

    True iff the multiset's units can be injectively assigned to leaves of
    matching group so that the threshold tree is satisfied. Serves as the
    verification oracle for :func:`compute_layouts`; desk scale only.
    """
    total = sum(multiset.values())
    if total > _ORACLE_MAX_TOTAL:
        raise OracleTooLarge(
            f"multiset total {total} exceeds the desk-scale bound {_ORACLE_MAX_TOTAL}"
        )
    return any(
        all(multiset.get(g, 0) >= c for g, c in hist)
        for hist in _satisfying_histograms(policy)
    )
