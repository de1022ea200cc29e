"""Bipartite matching with preference-ordered candidates (Kuhn's algorithm).

Left vertices are processed in index order and try their candidates in the
given order, displacing earlier matches only when those can rebind. The
result is a maximum matching; when no two left vertices share candidates it
degenerates to "everyone gets their first free preference".
"""

from __future__ import annotations

__all__ = ["maximum_matching"]


def maximum_matching(candidates: list[list[int]], n_right: int) -> list[int]:
    """Match each left vertex to one of its candidates; -1 when impossible.

    ``candidates[i]`` lists right-vertex indices in preference order.
    Deterministic for fixed inputs.
    """
    match_right = [-1] * n_right
    match_left = [-1] * len(candidates)

    def augment(i: int, seen: list[bool]) -> bool:
        for j in candidates[i]:
            if not seen[j]:
                seen[j] = True
                if match_right[j] == -1 or augment(match_right[j], seen):
                    match_right[j] = i
                    match_left[i] = j
                    return True
        return False

    for i in range(len(candidates)):
        augment(i, [False] * n_right)
    return match_left
