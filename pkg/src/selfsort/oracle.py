"""Independent correctness oracle for engine runs.

The reference sort is Python's stable sort driven by the same key
comparator the agents use, so the two orders can only differ where the
protocol is genuinely free: inside classes of equal keys.
"""

from __future__ import annotations

from functools import cmp_to_key
from typing import Callable, Sequence, TypeVar

from .keys import Direction, KeyValue, canonical_token, directed_compare

T = TypeVar("T")


def oracle_sort(
    keys: Sequence[T],
    direction: Direction = Direction.ASCENDING,
    key: Callable[[T], KeyValue] | None = None,
) -> list[T]:
    """Ground-truth order: stable comparison sort, new list, input untouched."""
    extract = key or (lambda item: item)

    def compare(a: T, b: T) -> int:
        return directed_compare(extract(a), extract(b), direction)

    return sorted(keys, key=cmp_to_key(compare))


def inversions(keys: Sequence[KeyValue], direction: Direction = Direction.ASCENDING) -> int:
    """Number of index pairs out of order; equal pairs never count.

    Quadratic on purpose: this is the potential function the protocol
    must strictly decrease, so it stays brute-force and independent.
    """
    count = 0
    n = len(keys)
    for i in range(n):
        left = keys[i]
        for j in range(i + 1, n):
            if directed_compare(left, keys[j], direction) > 0:
                count += 1
    return count


class MultisetMismatchError(AssertionError):
    """The two orders do not even hold the same keys; a permutation
    invariant was broken upstream of the comparison."""


def equivalent_up_to_ties(
    actual: Sequence[tuple[int, KeyValue]],
    expected: Sequence[tuple[int, KeyValue]],
) -> bool:
    """True when both orders agree positionally up to equal-key classes.

    The protocol never promises how equal keys settle among themselves,
    so agents may trade places within a tie class; any disagreement in
    the key sequence itself is a real failure.
    """
    if len(actual) != len(expected):
        raise MultisetMismatchError(
            f"length mismatch: {len(actual)} vs {len(expected)}"
        )
    actual_tokens = sorted(canonical_token(k) for _, k in actual)
    expected_tokens = sorted(canonical_token(k) for _, k in expected)
    if actual_tokens != expected_tokens:
        raise MultisetMismatchError("key multisets differ")
    if {i for i, _ in actual} != {i for i, _ in expected}:
        raise MultisetMismatchError("agent id sets differ")
    return all(
        directed_compare(a_key, e_key, Direction.ASCENDING) == 0
        for (_, a_key), (_, e_key) in zip(actual, expected)
    )
