"""Comparable sort-key values: numeric, text, or missing.

Every value that flows through the engine -- agent keys, oracle inputs,
report columns -- is a :class:`KeyValue`.  The single comparator defined
here is shared by the agents and by the reference oracle so the two can
never drift apart.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from decimal import Decimal


class Direction(enum.Enum):
    """Sort direction requested by the triggering impulse."""

    ASCENDING = "ascending"
    DESCENDING = "descending"

    @classmethod
    def parse(cls, text: str) -> "Direction":
        normalized = text.strip().lower()
        if normalized in ("asc", "ascending"):
            return cls.ASCENDING
        if normalized in ("desc", "descending"):
            return cls.DESCENDING
        raise ValueError(f"unknown direction: {text!r}")


class KeyKind(enum.Enum):
    NUMERIC = "numeric"
    TEXT = "text"
    MISSING = "missing"


@dataclass(frozen=True, slots=True)
class KeyValue:
    """A parsed sort key.  Exactly one payload is populated, matching ``kind``."""

    kind: KeyKind
    numeric: Decimal | None = None
    text: str | None = None

    def __post_init__(self) -> None:
        if self.kind is KeyKind.NUMERIC:
            ok = self.numeric is not None and self.text is None
        elif self.kind is KeyKind.TEXT:
            ok = self.text is not None and self.numeric is None
        else:
            ok = self.numeric is None and self.text is None
        if not ok:
            raise ValueError(f"payload does not match kind {self.kind}")
        if self.numeric is not None and not self.numeric.is_finite():
            raise ValueError("numeric keys must be finite")

    @staticmethod
    def of_numeric(value: Decimal | int | float | str) -> "KeyValue":
        if isinstance(value, Decimal):
            dec = value
        else:
            # str() keeps the human-readable decimal form for floats.
            dec = Decimal(str(value))
        return KeyValue(KeyKind.NUMERIC, numeric=dec)

    @staticmethod
    def of_text(value: str) -> "KeyValue":
        return KeyValue(KeyKind.TEXT, text=value)

    @staticmethod
    def missing() -> "KeyValue":
        return _MISSING

    @property
    def is_missing(self) -> bool:
        return self.kind is KeyKind.MISSING

    def display(self) -> str:
        if self.kind is KeyKind.NUMERIC:
            return str(self.numeric)
        if self.kind is KeyKind.TEXT:
            return self.text or ""
        return "-"


_MISSING = KeyValue(KeyKind.MISSING)

# Cross-kind rank for the canonical (ascending) order: all numerics sort
# before all texts; missing values sort after everything.
_KIND_RANK = {KeyKind.NUMERIC: 0, KeyKind.TEXT: 1, KeyKind.MISSING: 2}


def compare_keys(a: KeyValue, b: KeyValue) -> int:
    """Canonical ascending comparison: -1, 0 or +1.

    Numerics compare by value, texts case-insensitively; equal-folding
    texts are an equal class (swapping them would never terminate).
    """
    ra, rb = _KIND_RANK[a.kind], _KIND_RANK[b.kind]
    if ra != rb:
        return -1 if ra < rb else 1
    if a.kind is KeyKind.NUMERIC:
        if a.numeric == b.numeric:
            return 0
        return -1 if a.numeric < b.numeric else 1
    if a.kind is KeyKind.TEXT:
        fa, fb = a.text.casefold(), b.text.casefold()
        if fa == fb:
            return 0
        return -1 if fa < fb else 1
    return 0  # missing vs missing


def directed_compare(a: KeyValue, b: KeyValue, direction: Direction) -> int:
    """Comparison under a sort direction.

    Missing values place after every present value in *both* directions;
    only the order of present values flips when descending.
    """
    if a.is_missing or b.is_missing:
        if a.is_missing and b.is_missing:
            return 0
        return 1 if a.is_missing else -1
    result = compare_keys(a, b)
    return result if direction is Direction.ASCENDING else -result


def in_order(first: KeyValue, second: KeyValue, direction: Direction) -> bool:
    """True when ``first`` may precede ``second`` (equal keys count as ordered)."""
    return directed_compare(first, second, direction) <= 0


def keys_equal(a: KeyValue, b: KeyValue) -> bool:
    """Comparator equality: the tie classes of the sort order."""
    return directed_compare(a, b, Direction.ASCENDING) == 0


def canonical_token(key: KeyValue) -> tuple:
    """Hashable form for multiset bookkeeping (value-equal keys collide)."""
    if key.kind is KeyKind.NUMERIC:
        return ("N", str(key.numeric.normalize()))
    if key.kind is KeyKind.TEXT:
        return ("T", key.text)
    return ("M",)
