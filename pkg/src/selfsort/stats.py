"""Aggregate counters collected over one engine run."""

from __future__ import annotations

from dataclasses import dataclass, fields


@dataclass(slots=True)
class RunStats:
    swaps: int = 0
    messages: int = 0
    steps: int = 0
    deadlocks_resolved: int = 0
    initial_inversions: int = 0
    wall_time: float = 0.0

    def as_line(self) -> str:
        """Single-line key=value form for ``--stats`` output."""
        parts = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, float):
                parts.append(f"{f.name}={value:.6f}")
            else:
                parts.append(f"{f.name}={value}")
        return " ".join(parts)
