"""The shared positional structure agents sort themselves within.

Slots are 1-based.  Agents are appended before sorting starts; once the
trigger is dispatched the membership is sealed and all position changes
flow through granted :class:`SwapProposal` applications.  A temp slot
backs the three-step move used when swaps are applied from concurrent
contexts.
"""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass


class SealedListError(RuntimeError):
    """Membership changes are rejected once sorting has been triggered."""


class TransientStateError(RuntimeError):
    """The slot array was observed in the middle of a temp-slot move."""


class RoutingError(KeyError):
    """A message or proposal referenced an unknown agent."""


class StaleProposalError(RuntimeError):
    """A proposal was applied after the slots it described had changed."""


class ProposalKind(enum.Enum):
    ADJACENT = "adjacent"
    AROUND_PIVOT = "around_pivot"


@dataclass(frozen=True, slots=True)
class SwapProposal:
    """A requested exchange of two slots.

    ``slots_involved`` are the slots whose occupants move; an
    around-pivot proposal additionally depends on the pivot slot between
    them, captured by ``footprint``.  ``expected`` pins the occupants the
    proposer believes are in place -- the proposal is stale once any of
    them has moved.
    """

    proposal_id: int
    proposer: int
    kind: ProposalKind
    slots_involved: tuple[int, int]
    target_position: int
    expected: tuple[tuple[int, int], ...]  # (slot, agent id) pairs
    version: int

    @property
    def footprint(self) -> tuple[int, ...]:
        a, b = self.slots_involved
        if self.kind is ProposalKind.AROUND_PIVOT:
            return (a, a + 1, b)
        return (a, b)

    @property
    def rank(self) -> tuple[int, int]:
        """Arbitration order: leftmost slot first, then lowest proposer id."""
        return (min(self.slots_involved), self.proposer)


@dataclass(frozen=True, slots=True)
class SwapOutcome:
    """What an applied swap changed."""

    kind: ProposalKind
    slot_a: int
    slot_b: int
    agent_at_a: int  # occupant of slot_a after the swap
    agent_at_b: int
    pivot: int | None
    version: int


class SortingList:
    """1-based slot array with arbitration support.

    All mutating operations are linearizable: a single re-entrant lock
    makes each call atomic, which is the only synchronization contract
    concurrent agents get.
    """

    def __init__(self) -> None:
        self._slots: list[int | None] = [None]  # index 0 unused
        self._position_of: dict[int, int] = {}
        self.temp_slot: int | None = None
        self.version = 0
        self.sealed = False
        self._lock = threading.RLock()
        self._next_proposal_id = 1

    def __len__(self) -> int:
        return len(self._slots) - 1

    # -- membership ----------------------------------------------------------

    def insert(self, agent_id: int) -> int:
        """Append an agent; returns its assigned 1-based position."""
        with self._lock:
            if self.sealed:
                raise SealedListError("sorting already triggered; the list is sealed")
            if agent_id in self._position_of:
                raise ValueError(f"agent {agent_id} already inserted")
            self._slots.append(agent_id)
            position = len(self._slots) - 1
            self._position_of[agent_id] = position
            return position

    def seal(self) -> None:
        with self._lock:
            self.sealed = True

    # -- lookups ---------------------------------------------------------------

    def occupant(self, position: int) -> int | None:
        self._check_range(position)
        return self._slots[position]

    def position_of(self, agent_id: int) -> int:
        try:
            return self._position_of[agent_id]
        except KeyError:
            raise RoutingError(f"unknown agent {agent_id}") from None

    def neighbors_of(self, position: int) -> tuple[int | None, int | None]:
        """(preceding agent, following agent); None at the boundaries."""
        with self._lock:
            self._check_range(position)
            prev_id = self._slots[position - 1] if position > 1 else None
            next_id = self._slots[position + 1] if position < len(self) else None
            return prev_id, next_id

    def snapshot_order(self) -> list[int]:
        """Agent ids in slot order.  Refuses mid-move observations."""
        with self._lock:
            if self.temp_slot is not None or any(s is None for s in self._slots[1:]):
                raise TransientStateError("slot array observed during a temp-slot move")
            return list(self._slots[1:])

    def _check_range(self, position: int) -> None:
        if not 1 <= position <= len(self):
            raise IndexError(f"position {position} out of range 1..{len(self)}")

    # -- proposals ----------------------------------------------------------

    def next_proposal_id(self) -> int:
        with self._lock:
            pid = self._next_proposal_id
            self._next_proposal_id += 1
            return pid

    def proposal_is_current(self, proposal: SwapProposal) -> bool:
        """Premise check: every slot the proposal depends on is unchanged.

        Keys never change, so unchanged occupants mean the ordering facts
        that justified the proposal still hold even if the list version
        has moved on elsewhere.
        """
        with self._lock:
            if proposal.version == self.version:
                return True
            return all(
                1 <= slot <= len(self) and self._slots[slot] == agent_id
                for slot, agent_id in proposal.expected
            )

    def arbitrate(
        self, proposals: list[SwapProposal]
    ) -> tuple[list[SwapProposal], list[tuple[SwapProposal, str]]]:
        """Partition proposals into a grantable set and denials.

        Stale proposals (list version moved since creation) are denied
        outright.  Among the rest, grants are chosen greedily from the
        leftmost minimum slot (ties to the lower proposer id) so that the
        granted set is pairwise slot-disjoint.
        """
        with self._lock:
            granted: list[SwapProposal] = []
            denied: list[tuple[SwapProposal, str]] = []
            taken: set[int] = set()
            for proposal in sorted(proposals, key=lambda p: (p.rank, p.proposal_id)):
                if proposal.version != self.version:
                    denied.append((proposal, "stale"))
                    continue
                footprint = proposal.footprint
                if any(slot in taken for slot in footprint):
                    denied.append((proposal, "conflict"))
                    continue
                taken.update(footprint)
                granted.append(proposal)
            return granted, denied

    # -- swap application -----------------------------------------------------

    def apply_swap(self, proposal: SwapProposal, concurrent: bool = False) -> SwapOutcome:
        """Exchange the two proposed slots; the pivot, if any, stays put.

        In concurrent mode the exchange runs the three-step temp-slot
        move (mover parked in the temp slot, its slot emptied, the
        counterpart relocated, the mover dropped into place).
        """
        with self._lock:
            if not self.proposal_is_current(proposal):
                raise StaleProposalError(f"proposal {proposal.proposal_id} is stale")
            a, b = proposal.slots_involved
            mover = self._slots[a]
            counterpart = self._slots[b]
            if concurrent:
                self._three_step_move(a, b)
            else:
                self._slots[a], self._slots[b] = counterpart, mover
            self._position_of[mover] = b
            self._position_of[counterpart] = a
            self.version += 1
            pivot = None
            if proposal.kind is ProposalKind.AROUND_PIVOT:
                pivot = self._slots[a + 1]
            return SwapOutcome(
                kind=proposal.kind,
                slot_a=a,
                slot_b=b,
                agent_at_a=counterpart,
                agent_at_b=mover,
                pivot=pivot,
                version=self.version,
            )

    def _three_step_move(self, a: int, b: int) -> None:
        mover = self._slots[a]
        assert self.temp_slot is None
        self.temp_slot = mover          # 1. mover parked in the temp slot,
        self._slots[a] = None           #    leaving its slot free
        self._midmove()
        self._slots[a] = self._slots[b]  # 2. counterpart takes the freed slot
        self._slots[b] = None
        self._midmove()
        self._slots[b] = self.temp_slot  # 3. mover lands in the vacated one
        self.temp_slot = None

    def _midmove(self) -> None:
        """Test hook: observe the transient states of a temp-slot move."""

    def affected_agents(self, outcome: SwapOutcome) -> list[int]:
        """Who must be told their neighborhood changed.

        Both moved agents always; the pivot of an around-pivot swap; plus
        whoever flanks the exchanged slots.
        """
        with self._lock:
            affected = [outcome.agent_at_a, outcome.agent_at_b]
            if outcome.pivot is not None:
                affected.append(outcome.pivot)
            left_flank = outcome.slot_a - 1
            right_flank = outcome.slot_b + 1
            if left_flank >= 1:
                affected.append(self._slots[left_flank])
            if right_flank <= len(self):
                affected.append(self._slots[right_flank])
            return affected


@dataclass(frozen=True, slots=True)
class Move:
    """An applicable exchange plus the demands it consumes and grants.

    An around-pivot move consumes the two adjacent demands pressing
    toward the pivot: the wider exchange is what actually satisfies
    them, each neighbor landing one slot past the one it asked for.
    """

    proposal: SwapProposal
    consumed: tuple[SwapProposal, ...]
    granted: tuple[SwapProposal, ...]


def build_proposal(
    sorting_list: SortingList,
    proposer: int,
    position: int,
    kind_code: str,
    prev_id: int | None,
    next_id: int | None,
) -> SwapProposal:
    """Materialize an agent's demand against its believed neighborhood.

    ``kind_code``: "P" swap with prev, "N" swap with next, "A" exchange
    the two neighbors around this agent.
    """
    i = position
    if kind_code == "P":
        kind = ProposalKind.ADJACENT
        slots = (i - 1, i)
        target = i - 1
        expected = ((i - 1, prev_id), (i, proposer))
    elif kind_code == "N":
        kind = ProposalKind.ADJACENT
        slots = (i, i + 1)
        target = i + 1
        expected = ((i, proposer), (i + 1, next_id))
    elif kind_code == "A":
        kind = ProposalKind.AROUND_PIVOT
        slots = (i - 1, i + 1)
        target = i
        expected = ((i - 1, prev_id), (i, proposer), (i + 1, next_id))
    else:
        raise ValueError(f"unknown proposal kind code {kind_code!r}")
    return SwapProposal(
        proposal_id=sorting_list.next_proposal_id(),
        proposer=proposer,
        kind=kind,
        slots_involved=slots,
        target_position=target,
        expected=expected,
        version=sorting_list.version,
    )


def match_pair(
    sorting_list: SortingList, proposals: dict[int, SwapProposal], position: int
) -> Move | None:
    """Adjacent exchange at (position, position+1): both occupants must demand it."""
    left = sorting_list.occupant(position)
    right = sorting_list.occupant(position + 1)
    p_left = proposals.get(left)
    p_right = proposals.get(right)
    wanted = (position, position + 1)
    if (
        p_left is not None
        and p_right is not None
        and p_left.kind is ProposalKind.ADJACENT
        and p_right.kind is ProposalKind.ADJACENT
        and p_left.slots_involved == wanted
        and p_right.slots_involved == wanted
    ):
        return Move(p_left, consumed=(p_left, p_right), granted=(p_left, p_right))
    return None


def match_around(
    sorting_list: SortingList, proposals: dict[int, SwapProposal], pivot_pos: int
) -> Move | None:
    """Around-pivot exchange: the pivot demands it and both neighbors press toward it."""
    pivot = sorting_list.occupant(pivot_pos)
    p_pivot = proposals.get(pivot)
    if (
        p_pivot is None
        or p_pivot.kind is not ProposalKind.AROUND_PIVOT
        or p_pivot.slots_involved != (pivot_pos - 1, pivot_pos + 1)
    ):
        return None
    left = sorting_list.occupant(pivot_pos - 1)
    right = sorting_list.occupant(pivot_pos + 1)
    p_left = proposals.get(left)
    p_right = proposals.get(right)
    if (
        p_left is not None
        and p_right is not None
        and p_left.kind is ProposalKind.ADJACENT
        and p_right.kind is ProposalKind.ADJACENT
        and p_left.slots_involved == (pivot_pos - 1, pivot_pos)
        and p_right.slots_involved == (pivot_pos, pivot_pos + 1)
    ):
        return Move(p_pivot, consumed=(p_pivot, p_left, p_right), granted=(p_pivot,))
    return None


def find_moves_at(
    sorting_list: SortingList,
    proposals: dict[int, SwapProposal],
    positions: "set[int] | range",
) -> list[Move]:
    """All applicable exchanges touching the given candidate positions."""
    moves: list[Move] = []
    n = len(sorting_list)
    for position in sorted(set(positions)):
        if 1 <= position < n:
            move = match_pair(sorting_list, proposals, position)
            if move is not None:
                moves.append(move)
    for position in sorted(set(positions)):
        if 2 <= position <= n - 1:
            move = match_around(sorting_list, proposals, position)
            if move is not None:
                moves.append(move)
    return moves
