"""Per-agent sorting state machine.

Each record in the sorting list is an autonomous agent.  An agent reacts
to messages only: a trigger impulse starts it, neighbor keys drive its
evaluations, swap outcomes and neighbor updates keep it honest, and it
suspends itself once it is ordered with both neighbors.  The functions in
this module are the decision rules; :class:`Agent` wires them to a mailbox.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .keys import Direction, KeyValue, in_order


class Status(enum.Enum):
    IDLE = "idle"
    SORTING = "sorting"
    SUSPENDED = "suspended"


class Side(enum.Enum):
    PREV = "prev"
    NEXT = "next"


class AgentAction(enum.Enum):
    """Exactly one action comes out of every decision point."""

    IGNORE_TRIGGER = "ignore_trigger"
    SET_PREV_SORTED = "set_prev_sorted"
    SET_NEXT_SORTED = "set_next_sorted"
    PROPOSE_SWAP_WITH_PREV = "propose_swap_with_prev"
    PROPOSE_SWAP_WITH_NEXT = "propose_swap_with_next"
    PROPOSE_AROUND_PIVOT = "propose_around_pivot"
    SUSPEND = "suspend"
    WAIT = "wait"


class SwapKind(enum.Enum):
    """Classification of an agent's neighborhood demand."""

    NONE = "none"
    PREV_ONLY = "prev_only"
    NEXT_ONLY = "next_only"
    AROUND_PIVOT = "around_pivot"


class ProtocolFault(RuntimeError):
    """An agent was asked to do something its state forbids."""


# ---------------------------------------------------------------------------
# Messages
# ---------------------------------------------------------------------------

ENVIRONMENT_ID = 0  # sender id for impulses and arbitration verdicts


@dataclass(frozen=True, slots=True)
class Trigger:
    sender: int
    key_attribute: str


@dataclass(frozen=True, slots=True)
class KeyExchange:
    sender: int
    key_value: KeyValue
    position: int


@dataclass(frozen=True, slots=True)
class NeighborChanged:
    """A new neighbor introduces itself (or the slot beside you emptied)."""

    sender: int
    side: Side
    new_neighbor_id: int | None
    new_key: KeyValue | None


@dataclass(frozen=True, slots=True)
class SwapGranted:
    sender: int
    proposal_id: int


@dataclass(frozen=True, slots=True)
class SwapDenied:
    sender: int
    proposal_id: int
    reason: str


Message = Trigger | KeyExchange | NeighborChanged | SwapGranted | SwapDenied


# ---------------------------------------------------------------------------
# State
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class NeighborhoodSnapshot:
    """What an agent saw the last time it weighed both neighbors."""

    prev_key: KeyValue | None
    self_key: KeyValue
    next_key: KeyValue | None
    taken_at_step: int


@dataclass(slots=True)
class AgentState:
    id: int
    key_value: KeyValue
    prev_neighbor: int | None = None
    next_neighbor: int | None = None
    prev_sorted: bool = False
    next_sorted: bool = False
    position: int = 0
    snapshot: NeighborhoodSnapshot | None = None
    status: Status = Status.IDLE


# ---------------------------------------------------------------------------
# Decision rules
# ---------------------------------------------------------------------------


def should_suspend(state: AgentState) -> bool:
    """An agent stops once it is ordered with both neighbors."""
    return state.prev_sorted and state.next_sorted


def on_trigger(state: AgentState, key_attribute: str, attributes: frozenset[str] | set[str]) -> AgentAction:
    """Decide how to react to a sorting impulse.

    Unknown key attributes and singleton lists are ignored; boundary
    agents pre-set the flag for their missing side.
    """
    if state.status is not Status.IDLE:
        return AgentAction.IGNORE_TRIGGER
    if key_attribute not in attributes:
        return AgentAction.IGNORE_TRIGGER
    if state.prev_neighbor is None and state.next_neighbor is None:
        return AgentAction.IGNORE_TRIGGER
    if state.prev_neighbor is None:
        return AgentAction.SET_PREV_SORTED
    if state.next_neighbor is None:
        return AgentAction.SET_NEXT_SORTED
    return AgentAction.WAIT


def evaluate_prev(self_key: KeyValue, prev_key: KeyValue, direction: Direction) -> AgentAction:
    if in_order(prev_key, self_key, direction):
        return AgentAction.SET_PREV_SORTED
    return AgentAction.PROPOSE_SWAP_WITH_PREV


def evaluate_next(self_key: KeyValue, next_key: KeyValue, direction: Direction) -> AgentAction:
    if in_order(self_key, next_key, direction):
        return AgentAction.SET_NEXT_SORTED
    return AgentAction.PROPOSE_SWAP_WITH_NEXT


def classify_triple(
    prev_key: KeyValue | None,
    self_key: KeyValue,
    next_key: KeyValue | None,
    direction: Direction,
) -> SwapKind:
    """Which swap, if any, the neighborhood demands.

    Both sides strictly out of order means the two neighbors should be
    exchanged around this agent; absent sides count as ordered.
    """
    prev_bad = prev_key is not None and not in_order(prev_key, self_key, direction)
    next_bad = next_key is not None and not in_order(self_key, next_key, direction)
    if prev_bad and next_bad:
        return SwapKind.AROUND_PIVOT
    if prev_bad:
        return SwapKind.PREV_ONLY
    if next_bad:
        return SwapKind.NEXT_ONLY
    return SwapKind.NONE


def detect_deadlock(old: NeighborhoodSnapshot, new: NeighborhoodSnapshot) -> bool:
    """True when two consecutive observations are identical.

    An unchanged neighborhood across evaluation cycles means every party
    is waiting on a conflicting demand.
    """
    if old.taken_at_step >= new.taken_at_step:
        raise ProtocolFault("snapshots compared out of order")
    return (
        old.prev_key == new.prev_key
        and old.self_key == new.self_key
        and old.next_key == new.next_key
    )


def resolve_deadlock(state: AgentState) -> AgentAction:
    """Break a deadlock by prioritizing the swap with the preceding agent.

    The next-side demand stays pending (its flag is left false) so it is
    re-examined after the preceding swap goes through.
    """
    if state.prev_neighbor is None:
        raise ProtocolFault(f"agent {state.id} cannot resolve a deadlock without a preceding neighbor")
    return AgentAction.PROPOSE_SWAP_WITH_PREV


def on_neighbor_changed(state: AgentState, side: Side, new_key: KeyValue, direction: Direction) -> AgentAction:
    """A neighbor moved in next to a (possibly suspended) agent.

    Clears the sorted flag for that side, resumes sorting and re-runs the
    side evaluation against the new key.
    """
    if side is Side.PREV:
        state.prev_sorted = False
    else:
        state.next_sorted = False
    state.status = Status.SORTING
    if side is Side.PREV:
        return evaluate_prev(state.key_value, new_key, direction)
    return evaluate_next(state.key_value, new_key, direction)


# ---------------------------------------------------------------------------
# Stateful wrapper
# ---------------------------------------------------------------------------

_PROPOSALS = {
    SwapKind.PREV_ONLY: AgentAction.PROPOSE_SWAP_WITH_PREV,
    SwapKind.NEXT_ONLY: AgentAction.PROPOSE_SWAP_WITH_NEXT,
    SwapKind.AROUND_PIVOT: AgentAction.PROPOSE_AROUND_PIVOT,
}


@dataclass(slots=True)
class HandlerResult:
    """What a delivered message caused: actions plus bookkeeping for the trace."""

    actions: list[AgentAction] = field(default_factory=list)
    deadlock: bool = False
    evaluated: SwapKind | None = None
    stale: bool = False


class Agent:
    """One self-sorting agent: state, last-known neighbor keys, decisions.

    Agents never touch each other; everything they learn arrives as a
    message and everything they want leaves as an action for the engine
    to carry out.
    """

    __slots__ = ("state", "attributes", "direction", "known_prev_key", "known_next_key")

    def __init__(
        self,
        agent_id: int,
        key_value: KeyValue,
        attributes: frozenset[str] | set[str],
        direction: Direction,
    ) -> None:
        self.state = AgentState(id=agent_id, key_value=key_value)
        self.attributes = frozenset(attributes)
        self.direction = direction
        self.known_prev_key: KeyValue | None = None
        self.known_next_key: KeyValue | None = None

    # -- message handlers ---------------------------------------------------

    def handle(self, message: Message, step: int) -> HandlerResult:
        if isinstance(message, Trigger):
            return self.handle_trigger(message.key_attribute)
        if isinstance(message, KeyExchange):
            return self.handle_key_exchange(message.sender, message.key_value, step)
        if isinstance(message, NeighborChanged):
            return self.handle_neighbor_changed(message.side, message.new_neighbor_id, message.new_key, step)
        if isinstance(message, SwapGranted):
            return self.handle_swap_outcome(step, denied=False)
        if isinstance(message, SwapDenied):
            return self.handle_swap_outcome(step, denied=True)
        raise ProtocolFault(f"unhandled message type {type(message).__name__}")

    def handle_trigger(self, key_attribute: str) -> HandlerResult:
        action = on_trigger(self.state, key_attribute, self.attributes)
        if action is AgentAction.IGNORE_TRIGGER:
            return HandlerResult(actions=[action])
        self.state.status = Status.SORTING
        if action is AgentAction.SET_PREV_SORTED:
            self.state.prev_sorted = True
        elif action is AgentAction.SET_NEXT_SORTED:
            self.state.next_sorted = True
        return HandlerResult(actions=[action])

    def handle_key_exchange(self, sender: int, key: KeyValue, step: int) -> HandlerResult:
        if sender == self.state.prev_neighbor:
            self.known_prev_key = key
        elif sender == self.state.next_neighbor:
            self.known_next_key = key
        else:
            # Sender moved away before this was delivered.
            return HandlerResult(stale=True)
        return self.reevaluate(step)

    def handle_neighbor_changed(
        self, side: Side, new_neighbor_id: int | None, new_key: KeyValue | None, step: int
    ) -> HandlerResult:
        if side is Side.PREV:
            self.state.prev_neighbor = new_neighbor_id
            self.known_prev_key = new_key
        else:
            self.state.next_neighbor = new_neighbor_id
            self.known_next_key = new_key
        if new_neighbor_id is None:
            # Pushed to a boundary: nothing left to compare on that side.
            if side is Side.PREV:
                self.state.prev_sorted = True
            else:
                self.state.next_sorted = True
            return self.reevaluate(step)
        on_neighbor_changed(self.state, side, new_key, self.direction)
        return self.reevaluate(step)

    def handle_swap_outcome(self, step: int, denied: bool) -> HandlerResult:
        if self.state.status is not Status.SORTING:
            return HandlerResult()
        return self.reevaluate(step)

    # -- evaluation ---------------------------------------------------------

    def cache_complete(self) -> bool:
        prev_ok = self.state.prev_neighbor is None or self.known_prev_key is not None
        next_ok = self.state.next_neighbor is None or self.known_next_key is not None
        return prev_ok and next_ok

    def reevaluate(self, step: int) -> HandlerResult:
        """Weigh both sides and decide on at most one demand.

        Runs only while sorting and once both neighbor keys are known.
        Captures a neighborhood snapshot whenever a demand exists on a
        two-sided neighborhood; two identical snapshots in a row mean the
        agent is deadlocked and falls back to swapping with its
        preceding neighbor.
        """
        state = self.state
        if state.status is not Status.SORTING or not self.cache_complete():
            return HandlerResult(actions=[AgentAction.WAIT])

        result = HandlerResult()
        prev_key = self.known_prev_key if state.prev_neighbor is not None else None
        next_key = self.known_next_key if state.next_neighbor is not None else None

        prev_bad = False
        next_bad = False
        if prev_key is not None:
            prev_bad = (
                evaluate_prev(state.key_value, prev_key, self.direction)
                is AgentAction.PROPOSE_SWAP_WITH_PREV
            )
            state.prev_sorted = not prev_bad
        if next_key is not None:
            next_bad = (
                evaluate_next(state.key_value, next_key, self.direction)
                is AgentAction.PROPOSE_SWAP_WITH_NEXT
            )
            state.next_sorted = not next_bad

        if prev_bad and next_bad:
            kind = SwapKind.AROUND_PIVOT
        elif prev_bad:
            kind = SwapKind.PREV_ONLY
        elif next_bad:
            kind = SwapKind.NEXT_ONLY
        else:
            kind = SwapKind.NONE
        result.evaluated = kind

        if kind is SwapKind.NONE:
            if should_suspend(state):
                state.status = Status.SUSPENDED
                result.actions.append(AgentAction.SUSPEND)
            return result

        action = _PROPOSALS[kind]
        if state.prev_neighbor is not None and state.next_neighbor is not None:
            snapshot = NeighborhoodSnapshot(prev_key, state.key_value, next_key, step)
            previous = state.snapshot
            state.snapshot = snapshot
            if (
                previous is not None
                and previous.taken_at_step < step
                and detect_deadlock(previous, snapshot)
                and kind is SwapKind.AROUND_PIVOT
            ):
                result.deadlock = True
                action = resolve_deadlock(state)
        result.actions.append(action)
        return result
