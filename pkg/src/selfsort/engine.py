"""Deterministic message-passing simulation of the self-sorting protocol.

The engine owns the mailboxes, the seeded scheduler and the trace.  Each
step delivers exactly one message to one agent; once every mailbox is
drained, the standing swap demands are matched up and applied as an
arbitration round.  An adjacent exchange goes through when both of its
occupants demand it.  An agent wedged between two out-of-order values
demands that its *neighbors* trade places instead; that wider exchange
goes through once both neighbors are pressing toward the agent, and it
satisfies their adjacent demands by moving each of them one slot further
than they asked.  Rounds that grant nothing deny every standing demand,
which forces the proposers to take a fresh look -- the mechanism by
which an agent notices its neighborhood has stopped changing and breaks
the deadlock in favor of its preceding side.
"""

from __future__ import annotations

import enum
import random
import time
from collections import deque
from dataclasses import dataclass

from .agent import (
    ENVIRONMENT_ID,
    Agent,
    AgentAction,
    HandlerResult,
    KeyExchange,
    Message,
    NeighborChanged,
    Side,
    Status,
    SwapDenied,
    SwapGranted,
    Trigger,
)
from .keys import Direction, KeyValue, canonical_token, in_order
from .oracle import inversions
from .slots import (
    Move,
    ProposalKind,
    RoutingError,
    SortingList,
    SwapOutcome,
    SwapProposal,
    build_proposal,
    find_moves_at,
)
from .stats import RunStats
from .wire import key_token


class Mode(enum.Enum):
    DETERMINISTIC = "deterministic"
    CONCURRENT = "concurrent"


class Transport(enum.Enum):
    IN_MEMORY = "in_memory"
    LOOPBACK = "loopback"


class EventKind(enum.Enum):
    TRIGGER = "Trigger"
    KEY_EXCHANGE = "KeyExchange"
    EVALUATE = "Evaluate"
    PROPOSE = "Propose"
    GRANT = "Grant"
    DENY = "Deny"
    SWAP = "Swap"
    NEIGHBOR_NOTIFY = "NeighborNotify"
    SUSPEND = "Suspend"
    DEADLOCK = "Deadlock"
    QUIESCENT = "Quiescent"


@dataclass(frozen=True, slots=True)
class TraceEvent:
    """One replayable line of an engine run."""

    step: int
    kind: EventKind
    payload: tuple[tuple[str, object], ...]

    def render(self) -> str:
        pairs = "\t".join(f"{k}={v}" for k, v in self.payload)
        if pairs:
            return f"{self.step}\t{self.kind.value}\t{pairs}"
        return f"{self.step}\t{self.kind.value}"


def render_trace(trace: list[TraceEvent]) -> str:
    """Trace file body: one event per line, LF endings."""
    return "".join(event.render() + "\n" for event in trace)


class TriggerStateError(RuntimeError):
    """Trigger dispatched twice, or a run started before any trigger."""


class SortRefusedError(RuntimeError):
    """The run could not start (too few records); not an engine failure."""


class NonTerminationError(RuntimeError):
    """The step budget ran out; carries the trace gathered so far."""

    def __init__(self, message: str, trace: list[TraceEvent] | None) -> None:
        super().__init__(message)
        self.trace = trace


class EngineStopped(RuntimeError):
    """step() was called after the terminal event."""


@dataclass(slots=True)
class RunConfig:
    seed: int = 1
    max_steps: int | None = None  # defaults to 50 * n^2 at run time
    mode: Mode = Mode.DETERMINISTIC
    direction: Direction = Direction.ASCENDING
    transport: Transport = Transport.IN_MEMORY
    collect_trace: bool = True
    check_invariants: bool = False

    def __post_init__(self) -> None:
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError("max_steps must be positive")
        if self.transport is Transport.LOOPBACK and self.mode is Mode.DETERMINISTIC:
            raise ValueError("the loopback transport requires concurrent mode")


@dataclass(slots=True)
class RunResult:
    order: list[tuple[int, KeyValue]]
    stats: RunStats
    trace: list[TraceEvent] | None
    ignored: bool = False


_ACTION_CODES = {
    AgentAction.PROPOSE_SWAP_WITH_PREV: "P",
    AgentAction.PROPOSE_SWAP_WITH_NEXT: "N",
    AgentAction.PROPOSE_AROUND_PIVOT: "A",
}


class Engine:
    """Single-threaded, seeded simulation (deterministic mode)."""

    def __init__(self, config: RunConfig | None = None) -> None:
        self.config = config or RunConfig()
        if self.config.mode is not Mode.DETERMINISTIC:
            raise ValueError(
                "Engine runs deterministic mode; use selfsort.concurrent for threads"
            )
        self.list = SortingList()
        self.agents: dict[int, Agent] = {}
        self.inboxes: dict[int, deque[Message]] = {}
        self.proposals: dict[int, SwapProposal] = {}  # proposer id -> standing demand
        self.stats = RunStats()
        self.trace: list[TraceEvent] | None = [] if self.config.collect_trace else None
        self._ready: list[int] = []
        self._ready_set: set[int] = set()
        self._pending_messages = 0
        self._dirty_positions: set[int] = set()
        self._rng = random.Random(self.config.seed)
        self._event_no = 0
        self._next_agent_id = 1
        self._triggered = False
        self._finished = False
        self._initial_tokens: list[tuple] = []

    # -- setup ----------------------------------------------------------------

    def add_agent(
        self,
        key_value: KeyValue,
        attributes: frozenset[str] | set[str] | None = None,
        agent_id: int | None = None,
    ) -> int:
        """Insert one record as an agent; returns its id."""
        if agent_id is None:
            agent_id = self._next_agent_id
        self._next_agent_id = max(self._next_agent_id, agent_id + 1)
        agent = Agent(agent_id, key_value, attributes or {"VAL"}, self.config.direction)
        position = self.list.insert(agent_id)
        agent.state.position = position
        prev_id, _ = self.list.neighbors_of(position)
        agent.state.prev_neighbor = prev_id
        if prev_id is not None:
            self.agents[prev_id].state.next_neighbor = agent_id
        self.agents[agent_id] = agent
        self.inboxes[agent_id] = deque()
        return agent_id

    # -- messaging ------------------------------------------------------------

    def post_message(self, to: int, message: Message) -> None:
        if to not in self.inboxes:
            raise RoutingError(f"unknown destination {to}")
        self.inboxes[to].append(message)
        self.stats.messages += 1
        self._pending_messages += 1
        if to not in self._ready_set:
            self._ready_set.add(to)
            self._ready.append(to)

    def trigger(self, key_attribute: str) -> None:
        """Seal the list and broadcast the sorting impulse to every agent."""
        if self._triggered:
            raise TriggerStateError("trigger already dispatched")
        if len(self.list) < 2:
            raise SortRefusedError("cannot sort fewer than two records")
        self.list.seal()
        self._triggered = True
        keys = [self.agents[a].state.key_value for a in self.list.snapshot_order()]
        self.stats.initial_inversions = inversions(keys, self.config.direction)
        self._initial_tokens = sorted(canonical_token(k) for k in keys)
        for agent_id in sorted(self.agents):
            self.post_message(agent_id, Trigger(ENVIRONMENT_ID, key_attribute))

    # -- scheduling -----------------------------------------------------------

    def is_quiescent(self) -> bool:
        return (
            self._pending_messages == 0
            and not self.proposals
            and bool(self.agents)
            and all(a.state.status is Status.SUSPENDED for a in self.agents.values())
        )

    def max_steps(self) -> int:
        if self.config.max_steps is not None:
            return self.config.max_steps
        n = len(self.list)
        return 50 * n * n

    def step(self) -> list[TraceEvent]:
        """Run one scheduler quantum; returns the events it emitted."""
        if self._finished:
            raise EngineStopped("the run already reached its terminal event")
        if self.stats.steps >= self.max_steps():
            raise NonTerminationError(
                f"no quiescence within {self.max_steps()} steps", self.trace
            )
        self.stats.steps += 1
        if self._pending_messages:
            return self._deliver_one()
        if self.proposals:
            return self._arbitration_round()
        return self._terminal_check()

    def run_until_quiescent(self) -> RunResult:
        """Loop step() to the terminal event; the trace then ends in Quiescent."""
        if not self._triggered:
            raise TriggerStateError("dispatch the trigger before running")
        started = time.perf_counter()
        while not self._finished:
            self.step()
        self.stats.wall_time = time.perf_counter() - started
        ignored = all(a.state.status is Status.IDLE for a in self.agents.values())
        order = [] if ignored else self.final_order()
        return RunResult(order=order, stats=self.stats, trace=self.trace, ignored=ignored)

    def run(self, key_attribute: str) -> RunResult:
        self.trigger(key_attribute)
        return self.run_until_quiescent()

    def final_order(self) -> list[tuple[int, KeyValue]]:
        return [
            (agent_id, self.agents[agent_id].state.key_value)
            for agent_id in self.list.snapshot_order()
        ]

    # -- event plumbing ---------------------------------------------------------

    def _emit(self, kind: EventKind, *payload: tuple[str, object]) -> TraceEvent | None:
        self._event_no += 1
        if self.trace is None:
            return None
        event = TraceEvent(self._event_no, kind, payload)
        self.trace.append(event)
        return event

    # -- delivery ---------------------------------------------------------------

    def _pick_ready(self) -> int:
        """Seeded uniform choice over agents with pending deliveries."""
        while True:
            index = self._rng.randrange(len(self._ready))
            agent_id = self._ready[index]
            if self.inboxes[agent_id]:
                return agent_id
            # Lazily drop entries whose inbox has drained.
            last = self._ready.pop()
            if index < len(self._ready):
                self._ready[index] = last
            self._ready_set.discard(agent_id)

    def _deliver_one(self) -> list[TraceEvent]:
        agent_id = self._pick_ready()
        message = self.inboxes[agent_id].popleft()
        self._pending_messages -= 1
        agent = self.agents[agent_id]
        events: list[TraceEvent | None] = []
        if self.trace is not None:
            events.append(self._delivery_event(agent_id, message))
        result = agent.handle(message, self.stats.steps)
        if type(message) is Trigger and result.actions[0] is not AgentAction.IGNORE_TRIGGER:
            self._share_key_with_neighbors(agent)
        events.extend(self._apply_result(agent, result))
        return [e for e in events if e is not None]

    def _share_key_with_neighbors(self, agent: Agent) -> None:
        """A triggered agent passes its key to whoever flanks it."""
        state = agent.state
        exchange = KeyExchange(state.id, state.key_value, state.position)
        for neighbor in (state.prev_neighbor, state.next_neighbor):
            if neighbor is not None:
                self.post_message(neighbor, exchange)

    def _delivery_event(self, agent_id: int, message: Message) -> TraceEvent | None:
        if isinstance(message, Trigger):
            return self._emit(
                EventKind.TRIGGER, ("agent", agent_id), ("attribute", message.key_attribute)
            )
        if isinstance(message, KeyExchange):
            return self._emit(
                EventKind.KEY_EXCHANGE,
                ("agent", agent_id),
                ("sender", message.sender),
                ("key", key_token(message.key_value)),
            )
        if isinstance(message, NeighborChanged):
            return self._emit(
                EventKind.NEIGHBOR_NOTIFY,
                ("agent", agent_id),
                ("side", message.side.value),
                ("neighbor", message.new_neighbor_id if message.new_neighbor_id is not None else "-"),
                ("key", key_token(message.new_key) if message.new_key is not None else "-"),
            )
        if isinstance(message, SwapGranted):
            return self._emit(
                EventKind.GRANT, ("agent", agent_id), ("proposal", message.proposal_id)
            )
        return self._emit(
            EventKind.DENY,
            ("agent", agent_id),
            ("proposal", message.proposal_id),
            ("reason", message.reason),
        )

    def _apply_result(self, agent: Agent, result: HandlerResult) -> list[TraceEvent | None]:
        events: list[TraceEvent | None] = []
        agent_id = agent.state.id
        if result.evaluated is not None and self.trace is not None:
            events.append(
                self._emit(
                    EventKind.EVALUATE,
                    ("agent", agent_id),
                    ("kind", result.evaluated.value),
                    ("prev_sorted", int(agent.state.prev_sorted)),
                    ("next_sorted", int(agent.state.next_sorted)),
                )
            )
        if result.deadlock:
            self.stats.deadlocks_resolved += 1
            if self.trace is not None:
                events.append(
                    self._emit(
                        EventKind.DEADLOCK,
                        ("agent", agent_id),
                        ("prev", key_token(agent.known_prev_key)),
                        ("self", key_token(agent.state.key_value)),
                        ("next", key_token(agent.known_next_key)),
                    )
                )
        for action in result.actions:
            if action in _ACTION_CODES:
                events.append(self._register_proposal(agent, action))
            elif action is AgentAction.SUSPEND:
                self._retract_proposal(agent_id)
                if self.trace is not None:
                    events.append(self._emit(EventKind.SUSPEND, ("agent", agent_id)))
        return events

    # -- proposals ----------------------------------------------------------------

    def _register_proposal(self, agent: Agent, action: AgentAction) -> TraceEvent | None:
        state = agent.state
        proposal = build_proposal(
            self.list,
            state.id,
            state.position,
            _ACTION_CODES[action],
            state.prev_neighbor,
            state.next_neighbor,
        )
        standing = self.proposals.get(state.id)
        if (
            standing is not None
            and standing.kind is proposal.kind
            and standing.slots_involved == proposal.slots_involved
            and standing.expected == proposal.expected
        ):
            return None  # identical demand already registered
        self.proposals[state.id] = proposal
        self._dirty_positions.add(state.position)
        if self.trace is None:
            return None
        return self._emit(
            EventKind.PROPOSE,
            ("proposal", proposal.proposal_id),
            ("proposer", state.id),
            ("kind", proposal.kind.value),
            ("slots", f"{proposal.slots_involved[0]}-{proposal.slots_involved[1]}"),
        )

    def _retract_proposal(self, agent_id: int) -> None:
        standing = self.proposals.pop(agent_id, None)
        if standing is not None:
            self._dirty_positions.update(standing.footprint)

    # -- arbitration rounds ---------------------------------------------------------

    def _arbitration_round(self) -> list[TraceEvent]:
        if self.config.check_invariants:
            # All mailboxes are drained here, so caches and flags are settled.
            self._check_invariants()
        events: list[TraceEvent | None] = []
        for proposal in self._stale_proposals():
            events.append(self._deny(proposal, "stale"))
        moves = self._find_moves()
        granted_any = False
        taken: set[int] = set()
        for move in sorted(moves, key=lambda m: (m.proposal.rank, m.proposal.proposal_id)):
            if any(slot in taken for slot in move.proposal.footprint):
                # Competing matched moves never share slots (one demand per
                # agent), but stay defensive and retry next round.
                self._dirty_positions.update(move.proposal.footprint)
                continue
            taken.update(move.proposal.footprint)
            granted_any = True
            events.extend(self._apply_move(move))
        if not granted_any:
            # Nothing can progress: force every proposer to take a fresh
            # look so unchanged neighborhoods get noticed.
            for proposer in sorted(self.proposals):
                events.append(self._deny(self.proposals[proposer], "stall"))
        return [e for e in events if e is not None]

    def _stale_proposals(self) -> list[SwapProposal]:
        stale = []
        for proposer in sorted(self.proposals):
            proposal = self.proposals[proposer]
            if not self.list.proposal_is_current(proposal):
                stale.append(proposal)
        return stale

    def _find_moves(self) -> list[Move]:
        """Match standing demands into applicable exchanges.

        Only neighborhoods touched since the last round can yield new
        matches, so the scan is restricted to recently dirty positions.
        """
        candidates: set[int] = set()
        for position in self._dirty_positions:
            candidates.update((position - 1, position, position + 1))
        self._dirty_positions.clear()
        return find_moves_at(self.list, self.proposals, candidates)

    def _apply_move(self, move: Move) -> list[TraceEvent | None]:
        events: list[TraceEvent | None] = []
        outcome = self.list.apply_swap(move.proposal)
        self.stats.swaps += 1
        for proposal in move.consumed:
            self.proposals.pop(proposal.proposer, None)
        self.agents[outcome.agent_at_a].state.position = outcome.slot_a
        self.agents[outcome.agent_at_b].state.position = outcome.slot_b
        self._dirty_positions.update(
            range(max(1, outcome.slot_a - 1), min(len(self.list), outcome.slot_b + 1) + 1)
        )
        if self.trace is not None:
            events.append(
                self._emit(
                    EventKind.SWAP,
                    ("kind", outcome.kind.value),
                    ("slots", f"{outcome.slot_a}-{outcome.slot_b}"),
                    ("agent_a", outcome.agent_at_a),
                    ("agent_b", outcome.agent_at_b),
                    ("pivot", outcome.pivot if outcome.pivot is not None else "-"),
                    ("version", outcome.version),
                )
            )
        self._notify_after(outcome)
        for proposal in move.granted:
            self.post_message(
                proposal.proposer, SwapGranted(ENVIRONMENT_ID, proposal.proposal_id)
            )
        return events

    def _notify_after(self, outcome: SwapOutcome) -> None:
        """NeighborChanged fan-out for one applied swap."""
        a, b = outcome.slot_a, outcome.slot_b
        full_update = [self.list.occupant(a), self.list.occupant(b)]
        if outcome.pivot is not None:
            full_update.append(outcome.pivot)
        for agent_id in full_update:
            position = self.list.position_of(agent_id)
            self._post_neighbor_changed(agent_id, position, Side.PREV)
            self._post_neighbor_changed(agent_id, position, Side.NEXT)
        if a - 1 >= 1:
            self._post_neighbor_changed(self.list.occupant(a - 1), a - 1, Side.NEXT)
        if b + 1 <= len(self.list):
            self._post_neighbor_changed(self.list.occupant(b + 1), b + 1, Side.PREV)

    def _post_neighbor_changed(self, agent_id: int, position: int, side: Side) -> None:
        neighbor_pos = position - 1 if side is Side.PREV else position + 1
        if 1 <= neighbor_pos <= len(self.list):
            neighbor_id = self.list.occupant(neighbor_pos)
            key = self.agents[neighbor_id].state.key_value
            message = NeighborChanged(neighbor_id, side, neighbor_id, key)
        else:
            message = NeighborChanged(ENVIRONMENT_ID, side, None, None)
        self.post_message(agent_id, message)

    def _deny(self, proposal: SwapProposal, reason: str) -> TraceEvent | None:
        self._retract_proposal(proposal.proposer)
        self.post_message(
            proposal.proposer, SwapDenied(ENVIRONMENT_ID, proposal.proposal_id, reason)
        )
        if self.trace is None:
            return None
        return self._emit(
            EventKind.DENY,
            ("proposal", proposal.proposal_id),
            ("proposer", proposal.proposer),
            ("reason", reason),
        )

    def _terminal_check(self) -> list[TraceEvent]:
        statuses = {a.state.status for a in self.agents.values()}
        if statuses == {Status.IDLE}:
            # Every agent ignored the impulse; report it, do not error.
            self._finished = True
            return []
        if statuses == {Status.SUSPENDED}:
            if self.config.check_invariants:
                self._check_invariants()
            self._finished = True
            event = self._emit(
                EventKind.QUIESCENT,
                ("swaps", self.stats.swaps),
                ("messages", self.stats.messages),
            )
            return [event] if event is not None else []
        raise RuntimeError(
            f"engine stalled with statuses {sorted(s.value for s in statuses)}"
        )

    # -- invariant hooks (used by tests) ---------------------------------------

    def _check_invariants(self) -> None:
        order = self.list.snapshot_order()
        tokens = sorted(canonical_token(self.agents[a].state.key_value) for a in order)
        assert tokens == self._initial_tokens, "key multiset changed"
        direction = self.config.direction
        for index, agent_id in enumerate(order, start=1):
            state = self.agents[agent_id].state
            assert state.position == index, "agent position out of sync with its slot"
            if state.status is Status.SUSPENDED:
                prev_id, next_id = self.list.neighbors_of(index)
                if prev_id is not None:
                    assert in_order(
                        self.agents[prev_id].state.key_value, state.key_value, direction
                    ), "suspended agent out of order with its preceding neighbor"
                if next_id is not None:
                    assert in_order(
                        state.key_value, self.agents[next_id].state.key_value, direction
                    ), "suspended agent out of order with its following neighbor"


def sort_key_values(
    values: list[KeyValue],
    direction: Direction = Direction.ASCENDING,
    seed: int = 1,
    key_attribute: str = "VAL",
    collect_trace: bool = True,
    max_steps: int | None = None,
    check_invariants: bool = False,
) -> RunResult:
    """Convenience: one deterministic simulation over raw key values."""
    config = RunConfig(
        seed=seed,
        direction=direction,
        collect_trace=collect_trace,
        max_steps=max_steps,
        check_invariants=check_invariants,
    )
    engine = Engine(config)
    for value in values:
        engine.add_agent(value, {key_attribute})
    return engine.run(key_attribute)
