"""Line-oriented wire encoding for protocol messages.

One message per line: ``VERB SP field SP field ... LF``.  Fields are
ASCII and never contain spaces; free text travels percent-encoded.  Key
values use a kind-tagged token (``N:59.60``, ``T:ADJEI%20Francis``,
``M:-``) shared with the trace format.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from urllib.parse import quote, unquote

from .agent import (
    KeyExchange,
    Message,
    NeighborChanged,
    Side,
    SwapDenied,
    SwapGranted,
    Trigger,
)
from .keys import KeyKind, KeyValue


class ProtocolError(ValueError):
    """A line did not match the wire grammar."""


def key_token(key: KeyValue) -> str:
    if key.kind is KeyKind.NUMERIC:
        return f"N:{key.numeric}"
    if key.kind is KeyKind.TEXT:
        return "T:" + quote(key.text, safe="")
    return "M:-"


def key_from_token(token: str) -> KeyValue:
    tag, _, body = token.partition(":")
    if tag == "N":
        try:
            return KeyValue.of_numeric(Decimal(body))
        except InvalidOperation as exc:
            raise ProtocolError(f"bad numeric key token {token!r}") from exc
    if tag == "T":
        return KeyValue.of_text(unquote(body))
    if tag == "M":
        return KeyValue.missing()
    raise ProtocolError(f"unknown key token {token!r}")


# Control frames used by the loopback transport alongside the protocol
# messages proper.


@dataclass(frozen=True, slots=True)
class ProposeFrame:
    """An agent submits a swap demand to the coordinator."""

    sender: int
    kind: str  # "P" swap with prev, "N" swap with next, "A" around pivot
    prev_id: int | None
    next_id: int | None


@dataclass(frozen=True, slots=True)
class ByeFrame:
    """Session close announcement after an agent suspends."""

    sender: int


WireDecodable = Message | ProposeFrame | ByeFrame

_SIDE_TOKENS = {Side.PREV: "P", Side.NEXT: "N"}
_SIDES = {"P": Side.PREV, "N": Side.NEXT}


def _opt_id(value: int | None) -> str:
    return "-" if value is None else str(value)


def _parse_opt_id(field: str, line: str) -> int | None:
    if field == "-":
        return None
    try:
        return int(field)
    except ValueError:
        raise ProtocolError(f"bad id field {field!r} in {line!r}") from None


def encode_wire(message: WireDecodable) -> str:
    """Render one message as a wire line (no terminator)."""
    if isinstance(message, Trigger):
        return f"HELLO {message.sender} {quote(message.key_attribute, safe='')}"
    if isinstance(message, KeyExchange):
        return f"KEY {message.sender} {key_token(message.key_value)} {message.position}"
    if isinstance(message, NeighborChanged):
        key = key_token(message.new_key) if message.new_key is not None else "-"
        return (
            f"NOTIFY {message.sender} {_SIDE_TOKENS[message.side]} "
            f"{_opt_id(message.new_neighbor_id)} {key}"
        )
    if isinstance(message, SwapGranted):
        return f"GRANT {message.sender} {message.proposal_id}"
    if isinstance(message, SwapDenied):
        return f"DENY {message.sender} {message.proposal_id} {quote(message.reason, safe='')}"
    if isinstance(message, ProposeFrame):
        return (
            f"PROPOSE {message.sender} {message.kind} "
            f"{_opt_id(message.prev_id)} {_opt_id(message.next_id)}"
        )
    if isinstance(message, ByeFrame):
        return f"BYE {message.sender}"
    raise ProtocolError(f"cannot encode {type(message).__name__}")


def decode_wire(line: str) -> WireDecodable:
    """Parse one wire line; raises :class:`ProtocolError` naming bad verbs."""
    stripped = line.rstrip("\r\n")
    if not stripped or not stripped.isascii():
        raise ProtocolError(f"unparseable line {line!r}")
    fields = stripped.split(" ")
    verb, args = fields[0], fields[1:]
    try:
        if verb == "HELLO" and len(args) == 2:
            return Trigger(int(args[0]), unquote(args[1]))
        if verb == "KEY" and len(args) == 3:
            return KeyExchange(int(args[0]), key_from_token(args[1]), int(args[2]))
        if verb == "NOTIFY" and len(args) == 4:
            side = _SIDES.get(args[1])
            if side is None:
                raise ProtocolError(f"bad side {args[1]!r} in {line!r}")
            new_id = _parse_opt_id(args[2], stripped)
            new_key = None if args[3] == "-" else key_from_token(args[3])
            return NeighborChanged(int(args[0]), side, new_id, new_key)
        if verb == "GRANT" and len(args) == 2:
            return SwapGranted(int(args[0]), int(args[1]))
        if verb == "DENY" and len(args) == 3:
            return SwapDenied(int(args[0]), int(args[1]), unquote(args[2]))
        if verb == "PROPOSE" and len(args) == 4:
            if args[1] not in ("P", "N", "A"):
                raise ProtocolError(f"bad proposal kind {args[1]!r} in {line!r}")
            return ProposeFrame(
                int(args[0]),
                args[1],
                _parse_opt_id(args[2], stripped),
                _parse_opt_id(args[3], stripped),
            )
        if verb == "BYE" and len(args) == 1:
            return ByeFrame(int(args[0]))
    except ProtocolError:
        raise
    except ValueError as exc:
        raise ProtocolError(f"malformed {verb} line {line!r}") from exc
    if verb in ("HELLO", "KEY", "NOTIFY", "GRANT", "DENY", "PROPOSE", "BYE"):
        raise ProtocolError(f"wrong field count for {verb} in {line!r}")
    raise ProtocolError(verb)
