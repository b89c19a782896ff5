"""The ten atomic browser interactions and their bracketed wire grammar."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

from .errors import InvalidAction, MalformedAction


class ActionKind(str, Enum):
    """Interaction kinds; values double as wire keywords."""

    CLICK = "click"
    TYPE = "type"
    HOVER = "hover"
    PRESS = "press"
    SCROLL = "scroll"
    GOTO = "goto"
    GO_BACK = "go_back"
    GO_FORWARD = "go_forward"
    NONE = "none"
    STOP = "stop"


# Kinds that target an element; all others must not carry an element id.
ELEMENT_KINDS = frozenset({ActionKind.CLICK, ActionKind.TYPE, ActionKind.HOVER})

# Kinds whose value must be non-empty on the wire.
VALUE_REQUIRED_KINDS = frozenset(
    {ActionKind.TYPE, ActionKind.SCROLL, ActionKind.GOTO, ActionKind.NONE, ActionKind.STOP}
)

# Kinds whose grammar has no value slot at all.
_NO_VALUE_KINDS = frozenset(
    {ActionKind.CLICK, ActionKind.HOVER, ActionKind.GO_BACK, ActionKind.GO_FORWARD}
)

SCROLL_DIRECTIONS = ("up", "down")


@dataclass(frozen=True)
class Action:
    """One atomic browser interaction.

    low_level_instruction is an annotation for prompts and logs; it is
    excluded from equality so the wire round-trip is the identity.
    """

    kind: ActionKind
    element_id: int | None = None
    value: str = ""
    low_level_instruction: str = field(default="", compare=False)


def validate_action(action: Action) -> None:
    """Raise InvalidAction unless the action satisfies every invariant."""
    kind = action.kind
    if not isinstance(kind, ActionKind):
        raise InvalidAction(f"unknown action kind: {kind!r}")
    if kind in ELEMENT_KINDS:
        if not isinstance(action.element_id, int) or isinstance(action.element_id, bool):
            raise InvalidAction(f"{kind.value} requires an integer element_id")
        if action.element_id < 0:
            raise InvalidAction("element_id must be non-negative")
    elif action.element_id is not None:
        raise InvalidAction(f"{kind.value} must not carry an element_id")
    if not isinstance(action.value, str):
        raise InvalidAction("value must be a string")
    if "]" in action.value:
        # No escaping exists in the wire grammar.
        raise InvalidAction("value must not contain ']'")
    if kind in VALUE_REQUIRED_KINDS and not action.value:
        raise InvalidAction(f"{kind.value} requires a non-empty value")
    if kind in _NO_VALUE_KINDS and action.value:
        raise InvalidAction(f"{kind.value} carries no value slot")
    if kind is ActionKind.SCROLL and action.value not in SCROLL_DIRECTIONS:
        raise InvalidAction("scroll value must be 'up' or 'down'")


_ARG = r"\[([^\]]*)\]"
_ARGUMENT_PATTERNS: dict[ActionKind, re.Pattern[str]] = {
    ActionKind.CLICK: re.compile(_ARG, re.DOTALL),
    ActionKind.HOVER: re.compile(_ARG, re.DOTALL),
    ActionKind.TYPE: re.compile(_ARG + r"\s*" + _ARG, re.DOTALL),
    ActionKind.PRESS: re.compile(_ARG, re.DOTALL),
    ActionKind.SCROLL: re.compile(_ARG, re.DOTALL),
    ActionKind.GOTO: re.compile(_ARG, re.DOTALL),
    ActionKind.GO_BACK: re.compile(r""),
    ActionKind.GO_FORWARD: re.compile(r""),
    ActionKind.NONE: re.compile(_ARG, re.DOTALL),
    ActionKind.STOP: re.compile(_ARG, re.DOTALL),
}

_HEAD = re.compile(r"([a-z_]+)(?:\s+(.*))?", re.DOTALL)


def parse_action(text: str) -> Action:
    """Parse a wire string into an Action; raise MalformedAction otherwise."""
    if not isinstance(text, str):
        raise MalformedAction(f"action must be a string, got {type(text).__name__}")
    head = _HEAD.fullmatch(text.strip())
    if head is None:
        raise MalformedAction(f"unrecognized action syntax: {text!r}")
    kind_word, rest = head.group(1), head.group(2) or ""
    try:
        kind = ActionKind(kind_word)
    except ValueError:
        raise MalformedAction(f"unknown action kind: {kind_word!r}") from None
    args = _ARGUMENT_PATTERNS[kind].fullmatch(rest)
    if args is None:
        raise MalformedAction(f"arguments do not match the {kind.value} grammar: {text!r}")

    element_id: int | None = None
    value = ""
    if kind in ELEMENT_KINDS:
        raw_id = args.group(1)
        if not raw_id.isdigit():
            raise MalformedAction(f"element_id must be a non-negative integer: {raw_id!r}")
        element_id = int(raw_id)
        if kind is ActionKind.TYPE:
            value = args.group(2)
    elif kind not in (ActionKind.GO_BACK, ActionKind.GO_FORWARD):
        value = args.group(1)

    action = Action(kind=kind, element_id=element_id, value=value)
    try:
        validate_action(action)
    except InvalidAction as exc:
        raise MalformedAction(str(exc)) from None
    return action


def render_action(action: Action) -> str:
    """Render an Action to its canonical wire string."""
    validate_action(action)
    parts = [action.kind.value]
    if action.kind in ELEMENT_KINDS:
        parts.append(f"[{action.element_id}]")
        if action.kind is ActionKind.TYPE:
            parts.append(f"[{action.value}]")
    elif action.kind not in (ActionKind.GO_BACK, ActionKind.GO_FORWARD):
        parts.append(f"[{action.value}]")
    return " ".join(parts)


def make_action(
    kind: ActionKind | str,
    element_id: int | None = None,
    value: str = "",
    low_level_instruction: str = "",
) -> Action:
    """Build and validate an Action from loosely typed parts."""
    if not isinstance(kind, ActionKind):
        try:
            kind = ActionKind(str(kind).strip().lower())
        except ValueError:
            raise InvalidAction(f"unknown action kind: {kind!r}") from None
    action = Action(
        kind=kind,
        element_id=element_id,
        value=value,
        low_level_instruction=low_level_instruction,
    )
    validate_action(action)
    return action
