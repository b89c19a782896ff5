"""Typed oracle replies and their strict schema validation.

Every reply is validated here, so invalid shapes (duplicate edit indices,
out-of-range scores, inconsistent yes/no fields) are never observable by the
pipeline stages downstream of the oracle client.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any

from ..actions import Action, ActionKind, make_action
from ..errors import InvalidAction, SchemaViolation
from .templates import TemplateName, UNINTERACTIVE_CATEGORY


class RefineDecision(str, Enum):
    KEEP = "keep"
    REFINE = "refine"
    DROP = "drop"


@dataclass(frozen=True)
class ProposedInteraction:
    """One exploration probe: click/type/hover on a concrete element."""

    kind: ActionKind
    element_id: int
    value: str
    low_level_instruction: str

    def to_action(self) -> Action:
        return make_action(
            self.kind, self.element_id, self.value, self.low_level_instruction
        )


@dataclass(frozen=True)
class CategorizationReply:
    analysis: str
    categories: dict[str, tuple[ProposedInteraction, ...]]
    uninteractive: tuple[int, ...]


@dataclass(frozen=True)
class TaskProposal:
    sub_instruction: str
    analysis: str
    high_level_instruction: str


@dataclass(frozen=True)
class NextActionReply:
    state_summary: str
    reasoning: str
    action: Action


@dataclass(frozen=True)
class RefineTaskReply:
    analysis: str
    need_to_refine: bool
    high_level_task: str


@dataclass(frozen=True)
class RefineTrajectoryReply:
    task: str
    score: int
    decision: RefineDecision
    order: tuple[int, ...]
    modify_end: bool
    append_end: bool
    final_none_value: str
    drop_reason: str
    modification_reason: str


DIVERSITY_SUBSCORE_KEYS = (
    "intent_variety",
    "action_diversity",
    "goal_coverage",
    "redundancy_minimization",
)


@dataclass(frozen=True)
class DiversityReply:
    score: int
    subscores: dict[str, int]
    analysis: str
    representative_examples: tuple[str, ...]


@dataclass(frozen=True)
class QualityReply:
    score: int
    analysis: str


# ======================================================================
# validation helpers
# ======================================================================

def _require(payload: dict[str, Any], key: str) -> Any:
    if key not in payload:
        raise SchemaViolation(f"missing required field {key!r}")
    return payload[key]


def _as_str(value: Any, key: str) -> str:
    if not isinstance(value, str):
        raise SchemaViolation(f"field {key!r} must be a string")
    return value


def _as_int(value: Any, key: str, lo: int | None = None, hi: int | None = None) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise SchemaViolation(f"field {key!r} must be an integer")
    if lo is not None and value < lo:
        raise SchemaViolation(f"field {key!r} below {lo}: {value}")
    if hi is not None and value > hi:
        raise SchemaViolation(f"field {key!r} above {hi}: {value}")
    return value


def _as_bool(value: Any, key: str) -> bool:
    if not isinstance(value, bool):
        raise SchemaViolation(f"field {key!r} must be true or false")
    return value


def _yes_no(value: Any, key: str) -> bool:
    text = _as_str(value, key).strip().lower()
    if text == "yes":
        return True
    if text == "no":
        return False
    raise SchemaViolation(f"field {key!r} must be 'yes' or 'no', got {value!r}")


# ======================================================================
# per-template parsers
# ======================================================================

def _parse_categorize(
    payload: dict[str, Any], context: dict[str, Any]
) -> CategorizationReply:
    analysis = _as_str(_require(payload, "Analysis"), "Analysis")
    raw = _require(payload, "Categorization")
    if not isinstance(raw, dict):
        raise SchemaViolation("Categorization must be an object")
    categories: dict[str, tuple[ProposedInteraction, ...]] = {}
    uninteractive: tuple[int, ...] = ()
    seen_ids: set[int] = set()
    for name, entries in raw.items():
        if name == UNINTERACTIVE_CATEGORY:
            if not isinstance(entries, list):
                raise SchemaViolation(f"{name} must be a list of element ids")
            uninteractive = tuple(_as_int(e, name) for e in entries)
            continue
        if not isinstance(entries, list):
            raise SchemaViolation(f"category {name!r} must be a list")
        parsed = []
        for entry in entries:
            if not isinstance(entry, dict):
                raise SchemaViolation(f"category {name!r} entries must be objects")
            kind_raw = _as_str(_require(entry, "action"), "action").strip().lower()
            try:
                kind = ActionKind(kind_raw)
            except ValueError:
                raise SchemaViolation(f"unknown action {kind_raw!r}") from None
            if kind not in (ActionKind.CLICK, ActionKind.TYPE, ActionKind.HOVER):
                raise SchemaViolation(f"category action must be click/type/hover, got {kind_raw!r}")
            element_id = _as_int(_require(entry, "element_id"), "element_id", lo=0)
            value = _as_str(entry.get("value", ""), "value")
            if kind is ActionKind.TYPE and not value:
                raise SchemaViolation(f"type proposal for element {element_id} needs a value")
            parsed.append(
                ProposedInteraction(
                    kind=kind,
                    element_id=element_id,
                    value=value,
                    low_level_instruction=_as_str(
                        entry.get("low-level_instruction", ""), "low-level_instruction"
                    ),
                )
            )
        categories[name] = tuple(parsed)
    for pid in [p.element_id for c in categories.values() for p in c] + list(uninteractive):
        if pid in seen_ids:
            raise SchemaViolation(f"element {pid} appears in two categories")
        seen_ids.add(pid)
    known = context.get("element_ids")
    if known is not None:
        known_set = set(known)
        phantom = sorted(seen_ids - known_set)
        if phantom:
            raise SchemaViolation(f"categorized element ids not on the page: {phantom}")
        uncovered = sorted(known_set - seen_ids)
        if uncovered:
            raise SchemaViolation(f"page elements left uncategorized: {uncovered}")
    return CategorizationReply(analysis=analysis, categories=categories, uninteractive=uninteractive)


def _parse_propose_task(payload: dict[str, Any]) -> TaskProposal:
    high = _as_str(_require(payload, "High-Level-Instruction"), "High-Level-Instruction")
    if not high.strip():
        raise SchemaViolation("High-Level-Instruction must be non-empty")
    return TaskProposal(
        sub_instruction=_as_str(_require(payload, "Sub-Instruction"), "Sub-Instruction"),
        analysis=_as_str(_require(payload, "Analysis"), "Analysis"),
        high_level_instruction=high,
    )


def _parse_next_action(payload: dict[str, Any]) -> NextActionReply:
    summary = _as_str(_require(payload, "state_observation_summary"), "state_observation_summary")
    reasoning = _as_str(_require(payload, "reasoning"), "reasoning")
    nxt = _require(payload, "next_action")
    if not isinstance(nxt, dict):
        raise SchemaViolation("next_action must be an object")
    lli = _as_str(nxt.get("low-level_instruction", ""), "low-level_instruction")
    raw_action = _require(nxt, "action")
    if not isinstance(raw_action, dict):
        raise SchemaViolation("next_action.action must be an object")
    kind_raw = _as_str(_require(raw_action, "type"), "type")
    element_raw = raw_action.get("element_id", "")
    element_id: int | None
    if element_raw in ("", None):
        element_id = None
    elif isinstance(element_raw, int) and not isinstance(element_raw, bool):
        element_id = element_raw
    else:
        raise SchemaViolation(f"element_id must be an integer or '', got {element_raw!r}")
    value = raw_action.get("value", "")
    if value is None:
        value = ""
    if not isinstance(value, str):
        raise SchemaViolation(f"value must be a string or '', got {value!r}")
    try:
        action = make_action(kind_raw, element_id, value, lli)
    except InvalidAction as exc:
        raise SchemaViolation(f"invalid next action: {exc}") from None
    return NextActionReply(state_summary=summary, reasoning=reasoning, action=action)


def _parse_refine_task(payload: dict[str, Any]) -> RefineTaskReply:
    analysis = _as_str(_require(payload, "Analysis"), "Analysis")
    need = _yes_no(_require(payload, "Need-to-Refine"), "Need-to-Refine")
    task = _as_str(_require(payload, "High-Level-Task"), "High-Level-Task")
    if need and not task.strip():
        raise SchemaViolation("Need-to-Refine=yes requires a non-empty High-Level-Task")
    if not need and task.strip():
        raise SchemaViolation("Need-to-Refine=no requires an empty High-Level-Task")
    return RefineTaskReply(analysis=analysis, need_to_refine=need, high_level_task=task.strip())


def _parse_refine_trajectory(
    payload: dict[str, Any], context: dict[str, Any]
) -> RefineTrajectoryReply:
    k = context.get("k")
    if not isinstance(k, int):
        raise SchemaViolation("refine_trajectory validation requires trajectory length k")
    task = _as_str(_require(payload, "task"), "task")
    expected = context.get("expected_task")
    if expected is not None and task != expected:
        raise SchemaViolation("task field must match the high-level task exactly")
    score = _as_int(_require(payload, "score"), "score", lo=0, hi=100)
    decision_raw = _as_str(_require(payload, "decision"), "decision").strip().lower()
    try:
        decision = RefineDecision(decision_raw)
    except ValueError:
        raise SchemaViolation(f"decision must be keep/refine/drop, got {decision_raw!r}") from None
    raw_order = _require(payload, "order")
    if not isinstance(raw_order, list):
        raise SchemaViolation("order must be a list of integers")
    order = tuple(_as_int(i, "order") for i in raw_order)
    for i in order:
        if i < 0 or i >= k:
            raise SchemaViolation(f"order index {i} out of range for K={k}")
    if len(set(order)) != len(order):
        raise SchemaViolation("order contains duplicate indices")
    modify_end = _as_bool(_require(payload, "modify_end"), "modify_end")
    append_end = _as_bool(_require(payload, "append_end"), "append_end")
    final_none = _as_str(_require(payload, "final_none_value"), "final_none_value")
    drop_reason = _as_str(_require(payload, "drop_reason"), "drop_reason")
    modification_reason = _as_str(
        _require(payload, "modification_reason"), "modification_reason"
    )
    if modify_end and append_end:
        raise SchemaViolation("modify_end and append_end are mutually exclusive")
    if decision is not RefineDecision.REFINE and (modify_end or append_end):
        raise SchemaViolation("modify_end/append_end apply only to refine")
    if decision is RefineDecision.KEEP and order != tuple(range(k)):
        raise SchemaViolation("keep requires the identity order [0..K-1]")
    if decision is RefineDecision.DROP:
        if order:
            raise SchemaViolation("drop requires an empty order")
        if not drop_reason.strip():
            raise SchemaViolation("drop requires a non-empty drop_reason")
        if final_none.strip():
            raise SchemaViolation("drop requires an empty final_none_value")
    else:
        if not final_none.strip():
            raise SchemaViolation(f"{decision.value} requires a non-empty final_none_value")
    return RefineTrajectoryReply(
        task=task,
        score=score,
        decision=decision,
        order=order,
        modify_end=modify_end,
        append_end=append_end,
        final_none_value=final_none,
        drop_reason=drop_reason,
        modification_reason=modification_reason,
    )


def _parse_diversity(payload: dict[str, Any]) -> DiversityReply:
    score = _as_int(_require(payload, "score"), "score", lo=0, hi=100)
    raw_sub = _require(payload, "subscores")
    if not isinstance(raw_sub, dict):
        raise SchemaViolation("subscores must be an object")
    if set(raw_sub) != set(DIVERSITY_SUBSCORE_KEYS):
        raise SchemaViolation(
            f"subscores must have exactly the keys {', '.join(DIVERSITY_SUBSCORE_KEYS)}"
        )
    subscores = {key: _as_int(raw_sub[key], key, lo=0, hi=25) for key in DIVERSITY_SUBSCORE_KEYS}
    if sum(subscores.values()) != score:
        raise SchemaViolation("score must equal the sum of the four subscores")
    examples = _require(payload, "representative_examples")
    if not isinstance(examples, list) or not all(isinstance(e, str) for e in examples):
        raise SchemaViolation("representative_examples must be a list of strings")
    return DiversityReply(
        score=score,
        subscores=subscores,
        analysis=_as_str(_require(payload, "analysis"), "analysis"),
        representative_examples=tuple(examples),
    )


def _parse_quality(payload: dict[str, Any]) -> QualityReply:
    return QualityReply(
        score=_as_int(_require(payload, "score"), "score", lo=0, hi=100),
        analysis=_as_str(_require(payload, "analysis"), "analysis"),
    )


def parse_reply(
    template: TemplateName, payload: Any, context: dict[str, Any] | None = None
) -> Any:
    """Dispatch strict validation for one template's reply payload."""
    if not isinstance(payload, dict):
        raise SchemaViolation("reply must be a JSON object")
    context = context or {}
    if template is TemplateName.CATEGORIZE:
        return _parse_categorize(payload, context)
    if template is TemplateName.PROPOSE_TASK:
        return _parse_propose_task(payload)
    if template is TemplateName.NEXT_ACTION:
        return _parse_next_action(payload)
    if template is TemplateName.REFINE_TASK:
        return _parse_refine_task(payload)
    if template is TemplateName.REFINE_TRAJECTORY:
        return _parse_refine_trajectory(payload, context)
    if template is TemplateName.JUDGE_DIVERSITY:
        return _parse_diversity(payload)
    if template is TemplateName.JUDGE_QUALITY:
        return _parse_quality(payload)
    raise SchemaViolation(f"no parser for template {template!r}")
