"""Domain records shared by every pipeline stage, plus their JSON forms."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from decimal import Decimal
from enum import Enum
from typing import Any

from .actions import Action, ActionKind, parse_action, render_action


class TaskType(str, Enum):
    INFORMATION_SEEKING = "information_seeking"
    SITE_NAVIGATION = "site_navigation"
    CONTENT_MODIFICATION = "content_modification"


class Terminal(str, Enum):
    COMPLETED_NONE = "completed_none"
    STOPPED_BY_AGENT = "stopped_by_agent"
    BUDGET_EXCEEDED = "budget_exceeded"


class ConflictTrigger(str, Enum):
    EXISTS_UI = "exists_ui"
    MISSING_ARGS = "missing_args"
    STALL = "stall"


@dataclass(frozen=True)
class Element:
    """One addressable node of a page's accessibility view."""

    id: int
    role: str
    name: str
    interactive: bool = True


@dataclass(frozen=True)
class Observation:
    """What the agent sees: current view only, never the full page."""

    url: str
    accessibility_tree: str
    elements: tuple[Element, ...] = ()
    screenshot_ref: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "elements", tuple(self.elements))

    def element_ids(self) -> frozenset[int]:
        return frozenset(e.id for e in self.elements)

    def has_element(self, element_id: int) -> bool:
        return any(e.id == element_id for e in self.elements)


def observation_fingerprint(obs: Observation) -> str:
    """Content hash of an observation; the screenshot ref is excluded so the
    simulator and the browser adapter share one change-detection rule."""
    payload = json.dumps(
        {
            "url": obs.url,
            "accessibility_tree": obs.accessibility_tree,
            "elements": [[e.id, e.role, e.name, e.interactive] for e in obs.elements],
        },
        sort_keys=True,
        ensure_ascii=False,
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class RefinementEvent:
    """One in-flight task rewrite: where it happened, what it replaced, why."""

    step_index: int
    prior_text: str
    trigger_reason: str


@dataclass(frozen=True)
class Task:
    """A high-level instruction plus its refinement lineage."""

    id: str
    text: str
    category: str
    task_type: TaskType
    lineage: tuple[RefinementEvent, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "lineage", tuple(self.lineage))

    def refined(self, step_index: int, new_text: str, trigger: ConflictTrigger) -> "Task":
        """Return a copy carrying new_text, recording the prior text in lineage."""
        event = RefinementEvent(step_index, self.text, trigger.value)
        return replace(self, text=new_text, lineage=self.lineage + (event,))


@dataclass(frozen=True)
class Step:
    """One (observation, action) pair with the task text in force at the time."""

    index: int
    observation: Observation
    action: Action
    task_snapshot: str
    reasoning: str = ""
    state_summary: str = ""


@dataclass(frozen=True)
class Trajectory:
    """A finished episode; `task` holds the final text and full lineage."""

    task: Task
    steps: tuple[Step, ...]
    terminal: Terminal
    refine_count: int
    cost_usd: Decimal = Decimal("0")

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple(self.steps))

    @property
    def id(self) -> str:
        return self.task.id


def classify_terminal(steps: tuple[Step, ...], step_budget: int) -> Terminal:
    """Terminal class as a pure function of the step sequence and budget."""
    if not steps:
        raise ValueError("cannot classify an empty step sequence")
    last = steps[-1].action
    if last.kind is ActionKind.NONE and last.value:
        return Terminal.COMPLETED_NONE
    if last.kind is ActionKind.STOP:
        return Terminal.STOPPED_BY_AGENT
    if len(steps) == step_budget:
        return Terminal.BUDGET_EXCEEDED
    raise ValueError("step sequence is not terminal: last action continues and budget remains")


@dataclass(frozen=True)
class InteractionTriplet:
    """before-observation, executed action, after-observation."""

    before: Observation
    action: Action
    after: Observation


@dataclass(frozen=True)
class TrainingExample:
    """One SFT record: windowed history, current observation, target action."""

    task_text: str
    history: tuple[tuple[Observation, Action], ...]
    current_observation: Observation
    target_action: Action

    def __post_init__(self) -> None:
        object.__setattr__(self, "history", tuple(tuple(pair) for pair in self.history))


# ======================================================================
# JSON forms
# ======================================================================

def element_to_dict(e: Element) -> dict[str, Any]:
    return {"id": e.id, "role": e.role, "name": e.name, "interactive": e.interactive}


def element_from_dict(d: dict[str, Any]) -> Element:
    return Element(id=d["id"], role=d["role"], name=d["name"], interactive=d["interactive"])


def observation_to_dict(obs: Observation) -> dict[str, Any]:
    return {
        "url": obs.url,
        "accessibility_tree": obs.accessibility_tree,
        "elements": [element_to_dict(e) for e in obs.elements],
        "screenshot_ref": obs.screenshot_ref,
    }


def observation_from_dict(d: dict[str, Any]) -> Observation:
    return Observation(
        url=d["url"],
        accessibility_tree=d["accessibility_tree"],
        elements=tuple(element_from_dict(e) for e in d["elements"]),
        screenshot_ref=d.get("screenshot_ref"),
    )


def task_to_dict(task: Task) -> dict[str, Any]:
    return {
        "id": task.id,
        "text": task.text,
        "category": task.category,
        "task_type": task.task_type.value,
        "lineage": [
            {
                "step_index": ev.step_index,
                "prior_text": ev.prior_text,
                "trigger_reason": ev.trigger_reason,
            }
            for ev in task.lineage
        ],
    }


def task_from_dict(d: dict[str, Any]) -> Task:
    return Task(
        id=d["id"],
        text=d["text"],
        category=d["category"],
        task_type=TaskType(d["task_type"]),
        lineage=tuple(
            RefinementEvent(ev["step_index"], ev["prior_text"], ev["trigger_reason"])
            for ev in d.get("lineage", [])
        ),
    )


def step_to_dict(step: Step) -> dict[str, Any]:
    # Actions cross file boundaries only as wire strings.
    return {
        "index": step.index,
        "observation": observation_to_dict(step.observation),
        "action": render_action(step.action),
        "low_level_instruction": step.action.low_level_instruction,
        "task_snapshot": step.task_snapshot,
        "reasoning": step.reasoning,
        "state_summary": step.state_summary,
    }


def step_from_dict(d: dict[str, Any]) -> Step:
    action = parse_action(d["action"])
    lli = d.get("low_level_instruction", "")
    if lli:
        action = replace(action, low_level_instruction=lli)
    return Step(
        index=d["index"],
        observation=observation_from_dict(d["observation"]),
        action=action,
        task_snapshot=d["task_snapshot"],
        reasoning=d.get("reasoning", ""),
        state_summary=d.get("state_summary", ""),
    )


def trajectory_to_dict(t: Trajectory) -> dict[str, Any]:
    return {
        "task": task_to_dict(t.task),
        "steps": [step_to_dict(s) for s in t.steps],
        "terminal": t.terminal.value,
        "refine_count": t.refine_count,
        "cost_usd": str(t.cost_usd),
    }


def trajectory_from_dict(d: dict[str, Any]) -> Trajectory:
    return Trajectory(
        task=task_from_dict(d["task"]),
        steps=tuple(step_from_dict(s) for s in d["steps"]),
        terminal=Terminal(d["terminal"]),
        refine_count=d["refine_count"],
        cost_usd=Decimal(d.get("cost_usd", "0")),
    )


def canonical_json(value: Any) -> str:
    """Stable serialization used wherever bytes feed a content hash."""
    return json.dumps(value, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
