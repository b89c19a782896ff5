"""Post-hoc trajectory refinement: keep, reorder-and-repair, or drop.

A judge oracle reads a step-indexed summary of each finished trajectory and
returns an edit program. Applying the edits either yields a cleaned
trajectory that ends in a final `none` answer, or a drop record.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from decimal import Decimal
from typing import Any, Callable

from .actions import ActionKind, make_action, render_action
from .config import RunConfig
from .errors import EditContractViolation, SchemaViolation
from .model import Step, Terminal, Trajectory
from .oracle import (
    OracleClient,
    RefineDecision,
    RefineTrajectoryReply,
    TemplateName,
    render,
)

EventHook = Callable[[str, dict[str, Any]], None]


def _noop_event(_kind: str, _data: dict[str, Any]) -> None:
    return None


def summarize_trajectory(trajectory: Trajectory) -> str:
    """Step-indexed text block the judge reads; indices match edit orders."""
    lines = [
        f"Length of trajectory: {len(trajectory.steps)}",
        f"High-level task: {trajectory.task.text}",
    ]
    for step in trajectory.steps:
        summary = step.state_summary or step.observation.url or "(no summary)"
        wire = render_action(step.action)
        lines.append(f"State {step.index}: {summary}")
        lines.append(f"Action {step.index}: {wire}")
    return "\n".join(lines)


def apply_edits(
    trajectory: Trajectory, reply: RefineTrajectoryReply
) -> Trajectory | None:
    """Apply a validated edit program; None means the trajectory is dropped.

    Raises EditContractViolation when the edited step list would not end in
    a final non-empty `none`, or retains a terminal action mid-sequence.
    """
    if reply.decision is RefineDecision.DROP:
        return None
    if reply.decision is RefineDecision.KEEP:
        last = trajectory.steps[-1].action
        if last.kind is not ActionKind.NONE or not last.value:
            raise EditContractViolation("kept trajectory does not end in a final answer")
        return trajectory

    retained = [trajectory.steps[i] for i in reply.order]
    if not retained:
        raise EditContractViolation("refine retained no steps")
    final_task = trajectory.task.text
    if reply.modify_end:
        last = retained[-1]
        retained[-1] = replace(
            last,
            action=make_action(ActionKind.NONE, None, reply.final_none_value),
        )
    elif reply.append_end:
        last = retained[-1]
        if last.action.kind in (ActionKind.NONE, ActionKind.STOP):
            raise EditContractViolation(
                "append_end after a terminal action would leave it mid-sequence"
            )
        retained.append(
            Step(
                index=len(retained),
                observation=last.observation,
                action=make_action(ActionKind.NONE, None, reply.final_none_value),
                task_snapshot=final_task,
            )
        )
    for position, step in enumerate(retained[:-1]):
        if step.action.kind in (ActionKind.NONE, ActionKind.STOP):
            raise EditContractViolation(
                f"terminal action retained mid-sequence at position {position}"
            )
    last = retained[-1]
    if last.action.kind is not ActionKind.NONE or not last.action.value:
        raise EditContractViolation("edited trajectory does not end in a final answer")
    reindexed = tuple(
        step if step.index == i else replace(step, index=i)
        for i, step in enumerate(retained)
    )
    return Trajectory(
        task=trajectory.task,
        steps=reindexed,
        terminal=Terminal.COMPLETED_NONE,
        refine_count=trajectory.refine_count,
        cost_usd=trajectory.cost_usd,
    )


@dataclass(frozen=True)
class RefineOutcome:
    trajectory_id: str
    site: str
    decision: str
    score: int | None
    refined: Trajectory | None
    drop_reason: str
    cost_usd: Decimal


class Refiner:
    def __init__(
        self,
        oracle: OracleClient,
        config: RunConfig,
        *,
        on_event: EventHook = _noop_event,
    ) -> None:
        self.oracle = oracle
        self.config = config
        self.on_event = on_event

    def refine_trajectory(self, trajectory: Trajectory, *, site: str) -> RefineOutcome:
        """Judge one trajectory; judge failures degrade to drops, never raise."""
        prompt = render(
            TemplateName.REFINE_TRAJECTORY,
            {
                "trajectory": summarize_trajectory(trajectory),
                # Extra variable: lets scripted mocks address one trajectory.
                "high_level_task": trajectory.task.text,
            },
        )
        cost = Decimal("0")
        try:
            reply = self.oracle.call(
                prompt,
                site=site,
                stage="refine",
                context={
                    "k": len(trajectory.steps),
                    "expected_task": trajectory.task.text,
                },
            )
        except SchemaViolation:
            return self._drop(trajectory, site, None, "unparseable judge reply", cost)
        cost += reply.cost_usd
        parsed: RefineTrajectoryReply = reply.parsed
        if parsed.decision is RefineDecision.DROP:
            return self._drop(trajectory, site, parsed.score, parsed.drop_reason, cost)
        try:
            refined = apply_edits(trajectory, parsed)
        except EditContractViolation as exc:
            return self._drop(trajectory, site, parsed.score, str(exc), cost)
        self.on_event(
            "refine.decision",
            {
                "site": site,
                "trajectory_id": trajectory.id,
                "decision": parsed.decision.value,
                "score": parsed.score,
                "kept_steps": len(refined.steps) if refined else 0,
            },
        )
        return RefineOutcome(
            trajectory_id=trajectory.id,
            site=site,
            decision=parsed.decision.value,
            score=parsed.score,
            refined=refined,
            drop_reason="",
            cost_usd=cost,
        )

    def _drop(
        self,
        trajectory: Trajectory,
        site: str,
        score: int | None,
        reason: str,
        cost: Decimal,
    ) -> RefineOutcome:
        self.on_event(
            "refine.drop",
            {"site": site, "trajectory_id": trajectory.id, "reason": reason},
        )
        return RefineOutcome(
            trajectory_id=trajectory.id,
            site=site,
            decision="drop",
            score=score,
            refined=None,
            drop_reason=reason,
            cost_usd=cost,
        )
