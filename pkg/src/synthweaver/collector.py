"""Trajectory collection with in-flight task refinement.

For each task the agent oracle picks one action per step until it answers
(`none`), gives up (`stop`), or exhausts the step budget. After every
executed step a checker oracle may rewrite the task to match what the site
actually supports; a mechanical stall detector feeds that check.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal
from typing import Any, Callable

from .actions import Action, ActionKind, ELEMENT_KINDS, render_action
from .config import RunConfig
from .errors import ElementNotFound, SchemaViolation
from .model import (
    ConflictTrigger,
    Observation,
    Step,
    Task,
    Trajectory,
    classify_terminal,
)
from .oracle import (
    NextActionReply,
    OracleClient,
    RefineTaskReply,
    RenderedPrompt,
    TemplateName,
    render,
)
from .promptvars import element_lines, history_hint, img_info, page_context, state_action_block

EventHook = Callable[[str, dict[str, Any]], None]


def _noop_event(_kind: str, _data: dict[str, Any]) -> None:
    return None


def normalize_url(url: str) -> str:
    """Loop signatures compare URLs without fragments or trailing slashes."""
    return url.split("#", 1)[0].rstrip("/")


def error_signature(url: str, error: str) -> tuple[str, str]:
    first_line = error.strip().splitlines()[0] if error.strip() else ""
    return (normalize_url(url), first_line)


@dataclass
class StallDetector:
    """Flags no-op streaks and repeated (url, error) signatures."""

    noop_threshold: int
    repeat_threshold: int
    noop_streak: int = 0
    signatures: dict[tuple[str, str], int] = field(default_factory=dict)

    def record(self, *, changed: bool, url: str, error: str | None) -> bool:
        """Record one executed step; True when a stall fired."""
        if changed:
            self.reset()
            return False
        self.noop_streak += 1
        fired = self.noop_streak >= self.noop_threshold
        if error:
            sig = error_signature(url, error)
            count = self.signatures.get(sig, 0) + 1
            self.signatures[sig] = count
            if count >= self.repeat_threshold:
                fired = True
        if fired:
            self.reset()
        return fired

    def reset(self) -> None:
        self.noop_streak = 0
        self.signatures.clear()


_MISSING_ARGS_WORDS = ("missing", "insufficient", "parameter")


def classify_trigger(stalled: bool, analysis: str) -> ConflictTrigger:
    if stalled:
        return ConflictTrigger.STALL
    lowered = analysis.lower()
    if any(word in lowered for word in _MISSING_ARGS_WORDS):
        return ConflictTrigger.MISSING_ARGS
    return ConflictTrigger.EXISTS_UI


@dataclass(frozen=True)
class StepOutcome:
    changed: bool
    error: str | None


class Collector:
    """Collects trajectories; safe to share across worker threads because all
    mutable episode state is local to collect_trajectory."""

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

    # ------------------------------------------------------------------
    # next-action selection
    # ------------------------------------------------------------------

    def _next_action_prompt(
        self, task: Task, obs: Observation, history: tuple[Step, ...]
    ) -> RenderedPrompt:
        return render(
            TemplateName.NEXT_ACTION,
            {
                "high_level_task": task.text,
                "url": obs.url,
                "page_context": page_context(obs),
                "elements": element_lines(obs.elements),
                "img_info": img_info(obs),
                "hint_for_history": history_hint(history),
                "previous_state_action": state_action_block(history),
            },
            images=(obs.screenshot_ref,) if obs.screenshot_ref else (),
        )

    def next_action(
        self, task: Task, obs: Observation, history: tuple[Step, ...], *, site: str
    ) -> tuple[NextActionReply, Decimal]:
        """Pick the next action; one corrective re-ask on a bad element ref."""
        prompt = self._next_action_prompt(task, obs, history)
        reply = self.oracle.call(prompt, site=site, stage="collect")
        cost = reply.cost_usd
        parsed: NextActionReply = reply.parsed
        action = parsed.action
        if action.kind in ELEMENT_KINDS and not obs.has_element(action.element_id):
            correction = RenderedPrompt(
                template=prompt.template,
                text=(
                    f"{prompt.text}\n\nYour previous choice referenced element id "
                    f"[{action.element_id}], which is not on the current page. Choose "
                    "again using only the element ids listed above."
                ),
                variables=prompt.variables,
                images=prompt.images,
            )
            retry = self.oracle.call(correction, site=site, stage="collect")
            cost += retry.cost_usd
            parsed = retry.parsed
        return parsed, cost

    # ------------------------------------------------------------------
    # task refinement check
    # ------------------------------------------------------------------

    def check_refine(
        self,
        task: Task,
        history: tuple[Step, ...],
        obs_after: Observation,
        *,
        site: str,
        stalled: bool,
    ) -> tuple[RefineTaskReply, Decimal]:
        window = history[-self.config.context_window :]
        previous = [ev.prior_text for ev in task.lineage]
        prompt = render(
            TemplateName.REFINE_TASK,
            {
                "current_high_level_task": task.text,
                "previous_high_level_tasks": (
                    "\n".join(f"- {t}" for t in previous) if previous else "(none)"
                ),
                "hint_for_history": history_hint(window, stalled=stalled),
                "previous_state_action": state_action_block(window),
                "curr_url": obs_after.url,
                "curr_state_context": page_context(obs_after),
                "img_info": img_info(obs_after),
            },
        )
        reply = self.oracle.call(prompt, site=site, stage="collect")
        return reply.parsed, reply.cost_usd

    # ------------------------------------------------------------------
    # episode loop
    # ------------------------------------------------------------------

    def collect_trajectory(self, task: Task, session: Any, *, site: str) -> Trajectory:
        cfg = self.config
        steps: list[Step] = []
        cost = Decimal("0")
        stall = StallDetector(
            noop_threshold=cfg.stall_noop_threshold,
            repeat_threshold=cfg.loop_repeat_threshold,
        )
        refine_count = 0

        while len(steps) < cfg.step_budget:
            obs = session.observe()
            window = tuple(steps[-cfg.context_window :])
            reply, call_cost = self.next_action(task, obs, window, site=site)
            cost += call_cost
            action = reply.action
            step = Step(
                index=len(steps),
                observation=obs,
                action=action,
                task_snapshot=task.text,
                reasoning=reply.reasoning,
                state_summary=reply.state_summary,
            )
            steps.append(step)
            if action.kind in (ActionKind.NONE, ActionKind.STOP):
                break
            outcome = self._execute(session, obs, action)
            stalled = stall.record(changed=outcome.changed, url=obs.url, error=outcome.error)
            self.on_event(
                "collect.step",
                {
                    "site": site,
                    "task_id": task.id,
                    "index": step.index,
                    "action": render_action(action),
                    "changed": outcome.changed,
                    "error": outcome.error,
                    "stalled": stalled,
                },
            )
            if refine_count < cfg.max_refines_per_task:
                obs_after = session.observe()
                check, check_cost = self.check_refine(
                    task, tuple(steps), obs_after, site=site, stalled=stalled
                )
                cost += check_cost
                if check.need_to_refine:
                    trigger = classify_trigger(stalled, check.analysis)
                    task = task.refined(step.index, check.high_level_task, trigger)
                    refine_count += 1
                    stall.reset()
                    self.on_event(
                        "collect.refined",
                        {
                            "site": site,
                            "task_id": task.id,
                            "step_index": step.index,
                            "trigger": trigger.value,
                            "text": task.text,
                        },
                    )

        terminal = classify_terminal(tuple(steps), cfg.step_budget)
        return Trajectory(
            task=task,
            steps=tuple(steps),
            terminal=terminal,
            refine_count=refine_count,
            cost_usd=cost,
        )

    def _execute(self, session: Any, obs: Observation, action: Action) -> StepOutcome:
        try:
            outcome = session.execute(action)
        except ElementNotFound as exc:
            return StepOutcome(changed=False, error=str(exc))
        return StepOutcome(changed=outcome.changed, error=outcome.error)

    # ------------------------------------------------------------------
    # site-level driver
    # ------------------------------------------------------------------

    def collect_site(
        self,
        tasks: list[Task],
        session_factory: Callable[[], Any],
        *,
        site: str,
    ) -> tuple[list[Trajectory], list[dict[str, Any]]]:
        """Collect every task on a fresh session; failures become records."""
        trajectories: list[Trajectory] = []
        failures: list[dict[str, Any]] = []
        for task in tasks:
            result = self.collect_one(task, session_factory, site=site)
            if isinstance(result, Trajectory):
                trajectories.append(result)
            else:
                failures.append(result)
        return trajectories, failures

    def collect_one(
        self, task: Task, session_factory: Callable[[], Any], *, site: str
    ) -> Trajectory | dict[str, Any]:
        try:
            return self.collect_trajectory(task, session_factory(), site=site)
        except SchemaViolation as exc:
            self.on_event(
                "collect.failed", {"site": site, "task_id": task.id, "error": str(exc)}
            )
            return {"site": site, "task_id": task.id, "error": str(exc)}
