"""Exploration stage: categorize pages, probe elements, synthesize tasks.

Crawl order is breadth-first over discovered URLs. On each page the oracle
groups elements into functional categories; a seeded sampler picks a few
probes per category, each probe is executed from a restored page state, and
the resulting before/action/after triplet seeds one task proposal.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass
from decimal import Decimal
from typing import Any, Callable

from .actions import ActionKind, make_action, render_action
from .config import RunConfig, SiteSpec
from .errors import ElementNotFound, EmptyPlan, SchemaViolation
from .model import InteractionTriplet, Observation, Task, TaskType
from .oracle import (
    CategorizationReply,
    DiversityReply,
    OracleClient,
    ProposedInteraction,
    TemplateName,
    UNINTERACTIVE_CATEGORY,
    render,
)
from .promptvars import (
    describe_interaction,
    element_lines,
    page_context,
    task_examples_block,
    task_list_block,
)

EventHook = Callable[[str, dict[str, Any]], None]


def _noop_event(_kind: str, _data: dict[str, Any]) -> None:
    return None


@dataclass(frozen=True)
class TripletRecord:
    """A captured probe, linked to the task it produced (if any)."""

    id: str
    site: str
    category: str
    triplet: InteractionTriplet
    task_id: str | None


@dataclass(frozen=True)
class ExplorationResult:
    site: str
    tasks: tuple[Task, ...]
    triplets: tuple[TripletRecord, ...]
    pages_visited: int
    cost_usd: Decimal


class UrlPool:
    """FIFO frontier of (url, depth) pairs with de-duplication."""

    def __init__(self) -> None:
        self._queue: deque[tuple[str, int]] = deque()
        self._known: set[str] = set()

    def add(self, url: str, depth: int) -> bool:
        if url in self._known:
            return False
        self._known.add(url)
        self._queue.append((url, depth))
        return True

    def pop(self) -> tuple[str, int]:
        return self._queue.popleft()

    def __len__(self) -> int:
        return len(self._queue)


def categorize_page(
    oracle: OracleClient, obs: Observation, *, site: str
) -> tuple[CategorizationReply, Decimal]:
    """Ask the oracle to group the page's elements; enforce full coverage."""
    prompt = render(
        TemplateName.CATEGORIZE,
        {
            "url": obs.url,
            "page_context": page_context(obs),
            "elements": element_lines(obs.elements),
            "element_num": str(len(obs.elements)),
            "const_uninteractive_category": UNINTERACTIVE_CATEGORY,
        },
    )
    reply = oracle.call(
        prompt,
        site=site,
        stage="explore",
        context={"element_ids": sorted(obs.element_ids())},
    )
    parsed: CategorizationReply = reply.parsed
    if not any(parsed.categories.values()):
        raise EmptyPlan(f"no interactive category proposed for {obs.url}")
    return parsed, reply.cost_usd


_TYPE_PHRASES = (
    ("information seeking", TaskType.INFORMATION_SEEKING),
    ("information-seeking", TaskType.INFORMATION_SEEKING),
    ("site navigation", TaskType.SITE_NAVIGATION),
    ("content modification", TaskType.CONTENT_MODIFICATION),
)

_NAVIGATION_VERBS = frozenset(
    {"go", "navigate", "open", "visit", "return", "switch", "browse"}
)
_MODIFICATION_VERBS = frozenset(
    {
        "add",
        "apply",
        "change",
        "create",
        "delete",
        "fill",
        "log",
        "post",
        "register",
        "remove",
        "set",
        "sign",
        "sort",
        "submit",
        "subscribe",
        "update",
        "upload",
        "write",
    }
)


def infer_task_type(instruction: str, analysis: str) -> TaskType:
    """Classify a proposal: explicit phrase first, leading verb second."""
    haystack = f"{instruction} {analysis}".lower()
    for phrase, task_type in _TYPE_PHRASES:
        if phrase in haystack:
            return task_type
    words = instruction.lower().split()
    first = words[0] if words else ""
    if first in _NAVIGATION_VERBS:
        return TaskType.SITE_NAVIGATION
    if first in _MODIFICATION_VERBS:
        return TaskType.CONTENT_MODIFICATION
    return TaskType.INFORMATION_SEEKING


def propose_task(
    oracle: OracleClient,
    site: SiteSpec,
    action_description: str,
) -> tuple[str, TaskType, Decimal]:
    prompt = render(
        TemplateName.PROPOSE_TASK,
        {
            "website_intro": site.intro or f"A website named {site.name}.",
            "task_examples": task_examples_block(site.task_examples),
            "current_action_str": action_description,
            "website_name": site.name,
        },
    )
    reply = oracle.call(prompt, site=site.name, stage="explore")
    proposal = reply.parsed
    text = " ".join(proposal.high_level_instruction.split())
    return text, infer_task_type(text, proposal.analysis), reply.cost_usd


def sample_probes(
    rng: random.Random, proposals: list[ProposedInteraction], k: int
) -> list[ProposedInteraction]:
    """Pick up to k proposals uniformly at random, keeping page order."""
    take = min(k, len(proposals))
    return [proposals[i] for i in sorted(rng.sample(range(len(proposals)), take))]


def judge_task_diversity(
    oracle: OracleClient, tasks: list[Task], *, site: str, sample_size: int
) -> DiversityReply:
    """Score task-set diversity over the first `sample_size` tasks."""
    sample = [t.text for t in tasks[:sample_size]]
    prompt = render(
        TemplateName.JUDGE_DIVERSITY, {"task_list_block": task_list_block(sample)}
    )
    reply = oracle.call(prompt, site=site, stage="stats")
    return reply.parsed


class Explorer:
    """Runs the exploration stage for one site over one environment session."""

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

    def explore_site(self, site: SiteSpec, session: Any) -> ExplorationResult:
        """session is any object with observe()/execute() over Actions."""
        cfg = self.config
        # str seeds derive from sha512, so this is stable across interpreters.
        master = random.Random(f"{cfg.seed}:{site.name}")
        pool = UrlPool()
        visited: set[str] = set()
        probed: set[tuple[str, str, int, str]] = set()
        seen_texts: set[str] = set()
        tasks: list[Task] = []
        triplets: list[TripletRecord] = []
        cost = Decimal("0")

        start = session.observe()
        pool.add(start.url, 0)
        pages_visited = 0

        while len(pool) and pages_visited < cfg.max_pages_per_site:
            if len(tasks) >= cfg.max_tasks_per_site:
                break
            url, depth = pool.pop()
            if url in visited:
                continue
            visited.add(url)
            page_rng = random.Random(master.randrange(2**63))
            if not self._goto(session, url):
                self.on_event("explore.page_unreachable", {"site": site.name, "url": url})
                continue
            obs = session.observe()
            pages_visited += 1
            try:
                reply, call_cost = categorize_page(self.oracle, obs, site=site.name)
            except EmptyPlan:
                self.on_event("explore.empty_plan", {"site": site.name, "url": url})
                continue
            except SchemaViolation as exc:
                self.on_event(
                    "explore.categorize_failed",
                    {"site": site.name, "url": url, "error": str(exc)},
                )
                continue
            cost += call_cost
            self.on_event(
                "explore.page",
                {
                    "site": site.name,
                    "url": url,
                    "depth": depth,
                    "categories": {k: len(v) for k, v in reply.categories.items()},
                },
            )
            for category, proposals in reply.categories.items():
                fresh = [
                    p
                    for p in proposals
                    if (url, p.kind.value, p.element_id, p.value) not in probed
                ]
                for proposal in sample_probes(page_rng, fresh, cfg.probes_per_category):
                    if len(tasks) >= cfg.max_tasks_per_site:
                        break
                    probed.add((url, proposal.kind.value, proposal.element_id, proposal.value))
                    cost += self._run_probe(
                        site, session, url, depth, category, proposal,
                        pool, visited, seen_texts, tasks, triplets,
                    )
        return ExplorationResult(
            site=site.name,
            tasks=tuple(tasks),
            triplets=tuple(triplets),
            pages_visited=pages_visited,
            cost_usd=cost,
        )

    def _goto(self, session: Any, url: str) -> bool:
        """Restore the session to `url`; True when the page is reachable."""
        current = session.observe()
        if current.url == url:
            return True
        outcome = session.execute(make_action(ActionKind.GOTO, None, url))
        return outcome.error is None and session.observe().url == url

    def _run_probe(
        self,
        site: SiteSpec,
        session: Any,
        url: str,
        depth: int,
        category: str,
        proposal: ProposedInteraction,
        pool: UrlPool,
        visited: set[str],
        seen_texts: set[str],
        tasks: list[Task],
        triplets: list[TripletRecord],
    ) -> Decimal:
        cfg = self.config
        cost = Decimal("0")
        if not self._goto(session, url):
            return cost
        before = session.observe()
        action = proposal.to_action()
        try:
            session.execute(action)
        except ElementNotFound as exc:
            self.on_event(
                "explore.probe_failed",
                {"site": site.name, "url": url, "action": render_action(action),
                 "error": str(exc)},
            )
            return cost
        after = session.observe()
        if after.url != url and depth + 1 <= cfg.max_depth and after.url not in visited:
            pool.add(after.url, depth + 1)

        description = describe_interaction(action, before)
        task_id: str | None = None
        try:
            text, task_type, call_cost = propose_task(self.oracle, site, description)
            cost += call_cost
        except SchemaViolation as exc:
            self.on_event(
                "explore.propose_failed",
                {"site": site.name, "url": url, "error": str(exc)},
            )
            text = ""
            task_type = TaskType.INFORMATION_SEEKING
        if text and text not in seen_texts:
            seen_texts.add(text)
            task_id = f"t-{site.name}-{len(tasks) + 1:04d}"
            tasks.append(
                Task(id=task_id, text=text, category=category, task_type=task_type)
            )
            self.on_event(
                "explore.task",
                {"site": site.name, "task_id": task_id, "text": text,
                 "task_type": task_type.value},
            )
        triplets.append(
            TripletRecord(
                id=f"x-{site.name}-{len(triplets) + 1:04d}",
                site=site.name,
                category=category,
                triplet=InteractionTriplet(before=before, action=action, after=after),
                task_id=task_id,
            )
        )
        return cost
