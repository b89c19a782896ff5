"""Deterministic site-graph simulator behind the browser-environment interface.

A site graph is a JSON file describing pages, their elements, and the
transitions actions cause. Sessions expose reset/observe/execute; the same
trio the live-browser adapter implements, so the pipeline never knows which
backend it is driving.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from fnmatch import fnmatchcase
from pathlib import Path
from typing import Any

from .actions import Action, ActionKind, ELEMENT_KINDS, validate_action
from .errors import ElementNotFound, InvalidGraph, SchemaError, SessionTerminal
from .model import Element, Observation, observation_fingerprint

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class GotoEffect:
    page: str
    set_state: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class SetStateEffect:
    key: str
    value: str | None = None  # None: take the action's typed value


@dataclass(frozen=True)
class NoopEffect:
    error: str | None = None


Effect = GotoEffect | SetStateEffect | NoopEffect


@dataclass(frozen=True)
class TransitionSpec:
    """Matches (element_id, kind, value pattern) with optional state guards."""

    kind: ActionKind
    element_id: int | None
    effect: Effect
    value_pattern: str = "*"
    requires_state: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class PageSpec:
    url: str
    tree_template: str
    elements: tuple[Element, ...]
    transitions: tuple[TransitionSpec, ...] = ()
    below_fold: tuple[Element, ...] = ()


@dataclass(frozen=True)
class SiteGraph:
    pages: dict[str, PageSpec]
    start_page: str


@dataclass(frozen=True)
class TransitionOutcome:
    """changed is True iff the serialized observation differs before/after."""

    changed: bool
    error: str | None = None


_PLACEHOLDER = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")


def _substitute(template: str, state: dict[str, str]) -> str:
    # Unknown keys render as the empty string.
    return _PLACEHOLDER.sub(lambda m: state.get(m.group(1), ""), template)


def validate_graph(graph: SiteGraph) -> None:
    """Raise InvalidGraph when the graph violates its invariants."""
    try:
        _check_graph(graph)
    except SchemaError as exc:
        raise InvalidGraph(str(exc)) from None


def _check_graph(graph: SiteGraph) -> None:
    if not graph.pages:
        raise SchemaError("pages map is empty", field="pages")
    if graph.start_page not in graph.pages:
        raise SchemaError(f"start_page {graph.start_page!r} is not a page", field="start_page")
    for page_id, page in graph.pages.items():
        loc = f"pages.{page_id}"
        all_elements = page.elements + page.below_fold
        if not all_elements:
            raise SchemaError("page has no elements", field=loc)
        seen: set[int] = set()
        for e in all_elements:
            if e.id in seen:
                raise SchemaError(f"duplicate element id {e.id}", field=loc)
            seen.add(e.id)
            if e.id < 0:
                raise SchemaError(f"negative element id {e.id}", field=loc)
            if e.interactive and not (e.role or e.name):
                raise SchemaError(
                    f"interactive element {e.id} has neither role nor name", field=loc
                )
        for i, t in enumerate(page.transitions):
            tloc = f"{loc}.transitions[{i}]"
            if t.element_id is not None and t.element_id not in seen:
                raise SchemaError(f"unknown element id {t.element_id}", field=tloc)
            if isinstance(t.effect, GotoEffect) and t.effect.page not in graph.pages:
                raise SchemaError(f"unknown target page {t.effect.page!r}", field=tloc)
            if isinstance(t.effect, SetStateEffect) and not t.effect.key:
                raise SchemaError("set_state effect needs a non-empty key", field=tloc)


class SimulatorSession:
    """Single-owner, fully deterministic session over one SiteGraph."""

    def __init__(self, graph: SiteGraph):
        validate_graph(graph)
        self._graph = graph
        self.reset()

    def reset(self) -> None:
        self._history: list[str] = [self._graph.start_page]
        self._position = 0
        self.state: dict[str, str] = {}
        self.scrolled = False
        self.step_counter = 0
        self._terminal = False

    @property
    def current_page(self) -> str:
        return self._history[self._position]

    @property
    def history_stack(self) -> tuple[str, ...]:
        return tuple(self._history)

    @property
    def terminal(self) -> bool:
        return self._terminal

    def observe(self) -> Observation:
        page = self._graph.pages[self.current_page]
        tree = _substitute(page.tree_template, self.state)
        elements = page.elements
        if self.scrolled and page.below_fold:
            # The revealed elements are appended to both the list and the tree.
            extra = "\n".join(f'  {e.role} "{e.name}" [{e.id}]' for e in page.below_fold)
            tree = f"{tree}\n{extra}" if tree else extra
            elements = elements + page.below_fold
        return Observation(
            url=_substitute(page.url, self.state),
            accessibility_tree=tree,
            elements=elements,
        )

    def execute(self, action: Action) -> TransitionOutcome:
        if self._terminal:
            raise SessionTerminal("session already terminated by none/stop")
        validate_action(action)
        before = observation_fingerprint(self.observe())
        error = self._apply(action)
        self.step_counter += 1
        after = observation_fingerprint(self.observe())
        return TransitionOutcome(changed=before != after, error=error)

    # internal

    def _apply(self, action: Action) -> str | None:
        kind = action.kind
        if kind in (ActionKind.NONE, ActionKind.STOP):
            self._terminal = True
            return None
        if kind is ActionKind.GO_BACK:
            if self._position > 0:
                self._position -= 1
                self.scrolled = False
            return None
        if kind is ActionKind.GO_FORWARD:
            if self._position < len(self._history) - 1:
                self._position += 1
                self.scrolled = False
            return None
        if kind is ActionKind.GOTO:
            for page_id, page in self._graph.pages.items():
                if _substitute(page.url, self.state) == action.value:
                    self._navigate(page_id)
                    return None
            return f"no route to {action.value}"
        if kind in ELEMENT_KINDS:
            page = self._graph.pages[self.current_page]
            visible = {e.id for e in page.elements}
            if self.scrolled:
                visible |= {e.id for e in page.below_fold}
            if action.element_id not in visible:
                raise ElementNotFound(
                    f"element {action.element_id} not in current view of {self.current_page}"
                )
            spec = self._find_transition(action)
            if spec is None:
                return None
            return self._apply_effect(spec.effect, action)
        # press / scroll: explicit transition first, then built-in scroll.
        spec = self._find_transition(action)
        if spec is not None:
            return self._apply_effect(spec.effect, action)
        if kind is ActionKind.SCROLL:
            self.scrolled = action.value == "down"
        return None

    def _navigate(self, page_id: str) -> None:
        # New navigation truncates the forward part of the stack.
        self._history = self._history[: self._position + 1] + [page_id]
        self._position += 1
        self.scrolled = False

    def _find_transition(self, action: Action) -> TransitionSpec | None:
        page = self._graph.pages[self.current_page]
        for spec in page.transitions:
            if spec.kind is not action.kind or spec.element_id != action.element_id:
                continue
            if not fnmatchcase(action.value, spec.value_pattern):
                continue
            if all(
                fnmatchcase(self.state.get(key, ""), pattern)
                for key, pattern in spec.requires_state
            ):
                return spec
        return None

    def _apply_effect(self, effect: Effect, action: Action) -> str | None:
        if isinstance(effect, GotoEffect):
            for key, value in effect.set_state:
                self.state[key] = value
            self._navigate(effect.page)
            return None
        if isinstance(effect, SetStateEffect):
            self.state[effect.key] = effect.value if effect.value is not None else action.value
            return None
        return effect.error


def reset(graph: SiteGraph) -> SimulatorSession:
    """Create a fresh session positioned on the start page."""
    return SimulatorSession(graph)


# ======================================================================
# Site-graph file loading
# ======================================================================

def load_site_graph(path: str | Path) -> SiteGraph:
    """Load and validate a site-graph JSON file; SchemaError on any defect."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise SchemaError("file not found", path=str(path)) from None
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}", path=str(path)) from None
    try:
        graph = _parse_graph(raw)
        _check_graph(graph)
    except SchemaError as exc:
        raise SchemaError(str(exc), path=str(path)) from None
    return graph


def _parse_graph(raw: Any) -> SiteGraph:
    if not isinstance(raw, dict):
        raise SchemaError("top level must be an object")
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {version!r}", field="schema_version")
    pages_raw = raw.get("pages")
    if not isinstance(pages_raw, dict) or not pages_raw:
        raise SchemaError("pages map is empty", field="pages")
    start = raw.get("start_page")
    if not isinstance(start, str):
        raise SchemaError("start_page must be a string", field="start_page")
    pages = {
        page_id: _parse_page(page_id, page_raw) for page_id, page_raw in pages_raw.items()
    }
    return SiteGraph(pages=pages, start_page=start)


def _parse_page(page_id: str, raw: Any) -> PageSpec:
    loc = f"pages.{page_id}"
    if not isinstance(raw, dict):
        raise SchemaError("page must be an object", field=loc)
    url = raw.get("url")
    if not isinstance(url, str) or not url:
        raise SchemaError("url must be a non-empty string", field=loc)
    template = raw.get("tree_template", "")
    if not isinstance(template, str):
        raise SchemaError("tree_template must be a string", field=loc)
    elements = tuple(
        _parse_element(f"{loc}.elements[{i}]", e) for i, e in enumerate(raw.get("elements", []))
    )
    below = tuple(
        _parse_element(f"{loc}.below_fold[{i}]", e)
        for i, e in enumerate(raw.get("below_fold", []))
    )
    transitions = tuple(
        _parse_transition(f"{loc}.transitions[{i}]", t)
        for i, t in enumerate(raw.get("transitions", []))
    )
    return PageSpec(
        url=url,
        tree_template=template,
        elements=elements,
        transitions=transitions,
        below_fold=below,
    )


def _parse_element(loc: str, raw: Any) -> Element:
    if not isinstance(raw, dict):
        raise SchemaError("element must be an object", field=loc)
    if not isinstance(raw.get("id"), int) or isinstance(raw.get("id"), bool):
        raise SchemaError("element id must be an integer", field=loc)
    return Element(
        id=raw["id"],
        role=str(raw.get("role", "")),
        name=str(raw.get("name", "")),
        interactive=bool(raw.get("interactive", True)),
    )


def _parse_transition(loc: str, raw: Any) -> TransitionSpec:
    if not isinstance(raw, dict):
        raise SchemaError("transition must be an object", field=loc)
    kind_raw = raw.get("kind")
    try:
        kind = ActionKind(kind_raw)
    except ValueError:
        raise SchemaError(f"unknown action kind {kind_raw!r}", field=loc) from None
    element_id = raw.get("element_id")
    if element_id is not None and (not isinstance(element_id, int) or isinstance(element_id, bool)):
        raise SchemaError("element_id must be an integer or null", field=loc)
    requires = raw.get("requires_state", {})
    if not isinstance(requires, dict):
        raise SchemaError("requires_state must be an object", field=loc)
    effect = _parse_effect(loc, raw.get("effect"))
    return TransitionSpec(
        kind=kind,
        element_id=element_id,
        effect=effect,
        value_pattern=str(raw.get("value_pattern", "*")),
        requires_state=tuple(sorted((str(k), str(v)) for k, v in requires.items())),
    )


def _parse_effect(loc: str, raw: Any) -> Effect:
    if not isinstance(raw, dict) or "type" not in raw:
        raise SchemaError("effect must be an object with a type", field=loc)
    etype = raw["type"]
    if etype == "goto":
        page = raw.get("page")
        if not isinstance(page, str) or not page:
            raise SchemaError("goto effect needs a page id", field=loc)
        sets = raw.get("set", {})
        if not isinstance(sets, dict):
            raise SchemaError("goto effect 'set' must be an object", field=loc)
        return GotoEffect(page=page, set_state=tuple(sorted((str(k), str(v)) for k, v in sets.items())))
    if etype == "set_state":
        key = raw.get("key")
        if not isinstance(key, str) or not key:
            raise SchemaError("set_state effect needs a non-empty key", field=loc)
        value = raw.get("value")
        return SetStateEffect(key=key, value=None if value is None else str(value))
    if etype == "noop":
        error = raw.get("error")
        return NoopEffect(error=None if error is None else str(error))
    raise SchemaError(f"unknown effect type {etype!r}", field=loc)
