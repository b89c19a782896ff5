"""Oracle client: transports, cost accounting, and the request loop.

The client is transport-agnostic. An HTTP transport talks to an OpenAI-style
chat endpoint; a mock transport replays scripted replies from a JSON file so
the whole pipeline runs hermetically in tests and offline runs.
"""

from __future__ import annotations

import fnmatch
import json
import threading
import time
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Any, Callable, Protocol

from ..errors import (
    BudgetExhausted,
    MockReplyMissing,
    NoJsonFound,
    SchemaError,
    SchemaViolation,
    TransportError,
)
from .replies import parse_reply
from .templates import RenderedPrompt, TemplateName


@dataclass(frozen=True)
class Usage:
    prompt_tokens: int = 0
    completion_tokens: int = 0

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens


@dataclass(frozen=True)
class RawCompletion:
    text: str
    usage: Usage


@dataclass(frozen=True)
class OracleReply:
    """A validated reply plus everything needed for accounting."""

    template: TemplateName
    parsed: Any
    raw_text: str
    usage: Usage
    cost_usd: Decimal
    attempts: int


def extract_json(text: str) -> dict[str, Any]:
    """Return the first balanced JSON object embedded anywhere in text.

    Completions wrap their JSON in prose, code fences, or stray braces, so we
    scan every '{' and take the first position where a full object decodes.
    """
    decoder = json.JSONDecoder()
    idx = text.find("{")
    while idx != -1:
        try:
            obj, _ = decoder.raw_decode(text, idx)
        except ValueError:
            pass
        else:
            if isinstance(obj, dict):
                return obj
        idx = text.find("{", idx + 1)
    raise NoJsonFound("no JSON object found in completion")


# ======================================================================
# cost ledger
# ======================================================================

@dataclass(frozen=True)
class Pricing:
    """Per-token USD rates, kept as Decimal so totals are exact."""

    prompt_per_token: Decimal = Decimal("0.000002")
    completion_per_token: Decimal = Decimal("0.000008")

    def cost(self, usage: Usage) -> Decimal:
        return (
            Decimal(usage.prompt_tokens) * self.prompt_per_token
            + Decimal(usage.completion_tokens) * self.completion_per_token
        )


class CostLedger:
    """Thread-safe token and cost accumulator with site/stage breakdowns."""

    def __init__(self, budget_usd: Decimal | None = None) -> None:
        self._lock = threading.Lock()
        self.budget_usd = budget_usd
        self.total_cost = Decimal("0")
        self.total_prompt_tokens = 0
        self.total_completion_tokens = 0
        self.calls = 0
        self.by_site: dict[str, Decimal] = {}
        self.by_stage: dict[str, Decimal] = {}

    def add(self, usage: Usage, cost: Decimal, *, site: str = "", stage: str = "") -> None:
        with self._lock:
            self.total_cost += cost
            self.total_prompt_tokens += usage.prompt_tokens
            self.total_completion_tokens += usage.completion_tokens
            self.calls += 1
            if site:
                self.by_site[site] = self.by_site.get(site, Decimal("0")) + cost
            if stage:
                self.by_stage[stage] = self.by_stage.get(stage, Decimal("0")) + cost

    def check_budget(self) -> None:
        with self._lock:
            if self.budget_usd is not None and self.total_cost >= self.budget_usd:
                raise BudgetExhausted(
                    f"spent {self.total_cost} USD of {self.budget_usd} budget"
                )

    def snapshot(self) -> dict[str, Any]:
        with self._lock:
            return {
                "total_cost_usd": str(self.total_cost),
                "budget_usd": None if self.budget_usd is None else str(self.budget_usd),
                "prompt_tokens": self.total_prompt_tokens,
                "completion_tokens": self.total_completion_tokens,
                "calls": self.calls,
                "by_site": {k: str(v) for k, v in sorted(self.by_site.items())},
                "by_stage": {k: str(v) for k, v in sorted(self.by_stage.items())},
            }

    @classmethod
    def from_snapshot(cls, data: dict[str, Any]) -> "CostLedger":
        budget = data.get("budget_usd")
        ledger = cls(budget_usd=None if budget is None else Decimal(budget))
        ledger.total_cost = Decimal(data.get("total_cost_usd", "0"))
        ledger.total_prompt_tokens = int(data.get("prompt_tokens", 0))
        ledger.total_completion_tokens = int(data.get("completion_tokens", 0))
        ledger.calls = int(data.get("calls", 0))
        ledger.by_site = {k: Decimal(v) for k, v in data.get("by_site", {}).items()}
        ledger.by_stage = {k: Decimal(v) for k, v in data.get("by_stage", {}).items()}
        return ledger


# ======================================================================
# transports
# ======================================================================

class Transport(Protocol):
    def complete(self, prompt: RenderedPrompt) -> RawCompletion: ...


class HttpTransport:
    """OpenAI-compatible chat completions over HTTP.

    The API key comes from the environment, never from config files.
    """

    def __init__(
        self,
        endpoint_url: str,
        model: str,
        api_key: str | None = None,
        *,
        temperature: float = 0.7,
        top_p: float = 1.0,
        max_tokens: int = 2048,
        timeout_s: float = 120.0,
    ) -> None:
        self.endpoint_url = endpoint_url
        self.model = model
        self.api_key = api_key
        self.temperature = temperature
        self.top_p = top_p
        self.max_tokens = max_tokens
        self.timeout_s = timeout_s

    def complete(self, prompt: RenderedPrompt) -> RawCompletion:
        import requests

        content: Any
        if prompt.images:
            content = [{"type": "text", "text": prompt.text}]
            for ref in prompt.images:
                content.append({"type": "image_url", "image_url": {"url": ref}})
        else:
            content = prompt.text
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": content}],
            "temperature": self.temperature,
            "top_p": self.top_p,
            "max_tokens": self.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = requests.post(
                self.endpoint_url, json=body, headers=headers, timeout=self.timeout_s
            )
        except requests.RequestException as exc:
            raise TransportError(f"completion request failed: {exc}") from exc
        if resp.status_code != 200:
            raise TransportError(
                f"completion endpoint returned {resp.status_code}: {resp.text[:200]}"
            )
        try:
            payload = resp.json()
            text = payload["choices"][0]["message"]["content"]
            usage_raw = payload.get("usage", {})
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion payload: {exc}") from exc
        usage = Usage(
            prompt_tokens=int(usage_raw.get("prompt_tokens", 0)),
            completion_tokens=int(usage_raw.get("completion_tokens", 0)),
        )
        return RawCompletion(text=text if isinstance(text, str) else "", usage=usage)


class MockScript:
    """Deterministic scripted replies loaded from a JSON file.

    Rules match on template name plus fnmatch patterns over the rendered
    prompt's variables. A rule may carry one reply or a sequence; sequences
    advance a cursor keyed by the value of the rule's `scope` variable, so
    independent tasks replay independently even under thread interleaving.
    """

    def __init__(self, data: dict[str, Any]) -> None:
        if data.get("schema_version") != 1:
            raise SchemaError("mock script schema_version must be 1")
        self.default_usage = Usage(**data.get("default_usage", {}))
        self.rules: list[dict[str, Any]] = list(data.get("rules", []))
        self._cursors: dict[tuple[int, str], int] = {}
        self._lock = threading.Lock()

    @classmethod
    def load(cls, path: str) -> "MockScript":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def _matches(self, rule: dict[str, Any], prompt: RenderedPrompt) -> bool:
        if rule.get("template") != prompt.template.value:
            return False
        fingerprint = rule.get("fingerprint")
        if fingerprint is not None and fingerprint != prompt.fingerprint:
            return False
        for var, pattern in rule.get("when", {}).items():
            value = prompt.variables.get(var)
            if value is None:
                return False
            if not fnmatch.fnmatchcase(str(value), pattern):
                return False
        return True

    @staticmethod
    def _interpolate(node: Any, variables: dict[str, Any]) -> Any:
        if isinstance(node, str):
            out = node
            for key, value in variables.items():
                out = out.replace("{{" + key + "}}", str(value))
            return out
        if isinstance(node, list):
            return [MockScript._interpolate(n, variables) for n in node]
        if isinstance(node, dict):
            return {k: MockScript._interpolate(v, variables) for k, v in node.items()}
        return node

    def reply_for(self, prompt: RenderedPrompt) -> RawCompletion:
        for idx, rule in enumerate(self.rules):
            if not self._matches(rule, prompt):
                continue
            if "replies" in rule or "raws" in rule:
                series = rule.get("replies", rule.get("raws"))
                scope_var = rule.get("scope", "")
                scope_value = str(prompt.variables.get(scope_var, "")) if scope_var else ""
                with self._lock:
                    cursor = self._cursors.get((idx, scope_value), 0)
                    # Repeat the last entry once the series runs out.
                    pick = series[min(cursor, len(series) - 1)]
                    self._cursors[(idx, scope_value)] = cursor + 1
            else:
                if "reply" in rule:
                    pick = rule["reply"]
                elif "raw" in rule:
                    pick = rule["raw"]
                else:
                    raise SchemaViolation(f"mock rule {idx} has no reply/raw")
            pick = self._interpolate(pick, prompt.variables)
            text = pick if isinstance(pick, str) else json.dumps(pick, ensure_ascii=False)
            usage_raw = rule.get("usage")
            usage = Usage(**usage_raw) if usage_raw else self.default_usage
            return RawCompletion(text=text, usage=usage)
        raise MockReplyMissing(
            f"no mock rule matches template={prompt.template.value} "
            f"variables={sorted(prompt.variables)}"
        )


class MockTransport:
    def __init__(self, script: MockScript) -> None:
        self.script = script

    def complete(self, prompt: RenderedPrompt) -> RawCompletion:
        return self.script.reply_for(prompt)


# ======================================================================
# client
# ======================================================================

@dataclass(frozen=True)
class RetryPolicy:
    transport_retries: int = 3
    reparse_attempts: int = 2
    backoff_base_s: float = 1.0


class OracleClient:
    """One call = transport with retry, JSON extraction, schema validation.

    Transport failures retry with exponential backoff. Schema violations get
    one or more re-requests that append the violation as a corrective hint.
    Every attempt is charged to the ledger, including failed ones.
    """

    def __init__(
        self,
        transport: Transport,
        ledger: CostLedger,
        *,
        pricing: Pricing | None = None,
        policy: RetryPolicy | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.transport = transport
        self.ledger = ledger
        self.pricing = pricing or Pricing()
        self.policy = policy or RetryPolicy()
        self._sleep = sleep

    def _complete_with_retry(self, prompt: RenderedPrompt) -> RawCompletion:
        last: TransportError | None = None
        for attempt in range(self.policy.transport_retries):
            try:
                return self.transport.complete(prompt)
            except TransportError as exc:
                last = exc
                if attempt + 1 < self.policy.transport_retries:
                    self._sleep(self.policy.backoff_base_s * (2**attempt))
        raise TransportError(
            f"transport failed after {self.policy.transport_retries} attempts: {last}"
        )

    def call(
        self,
        prompt: RenderedPrompt,
        *,
        site: str = "",
        stage: str = "",
        context: dict[str, Any] | None = None,
    ) -> OracleReply:
        self.ledger.check_budget()
        total_usage = Usage()
        total_cost = Decimal("0")
        attempts = 0
        current = prompt
        last_violation: SchemaViolation | None = None
        for _ in range(1 + self.policy.reparse_attempts):
            completion = self._complete_with_retry(current)
            attempts += 1
            cost = self.pricing.cost(completion.usage)
            self.ledger.add(completion.usage, cost, site=site, stage=stage)
            total_cost += cost
            total_usage = Usage(
                prompt_tokens=total_usage.prompt_tokens + completion.usage.prompt_tokens,
                completion_tokens=total_usage.completion_tokens
                + completion.usage.completion_tokens,
            )
            try:
                payload = extract_json(completion.text)
                parsed = parse_reply(prompt.template, payload, context)
            except SchemaViolation as exc:
                last_violation = exc
                hint = (
                    f"{prompt.text}\n\nYour previous reply was rejected: {exc}. "
                    "Reply again with a single valid JSON object."
                )
                current = RenderedPrompt(
                    template=prompt.template,
                    text=hint,
                    variables=prompt.variables,
                    images=prompt.images,
                )
                continue
            return OracleReply(
                template=prompt.template,
                parsed=parsed,
                raw_text=completion.text,
                usage=total_usage,
                cost_usd=total_cost,
                attempts=attempts,
            )
        raise SchemaViolation(
            f"reply failed validation after {attempts} attempts: {last_violation}"
        )
