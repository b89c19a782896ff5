"""Live-browser environment over the W3C WebDriver REST protocol.

Implements the same observe/execute/reset surface as the simulator, so the
pipeline can drive a real site by pointing a config at a WebDriver endpoint
(chromedriver, geckodriver, or a Selenium server).
"""

from __future__ import annotations

import base64
import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import requests

from .actions import Action, ActionKind, ELEMENT_KINDS, validate_action
from .environment import TransitionOutcome
from .errors import ConnectFailed, ElementNotFound, ProtocolError, SessionTerminal
from .model import Element, Observation, observation_fingerprint

# Tags elements with stable integer ids (data-swid) and reports the visible
# interactive surface plus headings and salient text.
OBSERVE_SCRIPT = """
var next = window.__swNextId || 1;
var selector = 'a, button, input, select, textarea, [role], h1, h2, h3, label';
var nodes = document.querySelectorAll(selector);
var out = [];
for (var i = 0; i < nodes.length; i++) {
  var el = nodes[i];
  var rect = el.getBoundingClientRect();
  if (rect.width === 0 && rect.height === 0) { continue; }
  if (!el.hasAttribute('data-swid')) {
    el.setAttribute('data-swid', String(next));
    next += 1;
  }
  var tag = el.tagName.toLowerCase();
  var role = el.getAttribute('role');
  if (!role) {
    role = {a: 'link', button: 'button', input: 'textbox', select: 'combobox',
            textarea: 'textbox', h1: 'heading', h2: 'heading', h3: 'heading',
            label: 'statictext'}[tag] || 'generic';
    if (tag === 'input') {
      var t = (el.getAttribute('type') || 'text').toLowerCase();
      if (t === 'button' || t === 'submit') { role = 'button'; }
      else if (t === 'checkbox') { role = 'checkbox'; }
      else if (t === 'radio') { role = 'radio'; }
    }
  }
  var name = el.getAttribute('aria-label') || el.getAttribute('placeholder') ||
             (el.innerText || el.value || '').trim().slice(0, 120);
  var interactive = ['link', 'button', 'textbox', 'combobox', 'checkbox',
                     'radio'].indexOf(role) !== -1;
  out.push({id: parseInt(el.getAttribute('data-swid'), 10), role: role,
            name: name, interactive: interactive,
            below: rect.top >= window.innerHeight});
}
window.__swNextId = next;
return {url: window.location.href, title: document.title, elements: out};
"""

# WebDriver key codepoints for press [key_comb].
_KEYS = {
    "alt": "",
    "arrowdown": "",
    "arrowleft": "",
    "arrowright": "",
    "arrowup": "",
    "backspace": "",
    "ctrl": "",
    "control": "",
    "delete": "",
    "end": "",
    "enter": "",
    "esc": "",
    "escape": "",
    "home": "",
    "meta": "",
    "pagedown": "",
    "pageup": "",
    "shift": "",
    "space": " ",
    "tab": "",
}


def key_sequence(combination: str) -> list[str]:
    """Map a '+'-separated key combination to WebDriver codepoints."""
    keys = []
    for part in combination.split("+"):
        part = part.strip()
        if not part:
            continue
        keys.append(_KEYS.get(part.lower(), part))
    return keys


@dataclass(frozen=True)
class BrowserConfig:
    endpoint_url: str
    viewport: tuple[int, int] = (1280, 720)
    nav_timeout_ms: int = 10000
    screenshot_dir: str | None = None
    start_url: str = ""


class BrowserSession:
    """One WebDriver session implementing observe/execute/reset."""

    def __init__(self, config: BrowserConfig) -> None:
        self.config = config
        self._base = config.endpoint_url.rstrip("/")
        self._timeout = max(config.nav_timeout_ms, 1000) / 1000.0
        self._terminal = False
        payload = {
            "capabilities": {
                "alwaysMatch": {},
                "firstMatch": [{}],
            }
        }
        reply = self._request("POST", "/session", payload, connect=True)
        value = reply.get("value", {})
        session_id = value.get("sessionId") or reply.get("sessionId")
        if not session_id:
            raise ProtocolError(f"session creation returned no sessionId: {reply}")
        self._session = f"/session/{session_id}"
        self._request(
            "POST",
            f"{self._session}/window/rect",
            {"width": config.viewport[0], "height": config.viewport[1]},
            tolerate_error=True,
        )
        if config.start_url:
            self._navigate(config.start_url)

    # ------------------------------------------------------------------
    # protocol plumbing
    # ------------------------------------------------------------------

    def _request(
        self,
        method: str,
        path: str,
        payload: dict[str, Any] | None = None,
        *,
        connect: bool = False,
        tolerate_error: bool = False,
    ) -> dict[str, Any]:
        url = f"{self._base}{path}"
        try:
            response = requests.request(url=url, method=method, json=payload, timeout=self._timeout)
        except requests.RequestException as exc:
            if connect:
                raise ConnectFailed(f"cannot reach WebDriver endpoint {self._base}: {exc}") from exc
            raise ProtocolError(f"WebDriver request failed: {method} {path}: {exc}") from exc
        try:
            body = response.json() if response.content else {}
        except ValueError:
            raise ProtocolError(
                f"non-JSON reply from {method} {path}: {response.text[:200]}"
            ) from None
        if response.status_code >= 400:
            error = (body.get("value") or {}).get("error", "")
            if error == "no such element":
                raise ElementNotFound((body.get("value") or {}).get("message", error))
            if tolerate_error:
                return body
            raise ProtocolError(
                f"{method} {path} -> {response.status_code} {error or response.text[:200]}"
            )
        return body

    def _execute_script(self, script: str, args: list[Any] | None = None) -> Any:
        body = self._request(
            "POST",
            f"{self._session}/execute/sync",
            {"script": script, "args": args or []},
        )
        return body.get("value")

    def _find_handle(self, element_id: int) -> str:
        body = self._request(
            "POST",
            f"{self._session}/element",
            {"using": "css selector", "value": f'[data-swid="{element_id}"]'},
        )
        value = body.get("value", {})
        for key, handle in value.items():
            if key.startswith("element-") or key == "ELEMENT":
                return handle
        raise ProtocolError(f"element reply carried no handle: {value}")

    def _navigate(self, url: str) -> None:
        self._request("POST", f"{self._session}/url", {"url": url})

    # ------------------------------------------------------------------
    # environment surface
    # ------------------------------------------------------------------

    def reset(self) -> None:
        self._terminal = False
        if self.config.start_url:
            self._navigate(self.config.start_url)

    @property
    def terminal(self) -> bool:
        return self._terminal

    def observe(self) -> Observation:
        raw = self._execute_script(OBSERVE_SCRIPT)
        if not isinstance(raw, dict):
            raise ProtocolError(f"observe script returned {type(raw).__name__}, not an object")
        elements = tuple(
            Element(
                id=int(e["id"]),
                role=str(e.get("role", "generic")),
                name=str(e.get("name", "")),
                interactive=bool(e.get("interactive", False)),
            )
            for e in raw.get("elements", [])
            if not e.get("below", False)
        )
        title = str(raw.get("title", ""))
        lines = [f'RootWebArea "{title}"']
        lines += [f'  {e.role} "{e.name}" [{e.id}]' for e in elements]
        return Observation(
            url=str(raw.get("url", "")),
            accessibility_tree="\n".join(lines),
            elements=elements,
            screenshot_ref=self._screenshot(),
        )

    def _screenshot(self) -> str | None:
        if not self.config.screenshot_dir:
            return None
        body = self._request("GET", f"{self._session}/screenshot")
        encoded = body.get("value", "")
        if not isinstance(encoded, str) or not encoded:
            return None
        png = base64.b64decode(encoded)
        digest = hashlib.sha256(png).hexdigest()
        directory = Path(self.config.screenshot_dir)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / f"{digest}.png"
        if not path.exists():
            path.write_bytes(png)
        return str(path)

    def execute(self, action: Action) -> TransitionOutcome:
        if self._terminal:
            raise SessionTerminal("session already terminated by none/stop")
        validate_action(action)
        before = observation_fingerprint(self.observe())
        error = self._apply(action)
        after = observation_fingerprint(self.observe())
        return TransitionOutcome(changed=before != after, error=error)

    def _apply(self, action: Action) -> str | None:
        kind = action.kind
        if kind in (ActionKind.NONE, ActionKind.STOP):
            self._terminal = True
            return None
        try:
            if kind in ELEMENT_KINDS:
                handle = self._find_handle(action.element_id)
                if kind is ActionKind.CLICK:
                    self._request(
                        "POST", f"{self._session}/element/{handle}/click", {}
                    )
                elif kind is ActionKind.TYPE:
                    self._request(
                        "POST", f"{self._session}/element/{handle}/clear", {}
                    )
                    self._request(
                        "POST",
                        f"{self._session}/element/{handle}/value",
                        {"text": action.value},
                    )
                else:  # hover
                    self._execute_script(
                        "arguments[0].dispatchEvent(new MouseEvent('mouseover', "
                        "{bubbles: true}));",
                        [{"element-6066-11e4-a52e-4f735466cecf": handle}],
                    )
            elif kind is ActionKind.PRESS:
                self._press(action.value)
            elif kind is ActionKind.SCROLL:
                delta = self.config.viewport[1] * 0.8
                sign = 1 if action.value == "down" else -1
                self._execute_script(f"window.scrollBy(0, {sign * delta});")
            elif kind is ActionKind.GOTO:
                self._navigate(action.value)
            elif kind is ActionKind.GO_BACK:
                self._request("POST", f"{self._session}/back", {})
            elif kind is ActionKind.GO_FORWARD:
                self._request("POST", f"{self._session}/forward", {})
        except ElementNotFound:
            raise
        except ProtocolError as exc:
            return str(exc).splitlines()[0]
        return None

    def _press(self, combination: str) -> None:
        keys = key_sequence(combination)
        if not keys:
            return
        actions = [{"type": "keyDown", "value": key} for key in keys]
        actions += [{"type": "keyUp", "value": key} for key in reversed(keys)]
        self._request(
            "POST",
            f"{self._session}/actions",
            {
                "actions": [
                    {"type": "key", "id": "keyboard", "actions": actions}
                ]
            },
        )

    def close(self) -> None:
        try:
            self._request("DELETE", self._session, tolerate_error=True)
        except (ProtocolError, ConnectFailed):
            pass
