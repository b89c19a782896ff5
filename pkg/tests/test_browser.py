"""Live-browser adapter against a fake in-process WebDriver endpoint.

The fake speaks just enough of the W3C REST protocol to exercise the
observe/execute mapping without a real browser. A smoke test against a
real endpoint runs only when SYNTHWEAVER_WEBDRIVER_URL is set.
"""
from __future__ import annotations

import base64
import hashlib
import json
import os
import re
import socket
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from synthweaver.actions import Action, ActionKind, parse_action
from synthweaver.browser import BrowserConfig, BrowserSession, key_sequence
from synthweaver.errors import (
    ConnectFailed,
    ElementNotFound,
    InvalidAction,
    ProtocolError,
    SessionTerminal,
)

PNG = b"\x89PNG-not-really-but-bytes"


class FakeBrowser:
    """Mutable page state behind the fake endpoint."""

    def __init__(self) -> None:
        self.url = "about:blank"
        self.title = "Fake"
        self.elements = [
            {"id": 1, "role": "button", "name": "Add", "interactive": True, "below": False},
            {"id": 2, "role": "textbox", "name": "Search box", "interactive": True, "below": False},
            {"id": 3, "role": "heading", "name": "Welcome", "interactive": False, "below": False},
            {"id": 4, "role": "link", "name": "Footer link", "interactive": True, "below": True},
        ]
        self.history: list[str] = []
        self.forward: list[str] = []
        self.scrolled = False
        self.log: list[tuple[str, str, object]] = []
        self.stale_ids: set[int] = set()
        self.fail_click = False
        self.fail_rect = False

    def find(self, element_id: int) -> dict | None:
        for e in self.elements:
            if e["id"] == element_id:
                return e
        return None


class _Handler(BaseHTTPRequestHandler):
    def log_message(self, *args: object) -> None:
        pass

    @property
    def fake(self) -> FakeBrowser:
        return self.server.fake  # type: ignore[attr-defined]

    def _body(self) -> dict:
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length) if length else b""
        return json.loads(raw) if raw else {}

    def _reply(self, status: int, value: object) -> None:
        payload = json.dumps({"value": value}).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def do_POST(self) -> None:  # noqa: N802 (protocol casing)
        body = self._body()
        fake = self.fake
        fake.log.append(("POST", self.path, body))
        if self.path == "/session":
            self._reply(200, {"sessionId": "fake-sess", "capabilities": {}})
        elif self.path.endswith("/window/rect"):
            if fake.fail_rect:
                self._reply(500, {"error": "unknown error", "message": "no window"})
            else:
                self._reply(200, None)
        elif self.path.endswith("/url"):
            fake.history.append(fake.url)
            fake.url = body["url"]
            fake.forward.clear()
            fake.scrolled = False
            self._reply(200, None)
        elif self.path.endswith("/back"):
            if fake.history:
                fake.forward.append(fake.url)
                fake.url = fake.history.pop()
            self._reply(200, None)
        elif self.path.endswith("/forward"):
            if fake.forward:
                fake.history.append(fake.url)
                fake.url = fake.forward.pop()
            self._reply(200, None)
        elif self.path.endswith("/execute/sync"):
            self._execute(body)
        elif self.path.endswith("/element"):
            self._find_element(body)
        elif self.path.endswith("/click"):
            self._click()
        elif self.path.endswith("/clear"):
            self._reply(200, None)
        elif self.path.endswith("/value"):
            element_id = int(self.path.split("/")[-2][1:])
            self.fake.find(element_id)["name"] = body["text"]
            self._reply(200, None)
        elif self.path.endswith("/actions"):
            self._reply(200, None)
        else:
            self._reply(404, {"error": "unknown command", "message": self.path})

    def do_GET(self) -> None:  # noqa: N802
        self.fake.log.append(("GET", self.path, None))
        if self.path.endswith("/screenshot"):
            self._reply(200, base64.b64encode(PNG).decode())
        else:
            self._reply(404, {"error": "unknown command", "message": self.path})

    def do_DELETE(self) -> None:  # noqa: N802
        self.fake.log.append(("DELETE", self.path, None))
        self._reply(200, None)

    def _execute(self, body: dict) -> None:
        script = body.get("script", "")
        fake = self.fake
        if "__swNextId" in script:
            elements = [
                {**e, "below": e["below"] and not fake.scrolled} for e in fake.elements
            ]
            self._reply(200, {"url": fake.url, "title": fake.title, "elements": elements})
        elif "scrollBy" in script:
            delta = float(re.search(r"scrollBy\(0, (-?[\d.]+)\)", script).group(1))
            fake.scrolled = delta > 0
            self._reply(200, None)
        else:
            self._reply(200, None)

    def _find_element(self, body: dict) -> None:
        match = re.search(r'data-swid="(\d+)"', body.get("value", ""))
        element_id = int(match.group(1)) if match else -1
        if element_id in self.fake.stale_ids or self.fake.find(element_id) is None:
            self._reply(
                404,
                {"error": "no such element", "message": f"element {element_id} is gone"},
            )
        else:
            self._reply(200, {"element-6066-11e4-a52e-4f735466cecf": f"h{element_id}"})

    def _click(self) -> None:
        if self.fake.fail_click:
            self._reply(500, {"error": "unknown error", "message": "click exploded"})
            return
        element_id = int(self.path.split("/")[-2][1:])
        self.fake.find(element_id)["name"] += "*"
        self._reply(200, None)


@pytest.fixture
def fake_endpoint():
    fake = FakeBrowser()
    server = ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
    server.fake = fake  # type: ignore[attr-defined]
    thread = threading.Thread(
        target=server.serve_forever, kwargs={"poll_interval": 0.02}, daemon=True
    )
    thread.start()
    try:
        yield fake, f"http://127.0.0.1:{server.server_address[1]}"
    finally:
        server.shutdown()
        server.server_close()


def make_session(endpoint: str, **overrides) -> BrowserSession:
    config = BrowserConfig(
        endpoint_url=endpoint, start_url="https://fake.test/home", **overrides
    )
    return BrowserSession(config)


class TestHandshake:
    def test_session_creation_and_setup(self, fake_endpoint):
        fake, endpoint = fake_endpoint
        make_session(endpoint)
        methods = [(m, p) for m, p, _ in fake.log]
        assert methods[0] == ("POST", "/session")
        assert methods[1] == ("POST", "/session/fake-sess/window/rect")
        assert methods[2] == ("POST", "/session/fake-sess/url")
        assert fake.log[1][2] == {"width": 1280, "height": 720}
        assert fake.url == "https://fake.test/home"

    def test_viewport_failure_is_tolerated(self, fake_endpoint):
        fake, endpoint = fake_endpoint
        fake.fail_rect = True
        session = make_session(endpoint)
        assert session.observe().url == "https://fake.test/home"

    def test_unreachable_endpoint(self):
        probe = socket.socket()
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
        probe.close()
        with pytest.raises(ConnectFailed):
            make_session(f"http://127.0.0.1:{port}", nav_timeout_ms=1000)

    def test_close_deletes_session(self, fake_endpoint):
        fake, endpoint = fake_endpoint
        make_session(endpoint).close()
        assert ("DELETE", "/session/fake-sess", None) in fake.log


class TestObserve:
    def test_elements_and_tree(self, fake_endpoint):
        fake, endpoint = fake_endpoint
        obs = make_session(endpoint).observe()
        assert obs.url == "https://fake.test/home"
        assert [e.id for e in obs.elements] == [1, 2, 3]
        assert obs.elements[0].role == "button"
        assert obs.elements[0].interactive is True
        assert obs.elements[2].interactive is False
        assert obs.accessibility_tree == (
            'RootWebArea "Fake"\n'
            '  button "Add" [1]\n'
            '  textbox "Search box" [2]\n'
            '  heading "Welcome" [3]'
        )
        assert obs.screenshot_ref is None

    def test_screenshots_keyed_by_content_hash(self, fake_endpoint, tmp_path):
        fake, endpoint = fake_endpoint
        shots = tmp_path / "shots"
        session = make_session(endpoint, screenshot_dir=str(shots))
        first = session.observe().screenshot_ref
        second = session.observe().screenshot_ref
        assert first == second
        digest = hashlib.sha256(PNG).hexdigest()
        assert first.endswith(f"{digest}.png")
        assert [p.name for p in shots.iterdir()] == [f"{digest}.png"]
        assert (shots / f"{digest}.png").read_bytes() == PNG


class TestExecute:
    def test_click_changes_page(self, fake_endpoint):
        fake, endpoint = fake_endpoint
        session = make_session(endpoint)
        outcome = session.execute(parse_action("click [1]"))
        assert outcome.changed is True
        assert outcome.error is None
        finds = [b for m, p, b in fake.log if p.endswith("/element")]
        assert finds[-1]["value"] == '[data-swid="1"]'
        assert any(p.endswith("/element/h1/click") for _, p, _ in fake.log)
        assert fake.find(1)["name"] == "Add*"

    def test_type_clears_then_sends_text(self, fake_endpoint):
        fake, endpoint = fake_endpoint
        session = make_session(endpoint)
        outcome = session.execute(parse_action("type [2] [usb cable]"))
        assert outcome.changed is True
        paths = [p for _, p, _ in fake.log]
        clear_at = paths.index("/session/fake-sess/element/h2/clear")
        value_at = paths.index("/session/fake-sess/element/h2/value")
        assert clear_at < value_at
        assert fake.log[value_at][2] == {"text": "usb cable"}
        assert fake.find(2)["name"] == "usb cable"

    def test_hover_dispatches_mouseover(self, fake_endpoint):
        fake, endpoint = fake_endpoint
        session = make_session(endpoint)
        outcome = session.execute(parse_action("hover [1]"))
        assert outcome.changed is False
        scripts = [
            b for _, p, b in fake.log
            if p.endswith("/execute/sync") and "mouseover" in b.get("script", "")
        ]
        assert len(scripts) == 1
        assert scripts[0]["args"] == [{"element-6066-11e4-a52e-4f735466cecf": "h1"}]

    def test_press_sends_key_down_then_up(self, fake_endpoint):
        fake, endpoint = fake_endpoint
        session = make_session(endpoint)
        session.execute(parse_action("press [ctrl+enter]"))
        (payload,) = [b for _, p, b in fake.log if p.endswith("/actions")]
        sequence = payload["actions"][0]["actions"]
        assert sequence == [
            {"type": "keyDown", "value": ""},
            {"type": "keyDown", "value": ""},
            {"type": "keyUp", "value": ""},
            {"type": "keyUp", "value": ""},
        ]

    def test_empty_press_sends_nothing(self, fake_endpoint):
        fake, endpoint = fake_endpoint
        session = make_session(endpoint)
        outcome = session.execute(parse_action("press []"))
        assert outcome.changed is False
        assert not any(p.endswith("/actions") for _, p, _ in fake.log)

    def test_scroll_down_reveals_below_fold(self, fake_endpoint):
        fake, endpoint = fake_endpoint
        session = make_session(endpoint)
        outcome = session.execute(parse_action("scroll [down]"))
        assert outcome.changed is True
        assert [e.id for e in session.observe().elements] == [1, 2, 3, 4]
        scripts = [
            b["script"] for _, p, b in fake.log
            if p.endswith("/execute/sync") and "scrollBy" in b.get("script", "")
        ]
        assert "scrollBy(0, 576.0)" in scripts[-1]
        session.execute(parse_action("scroll [up]"))
        assert [e.id for e in session.observe().elements] == [1, 2, 3]

    def test_goto_back_forward(self, fake_endpoint):
        fake, endpoint = fake_endpoint
        session = make_session(endpoint)
        outcome = session.execute(parse_action("goto [https://fake.test/cart]"))
        assert outcome.changed is True
        assert session.observe().url == "https://fake.test/cart"
        assert session.execute(parse_action("go_back")).changed is True
        assert session.observe().url == "https://fake.test/home"
        assert session.execute(parse_action("go_forward")).changed is True
        assert session.observe().url == "https://fake.test/cart"

    def test_none_terminates_session(self, fake_endpoint):
        fake, endpoint = fake_endpoint
        session = make_session(endpoint)
        outcome = session.execute(parse_action("none [done]"))
        assert outcome.changed is False
        assert session.terminal is True
        with pytest.raises(SessionTerminal):
            session.execute(parse_action("click [1]"))

    def test_reset_clears_terminal(self, fake_endpoint):
        fake, endpoint = fake_endpoint
        session = make_session(endpoint)
        session.execute(parse_action("stop [halt]"))
        session.reset()
        assert session.terminal is False
        assert session.execute(parse_action("click [1]")).changed is True

    def test_missing_element_raises(self, fake_endpoint):
        fake, endpoint = fake_endpoint
        session = make_session(endpoint)
        fake.stale_ids.add(1)
        with pytest.raises(ElementNotFound, match="element 1 is gone"):
            session.execute(parse_action("click [1]"))

    def test_server_error_becomes_step_error(self, fake_endpoint):
        fake, endpoint = fake_endpoint
        session = make_session(endpoint)
        fake.fail_click = True
        outcome = session.execute(parse_action("click [1]"))
        assert outcome.changed is False
        assert "500" in outcome.error

    def test_invalid_action_rejected_before_any_request(self, fake_endpoint):
        fake, endpoint = fake_endpoint
        session = make_session(endpoint)
        before = len(fake.log)
        with pytest.raises(InvalidAction):
            session.execute(Action(kind=ActionKind.CLICK))
        assert len(fake.log) == before


class TestKeySequence:
    @pytest.mark.parametrize(
        "combination,expected",
        [
            ("enter", [""]),
            ("ctrl+enter", ["", ""]),
            ("Ctrl+A", ["", "A"]),
            ("meta+shift+tab", ["", "", ""]),
            ("space", [" "]),
            ("x", ["x"]),
            (" + enter + ", [""]),
            ("", []),
        ],
    )
    def test_mapping(self, combination, expected):
        assert key_sequence(combination) == expected


@pytest.mark.skipif(
    not os.environ.get("SYNTHWEAVER_WEBDRIVER_URL"),
    reason="set SYNTHWEAVER_WEBDRIVER_URL to run against a real WebDriver",
)
def test_real_endpoint_smoke():
    config = BrowserConfig(
        endpoint_url=os.environ["SYNTHWEAVER_WEBDRIVER_URL"],
        start_url="about:blank",
    )
    session = BrowserSession(config)
    try:
        obs = session.observe()
        assert obs.url
    finally:
        session.close()
