"""Scripted stand-in for a chat-completion endpoint."""
from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

EXHAUSTED_REPLY = "done()"


class ScriptError(ValueError):
    pass


@dataclass
class Script:
    """Ordered replies, consumed one per request, then substring rules, then ``done()``.

    A rule fires when its substring occurs in the last user message.
    """

    replies: List[str] = field(default_factory=list)
    rules: List[Tuple[str, str]] = field(default_factory=list)
    default: str = EXHAUSTED_REPLY

    @classmethod
    def from_json(cls, data: Any) -> "Script":
        if isinstance(data, list):
            data = {"replies": data}
        if not isinstance(data, dict):
            raise ScriptError("script: expected a list of replies or an object")
        replies = data.get("replies", [])
        if not isinstance(replies, list) or not all(isinstance(r, str) for r in replies):
            raise ScriptError("replies: expected a list of strings")
        rules = []
        for i, rule in enumerate(data.get("rules", [])):
            if isinstance(rule, str) and "->" in rule:
                key, reply = rule.split("->", 1)
            elif isinstance(rule, dict) and isinstance(rule.get("contains"), str) and isinstance(rule.get("reply"), str):
                key, reply = rule["contains"], rule["reply"]
            elif isinstance(rule, list) and len(rule) == 2 and all(isinstance(x, str) for x in rule):
                key, reply = rule
            else:
                raise ScriptError(f"rules[{i}]: expected 'substring->reply', [substring, reply] or "
                                  "{contains, reply}")
            rules.append((key.strip(), reply.strip()))
        default = data.get("default", EXHAUSTED_REPLY)
        if not isinstance(default, str):
            raise ScriptError("default: expected a string")
        return cls(list(replies), rules, default)

    @classmethod
    def load(cls, path: Path) -> "Script":
        try:
            return cls.from_json(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ScriptError(f"script {path}: {exc}") from exc


class ScriptedResponder:
    def __init__(self, script: Script, log_path: Optional[Path] = None) -> None:
        self.script = script
        self.cursor = 0
        self.prompts: List[str] = []
        self.log_path = Path(log_path) if log_path else None
        self.lock = threading.Lock()

    def reply(self, messages: List[Dict[str, str]]) -> str:
        prompt = next((m.get("content", "") for m in reversed(messages) if m.get("role") == "user"), "")
        with self.lock:
            self.prompts.append(prompt)
            if self.cursor < len(self.script.replies):
                out = self.script.replies[self.cursor]
                self.cursor += 1
            else:
                out = next((r for key, r in self.script.rules if key in prompt), self.script.default)
            if self.log_path is not None:
                with self.log_path.open("a") as fh:
                    fh.write(json.dumps({"n": len(self.prompts), "prompt": prompt, "reply": out}) + "\n")
        return out


def _handler(responder: ScriptedResponder):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):  # keep stderr quiet
            pass

        def _send(self, code: int, body: Dict) -> None:
            data = json.dumps(body).encode()
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_POST(self) -> None:
            if not self.path.rstrip("/").endswith("/chat/completions"):
                self._send(404, {"error": {"message": f"no route {self.path}"}})
                return
            try:
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length) or b"{}")
                messages = body["messages"]
                if not isinstance(messages, list):
                    raise TypeError("messages must be a list")
            except (ValueError, KeyError, TypeError) as exc:
                self._send(400, {"error": {"message": f"bad request: {exc}"}})
                return
            text = responder.reply(messages)
            self._send(200, {
                "id": f"mock-{len(responder.prompts)}",
                "object": "chat.completion",
                "model": body.get("model", "mock"),
                "choices": [{"index": 0, "finish_reason": "stop",
                             "message": {"role": "assistant", "content": text}}],
            })

    return Handler


class MockChatServer:
    """Serve a script on a local port; usable as a context manager."""

    def __init__(self, script: Script, host: str = "127.0.0.1", port: int = 0,
                 log_path: Optional[Path] = None) -> None:
        self.responder = ScriptedResponder(script, log_path)
        self.httpd = ThreadingHTTPServer((host, port), _handler(self.responder))
        self.thread: Optional[threading.Thread] = None

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    @property
    def prompts(self) -> List[str]:
        return self.responder.prompts

    def start(self) -> "MockChatServer":
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()
        return self

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        if self.thread is not None:
            self.thread.join()

    def serve_forever(self) -> None:
        try:
            self.httpd.serve_forever()
        finally:
            self.httpd.server_close()

    def __enter__(self) -> "MockChatServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
