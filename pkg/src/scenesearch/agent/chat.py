"""Minimal client for chat-completion style HTTP endpoints."""
from __future__ import annotations

import os
import time
from dataclasses import dataclass
from typing import Dict, List, Optional

import requests


class ChatError(RuntimeError):
    pass


@dataclass
class ChatEndpointConfig:
    base_url: str = "http://127.0.0.1:8765"
    model: str = "mock"
    temperature: float = 0.0
    timeout: float = 30.0
    retries: int = 2
    api_key_env: str = "SCENESEARCH_API_KEY"

    def __post_init__(self) -> None:
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.retries < 0:
            raise ValueError("retries must be non-negative")

    @property
    def url(self) -> str:
        base = self.base_url.rstrip("/")
        return base if base.endswith("/chat/completions") else base + "/v1/chat/completions"


class ChatClient:
    """Stateless per request; safe to share between episodes."""

    def __init__(self, config: ChatEndpointConfig, session: Optional[requests.Session] = None) -> None:
        self.config = config
        self.session = session or requests.Session()

    def complete(self, messages: List[Dict[str, str]]) -> str:
        cfg = self.config
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(cfg.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        body = {"model": cfg.model, "messages": messages, "temperature": cfg.temperature}
        last: Optional[Exception] = None
        for attempt in range(cfg.retries + 1):
            try:
                resp = self.session.post(cfg.url, json=body, headers=headers, timeout=cfg.timeout)
                resp.raise_for_status()
                return str(resp.json()["choices"][0]["message"]["content"])
            except (requests.RequestException, KeyError, IndexError, TypeError, ValueError) as exc:
                last = exc
                if attempt < cfg.retries:
                    time.sleep(min(0.2 * 2**attempt, 2.0))
        raise ChatError(f"chat endpoint {cfg.url} failed after {cfg.retries + 1} attempts: {last}")


class ChatRoomClassifier:
    """Room classification through the chat endpoint; replies are '<index>: <label>' lines."""

    def __init__(self, client: ChatClient) -> None:
        self.client = client

    def __call__(self, rooms):
        from ..textenc import classification_prompt

        reply = self.client.complete([{"role": "user", "content": classification_prompt(rooms)}])
        labels: Dict[int, str] = {}
        for line in reply.splitlines():
            head, sep, tail = line.partition(":")
            if sep and head.strip().isdigit():
                labels[int(head.strip())] = tail.strip()
        if sorted(labels) != list(range(len(rooms))):
            raise ValueError(f"classification reply does not cover all rooms: {reply!r}")
        return [labels[i] for i in range(len(rooms))]
