"""Run configuration: defaults, JSON file, then command-line overrides."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Optional

from ..agent.chat import ChatEndpointConfig
from ..agent.loop import Limits
from ..agent.policies import POLICIES
from ..world.layout import LayoutConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    policy: str = "greedy"
    episodes: int = 25
    seed: int = 0
    worlds: int = 0  # distinct layouts cycled over; 0 gives every episode its own layout
    out: str = "runs/latest"
    layout: Dict[str, Any] = field(default_factory=dict)
    limits: Dict[str, int] = field(default_factory=dict)
    chat: Dict[str, Any] = field(default_factory=dict)
    classifier: str = "rules"  # rules | chat
    svg_every: int = 0
    fallback_policy: Optional[str] = None
    similarity: Optional[str] = None
    workers: int = 1

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.policy not in POLICIES:
            raise ConfigError(f"policy: {self.policy!r} is not one of {', '.join(POLICIES)}")
        if self.fallback_policy is not None and self.fallback_policy not in POLICIES:
            raise ConfigError(f"fallback_policy: {self.fallback_policy!r} is not one of {', '.join(POLICIES)}")
        if self.fallback_policy == "chat":
            raise ConfigError("fallback_policy: chat cannot be its own fallback")
        if self.episodes <= 0:
            raise ConfigError(f"episodes: must be positive, got {self.episodes}")
        if self.worlds < 0:
            raise ConfigError(f"worlds: must be non-negative, got {self.worlds}")
        if self.svg_every < 0:
            raise ConfigError(f"svg_every: must be non-negative, got {self.svg_every}")
        if self.workers <= 0:
            raise ConfigError(f"workers: must be positive, got {self.workers}")
        if self.classifier not in ("rules", "chat"):
            raise ConfigError(f"classifier: expected 'rules' or 'chat', got {self.classifier!r}")
        try:
            self.limits_obj()
            self.layout_obj()
            self.chat_obj()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def limits_obj(self) -> Limits:
        return Limits(**self.limits)

    def layout_obj(self) -> LayoutConfig:
        return LayoutConfig.from_dict(self.layout)

    def chat_obj(self) -> ChatEndpointConfig:
        return ChatEndpointConfig(**self.chat)

    def layout_seed(self, index: int) -> int:
        return self.seed + (index % self.worlds if self.worlds else index)

    def episode_seed(self, index: int) -> int:
        return self.seed + index

    def to_json(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"{unknown[0]}: unknown config key")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path: Optional[Path], overrides: Dict[str, Any]) -> RunConfig:
    """Defaults, then the JSON file, then non-None overrides."""
    data: Dict[str, Any] = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config {path}: expected a JSON object")
    for key, value in overrides.items():
        if value is None:
            continue
        if key == "chat_url":
            data["chat"] = {**data.get("chat", {}), "base_url": value}
        else:
            data[key] = value
    return RunConfig.from_dict(data)
