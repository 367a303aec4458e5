"""Room-object and object-object placement priors."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Set, Tuple

from .model import SchemaError

Pair = Tuple[str, str]

DEFAULT_FURNITURE_SIZE = (0.6, 0.6)
DOOR_CATEGORY = "door"


@dataclass
class PriorTable:
    room_object: Dict[str, Dict[str, float]] = field(default_factory=dict)
    on_top: Set[Pair] = field(default_factory=set)  # (supporter, supported)
    inside: Set[Pair] = field(default_factory=set)  # (container, containee)
    objects: Dict[str, Dict[str, Any]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for label, weights in self.room_object.items():
            for cat, w in weights.items():
                if w < 0:
                    raise ValueError(f"negative weight for ({label}, {cat})")
        for container, containee in self.inside:
            if self.volume_class(containee) == "large" and self.volume_class(container) == "small":
                raise ValueError(f"{containee} does not fit inside {container}")

    # -- catalog --------------------------------------------------------------

    def supporters(self) -> Set[str]:
        return {a for a, _ in self.on_top} | {a for a, _ in self.inside}

    def is_furniture(self, category: str) -> bool:
        if category in self.objects:
            return True
        if category in self.supporters():
            return True
        # anything that only ever rests on/in something else is a small item
        carried = {b for _, b in self.on_top} | {b for _, b in self.inside}
        return category not in carried

    def volume_class(self, category: str) -> str:
        return "large" if self.is_furniture(category) else "small"

    def is_openable(self, category: str) -> bool:
        meta = self.objects.get(category)
        if meta is not None and "openable" in meta:
            return bool(meta["openable"])
        return any(container == category for container, _ in self.inside)

    def size_m(self, category: str) -> Tuple[float, float]:
        meta = self.objects.get(category, {})
        size = meta.get("size", DEFAULT_FURNITURE_SIZE)
        return (float(size[0]), float(size[1]))

    def room_labels(self) -> list:
        return sorted(self.room_object)

    def furniture_weights(self, label: str) -> Dict[str, float]:
        weights = self.room_object.get(label, {})
        return {c: w for c, w in weights.items() if self.is_furniture(c) and w > 0}

    def item_weight(self, label: str, category: str) -> float:
        return float(self.room_object.get(label, {}).get(category, 1.0))

    def extended(self) -> "PriorTable":
        """Symmetrize on-top and inside relations for items that fit.

        Anything found on top of an openable container can be stored inside it,
        and anything stored inside a container can rest on top of it.
        """
        on_top = set(self.on_top)
        inside = set(self.inside)
        for sup, item in self.on_top:
            if self.is_openable(sup) and self.volume_class(item) == "small":
                inside.add((sup, item))
        for cont, item in self.inside:
            on_top.add((cont, item))
        return PriorTable(dict(self.room_object), on_top, inside, dict(self.objects))

    def relations_for(self, furniture: str) -> Iterable[Tuple[str, str]]:
        """Admissible (relation, item) pairs with ``furniture`` as the parent."""
        for sup, item in sorted(self.on_top):
            if sup == furniture:
                yield ("on_top", item)
        if self.is_openable(furniture):
            for cont, item in sorted(self.inside):
                if cont == furniture:
                    yield ("inside", item)

    # -- io -------------------------------------------------------------------

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "PriorTable":
        try:
            room_object = {
                str(k): {str(c): float(w) for c, w in v.items()} for k, v in data["room_object"].items()
            }
            on_top = {(str(a), str(b)) for a, b in data.get("on_top", [])}
            inside = {(str(a), str(b)) for a, b in data.get("inside", [])}
        except KeyError as exc:
            raise SchemaError(f"missing field {exc.args[0]!r}") from exc
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"malformed prior table: {exc}") from exc
        return cls(room_object, on_top, inside, dict(data.get("objects", {})))

    def to_json(self) -> Dict[str, Any]:
        return {
            "room_object": self.room_object,
            "on_top": sorted([list(p) for p in self.on_top]),
            "inside": sorted([list(p) for p in self.inside]),
            "objects": self.objects,
        }

    @classmethod
    def load(cls, path: Optional[Path] = None) -> "PriorTable":
        if path is None:
            text = resources.files("scenesearch.data").joinpath("priors.json").read_text()
        else:
            text = Path(path).read_text()
        return cls.from_json(json.loads(text))


def default_priors() -> PriorTable:
    return PriorTable.load()
