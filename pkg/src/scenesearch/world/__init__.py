"""Ground-truth gridworld: layouts, episodes and the low-level simulator."""
from .episode import EnrichConfig, EpisodeError, enrich_episode, gt_traversable
from .layout import LayoutConfig, LayoutError, generate_layout
from .model import CLOSED, NOT_APPLICABLE, OPEN, Door, Episode, GtRoom, ObjectSpec, Pose, SchemaError, WorldSpec
from .priors import PriorTable, default_priors
from .sim import (
    INTERACTION_COST,
    INTERACTION_RADIUS_M,
    MOTION_COST,
    Action,
    Detection,
    Observation,
    WorldState,
    full_rotation,
    initial_state,
    sense,
    step,
)

__all__ = [
    "Action", "CLOSED", "Detection", "Door", "EnrichConfig", "Episode", "EpisodeError", "GtRoom",
    "INTERACTION_COST", "INTERACTION_RADIUS_M", "LayoutConfig", "LayoutError", "MOTION_COST", "NOT_APPLICABLE",
    "OPEN", "ObjectSpec", "Observation", "Pose", "PriorTable", "SchemaError", "WorldSpec", "WorldState",
    "default_priors", "enrich_episode", "full_rotation", "generate_layout", "gt_traversable", "initial_state",
    "sense", "step",
]
