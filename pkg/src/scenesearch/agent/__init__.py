"""Decision loop, subpolicies and policies."""
from .actions import HighLevelAction, InvalidAction, available_actions, parse_reply
from .chat import ChatClient, ChatEndpointConfig, ChatError, ChatRoomClassifier
from .loop import EpisodeResult, Limits, load_trace, replay_cost, run_episode
from .policies import (
    POLICIES,
    ChatPolicy,
    CooccurrencePolicy,
    GreedyPolicy,
    OraclePolicy,
    Policy,
    PolicyDecision,
    PolicyError,
    RandomPolicy,
    make_policy,
)

__all__ = [
    "ChatClient", "ChatEndpointConfig", "ChatError", "ChatPolicy", "ChatRoomClassifier", "CooccurrencePolicy",
    "EpisodeResult", "GreedyPolicy", "HighLevelAction", "InvalidAction", "Limits", "OraclePolicy", "POLICIES",
    "Policy", "PolicyDecision", "PolicyError", "RandomPolicy", "available_actions", "load_trace", "make_policy",
    "parse_reply", "replay_cost", "run_episode",
]
