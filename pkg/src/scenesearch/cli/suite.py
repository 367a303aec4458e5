"""Episode suites: generate, run, and write traces plus aggregate metrics."""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

from ..agent.chat import ChatClient, ChatRoomClassifier
from ..agent.loop import EpisodeResult, run_episode
from ..agent.policies import make_policy
from ..metrics import EfficiencyCurve, summarize
from ..world.episode import EpisodeError, enrich_episode
from ..world.layout import LayoutError, generate_layout
from ..world.model import Episode
from ..world.priors import default_priors
from .config import RunConfig
from .render import make_snapshot, render_snapshot

log = logging.getLogger(__name__)

SEED_STRIDE = 1_000_003
GENERATION_TRIES = 5


class SuiteAborted(RuntimeError):
    pass


@dataclass
class SuiteOutput:
    out: Path
    results: List[EpisodeResult]
    report: dict
    curve: EfficiencyCurve


def make_episode(config: RunConfig, index: int) -> Episode:
    """Deterministic episode ``index`` of a suite; infeasible seeds are skipped by a fixed stride."""
    layout_cfg = config.layout_obj()
    priors = default_priors()
    last: Optional[Exception] = None
    for k in range(GENERATION_TRIES):
        try:
            spec = generate_layout(config.layout_seed(index) + k * SEED_STRIDE, layout_cfg)
            return enrich_episode(spec, priors, config.episode_seed(index) + k * SEED_STRIDE)
        except (LayoutError, EpisodeError) as exc:
            last = exc
    raise SuiteAborted(f"episode {index}: could not generate a feasible episode: {last}")


def _name(index: int) -> str:
    return f"ep_{index:04d}"


def _run_one(config: RunConfig, index: int, out: Path) -> EpisodeResult:
    episode = make_episode(config, index)
    episode.save(out / "episodes" / f"{_name(index)}.json")
    client = ChatClient(config.chat_obj()) if "chat" in (config.policy, config.classifier) else None
    classifier = ChatRoomClassifier(client) if config.classifier == "chat" else None

    on_step = None
    if config.svg_every:
        walked: List[Tuple[int, int]] = []

        def on_step(i, ex, view):
            walked.extend(c for c in ex.log.path if not walked or walked[-1] != c)
            if i % config.svg_every == 0:
                doc = make_snapshot(i, ex.bev, view.sg, view.frontiers, ex.state.pose, walked)
                stem = out / "snapshots" / f"{_name(index)}_step_{i:03d}"
                stem.with_suffix(".json").write_text(json.dumps(doc))
                stem.with_suffix(".svg").write_text(render_snapshot(doc))

    def attempt(policy_name: str) -> EpisodeResult:
        policy = make_policy(policy_name, client, Path(config.similarity) if config.similarity else None)
        with (out / "traces" / f"{_name(index)}.jsonl").open("w") as fh:
            return run_episode(episode, policy, config.limits_obj(), classifier, fh, on_step)

    result = attempt(config.policy)
    if result.reason.startswith("policy error"):
        if config.fallback_policy is None:
            raise SuiteAborted(f"episode {index}: {result.reason}")
        log.warning("episode %d: %s; rerunning with %s", index, result.reason, config.fallback_policy)
        result = attempt(config.fallback_policy)
        result.events.append({"step": 0, "kind": "fallback", "detail": config.fallback_policy})
    return result


def run_suite(config: RunConfig) -> SuiteOutput:
    out = Path(config.out)
    for sub in ("episodes", "traces") + (("snapshots",) if config.svg_every else ()):
        (out / sub).mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(config.to_json(), indent=2, sort_keys=True) + "\n")

    indices = range(config.episodes)
    if config.workers == 1:
        results = [_run_one(config, i, out) for i in indices]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(lambda i: _run_one(config, i, out), indices))

    limits = config.limits_obj()
    report, curve = summarize(results, limits.budget)
    echoed = {k: v for k, v in config.to_json().items() if k != "out"}  # reruns elsewhere stay byte-identical
    doc = {
        "config": echoed,
        "summary": report,
        "episodes": [{**r.summary(), "events": r.events} for r in results],
    }
    (out / "metrics.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    (out / "efficiency_curve.csv").write_text(curve.to_csv())
    plot_curves({config.policy: curve}, out / "efficiency_curve.png")
    return SuiteOutput(out, results, report, curve)


def plot_curves(curves: dict, path: Path) -> None:
    """Efficiency curves of one or more runs in a single figure."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for name, curve in curves.items():
        ax.step(curve.budgets, curve.fraction, where="post", label=name)
    ax.set_xlabel("weighted low-level steps")
    ax.set_ylabel("success fraction")
    ax.set_ylim(0, 1.02)
    ax.set_xlim(0, max(c.max_budget for c in curves.values()))
    ax.grid(alpha=0.3)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
