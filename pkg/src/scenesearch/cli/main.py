"""Command-line entry point: run, render, mock-server, report."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from ..agent.loop import load_trace
from ..agent.policies import POLICIES
from ..metrics import EfficiencyCurve, auc_e
from ..world.model import Episode, SchemaError
from .config import ConfigError, load_config
from .mock_server import MockChatServer, Script, ScriptError
from .render import RenderError, render_snapshot, render_trace
from .suite import SuiteAborted, plot_curves, run_suite


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scenesearch", description="Object search in gridworld scene graphs.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an episode suite")
    run.add_argument("--config", type=Path, help="JSON run configuration")
    run.add_argument("--policy", choices=POLICIES)
    run.add_argument("--episodes", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--worlds", type=int, help="number of distinct layouts (0: one per episode)")
    run.add_argument("--out", type=str)
    run.add_argument("--chat-url", type=str)
    run.add_argument("--svg-every", type=int, help="write a snapshot SVG every N steps")
    run.add_argument("--fallback-policy", choices=[p for p in POLICIES if p != "chat"])
    run.add_argument("--workers", type=int)

    render = sub.add_parser("render", help="render a snapshot JSON or trace JSONL to SVG")
    render.add_argument("input", type=Path)
    render.add_argument("--episode", type=Path, help="episode JSON for a trace (default: sibling episodes/ dir)")
    render.add_argument("--out", type=Path)

    mock = sub.add_parser("mock-server", help="serve a scripted chat-completion endpoint")
    mock.add_argument("script", type=Path)
    mock.add_argument("--host", default="127.0.0.1")
    mock.add_argument("--port", type=int, default=8765)
    mock.add_argument("--log", type=Path, help="append received prompts as JSONL")

    report = sub.add_parser("report", help="compare finished runs and plot their efficiency curves")
    report.add_argument("runs", nargs="+", type=Path)
    report.add_argument("--out", type=Path, help="figure path (default: <first run>/comparison.png)")
    return parser


def cmd_run(args: argparse.Namespace) -> int:
    overrides = {k: getattr(args, k) for k in
                 ("policy", "episodes", "seed", "worlds", "out", "chat_url", "svg_every", "fallback_policy", "workers")}
    config = load_config(args.config, overrides)
    result = run_suite(config)
    s = result.report
    print(f"{config.policy}: {s['episodes']} episodes  SR {s['success_rate']:.3f}  SPL {s['spl']:.3f}  "
          f"AUC-E {s['auc_e']:.3f}  -> {result.out}")
    return 0


def cmd_render(args: argparse.Namespace) -> int:
    path: Path = args.input
    if path.suffix == ".jsonl":
        try:
            trace = load_trace(path)
        except (ValueError, OSError) as exc:
            raise RenderError(f"{path}: {exc}") from exc
        ep_path = args.episode or path.parent.parent / "episodes" / f"{path.stem}.json"
        try:
            episode = Episode.load(ep_path)
        except (OSError, SchemaError, KeyError, ValueError) as exc:
            raise RenderError(f"episode {ep_path}: {exc}") from exc
        text = render_trace(trace, episode)
    else:
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise RenderError(f"{path}: {exc}") from exc
        text = render_snapshot(doc)
    out = args.out or path.with_suffix(".svg")
    out.write_text(text)
    print(out)
    return 0


def cmd_mock(args: argparse.Namespace) -> int:
    server = MockChatServer(Script.load(args.script), args.host, args.port, args.log)
    print(f"serving {args.script} at {server.url}/v1/chat/completions", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    curves = {}
    print(f"{'run':<24} {'policy':<13} {'n':>4} {'SR':>6} {'SPL':>6} {'AUC-E':>6}")
    for run in args.runs:
        try:
            metrics = json.loads((run / "metrics.json").read_text())
            curve = EfficiencyCurve.from_csv((run / "efficiency_curve.csv").read_text())
        except (OSError, json.JSONDecodeError, ValueError) as exc:
            raise RenderError(f"{run}: {exc}") from exc
        s = metrics["summary"]
        policy = metrics["config"]["policy"]
        label = f"{policy} ({run.name})" if policy in curves else policy
        curves[label] = curve
        print(f"{run.name:<24} {policy:<13} {s['episodes']:>4} {s['success_rate']:>6.3f} {s['spl']:>6.3f} "
              f"{auc_e(curve):>6.3f}")
    out = args.out or args.runs[0] / "comparison.png"
    plot_curves(curves, out)
    print(out)
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    handlers = {"run": cmd_run, "render": cmd_render, "mock-server": cmd_mock, "report": cmd_report}
    try:
        return handlers[args.command](args)
    except (ConfigError, RenderError, ScriptError, SuiteAborted) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
