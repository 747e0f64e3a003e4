"""Command line entry point: ``hima <subcommand> ...``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import Optional

from ..clustering import assign_strategic_objective, cluster_replays
from ..config import load_config
from ..demos import ReplayLog, emit_dataset
from ..planner import MODES, Deterministic, External as ExternalPlanner
from ..world.catalog import load_catalog
from .ablate import AXES, AblationSpec, UnknownAxis, ablate
from .match import Builtin, ConfigError, Expert, External, Hima, MatchConfig, run_match, win_rate
from .metrics import IncompleteTrace, compute_metrics
from .pipeline import build_from_logs, expert_replays, samples_for


def _load_replays(directory) -> list:
    paths = sorted(Path(directory).glob("*.replay.jsonl"))
    if not paths:
        raise FileNotFoundError(f"no replay files in {directory}")
    return [ReplayLog.load(p) for p in paths]


def _pool(args, settings):
    logs = _load_replays(args.replays) if getattr(args, "replays", None) else expert_replays(args.race)
    return build_from_logs(logs, args.race, settings).pool


def _hima(args, settings) -> Hima:
    if getattr(args, "planner_endpoint", None):
        backend = ExternalPlanner(args.planner_endpoint, settings.agent)
    else:
        backend = Deterministic(settings.planner)
    ids = tuple(args.agents) if getattr(args, "agents", None) else None
    return Hima(_pool(args, settings), backend, settings.feedback, args.delta, args.mode, ids,
                not getattr(args, "no_tcot", False))


def _opponent(spec: str, settings):
    """``builtin:<level>``, ``expert:<style>`` or ``external:<endpoint>``."""
    kind, _, value = spec.partition(":")
    if kind == "builtin":
        return Builtin(int(value))
    if kind == "expert":
        return Expert(value)
    if kind == "external":
        return External(value or settings.agent.endpoint, settings.agent)
    raise ConfigError(f"unknown opponent {spec!r}; use builtin:<level>, expert:<style> or external:<endpoint>")


def _add_hima_args(p) -> None:
    p.add_argument("--race", default="protoss")
    p.add_argument("--mode", default="ngt", choices=MODES)
    p.add_argument("--delta", type=int, default=180)
    p.add_argument("--agents", type=int, nargs="*", help="advisor ids to use (default: all)")
    p.add_argument("--no-tcot", action="store_true", help="schedule the merged plan without decomposition")
    p.add_argument("--replays", help="directory of expert replays to build advisors from")
    p.add_argument("--planner-endpoint", help="use an external planner at this endpoint")


def _add_winners_flag(p) -> None:
    p.add_argument("--winners-only", dest="winners_only", action="store_true", default=None)
    p.add_argument("--all-sides", dest="winners_only", action="store_false", help="keep losing sides too")


def cmd_simulate(args, settings) -> int:
    sides = (_hima(args, settings), _opponent(args.opponent, settings))
    res = run_match(MatchConfig(sides, (args.race, args.opponent_race), args.seed, args.time_cap,
                                record_replay=bool(args.replay), trace_path=args.trace, replay_path=args.replay))
    print(json.dumps({"winner": res.winner, "duration": res.duration, "seed": res.seed,
                      "planner_calls": res.planner_calls[0], "advisor_calls": res.advisor_calls[0],
                      "threat_events": res.threat_events[0], "exhaustion_events": res.exhaustion_events[0],
                      "trace_hash": res.trace_hash}))
    return 0


def _print_rate(wr, out: Optional[str]) -> None:
    lines = ["seed\twinner\tplanner_calls"]
    lines += [f"{s}\t{'draw' if w is None else w}\t{c}" for (s, w), c in
              zip(wr.results, wr.planner_calls or [0] * len(wr.results))]
    text = "\n".join(lines) + "\n"
    if out:
        Path(out).write_text(text)
    print(f"win_rate\t{wr.fraction:.4f}\t{wr.wins}/{len(wr.results)}")


def cmd_ladder(args, settings) -> int:
    if args.side == "hima":
        side = _hima(args, settings)
    else:
        side = _opponent(args.side, settings)
    template = MatchConfig((side, Builtin(args.level)), (args.race, args.opponent_race), time_cap=args.time_cap)
    _print_rate(win_rate(template, args.n, args.seed_base, args.workers), args.out)
    return 0


def cmd_arena(args, settings) -> int:
    first = _hima(args, settings)
    if args.against.startswith("external:"):
        second = _opponent(args.against, settings)
    else:
        second = Hima(first.pool, first.backend, settings.feedback, args.delta, args.against)
    template = MatchConfig((first, second), (args.race, args.race), time_cap=args.time_cap)
    _print_rate(win_rate(template, args.n, args.seed_base, args.workers), args.out)
    return 0


def _demo_settings(args, settings):
    demos = settings.demos
    if getattr(args, "window_seconds", None):
        demos = dataclasses.replace(demos, window_seconds=args.window_seconds)
    if getattr(args, "rationale_mode", None):
        demos = dataclasses.replace(demos, rationale_mode=args.rationale_mode)
    if getattr(args, "winners_only", None) is not None:
        demos = dataclasses.replace(demos, winners_only=args.winners_only)
    clustering = settings.clustering
    if getattr(args, "k", None):
        clustering = dataclasses.replace(clustering, k=args.k)
    if getattr(args, "seed", None) is not None:
        clustering = dataclasses.replace(clustering, seed=args.seed)
    return dataclasses.replace(settings, demos=demos, clustering=clustering)


def cmd_dataset(args, settings) -> int:
    settings = _demo_settings(args, settings)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    logs = expert_replays(args.race, args.per_style, args.seed_base)
    for log in logs:
        log.save(out / f"{log.replay_id}.replay.jsonl")
    res = build_from_logs(logs, args.race, settings)
    n = emit_dataset(res.samples, out / "samples.jsonl", window_seconds=settings.demos.window_seconds)
    print(f"replays\t{len(logs)}\nsamples\t{n}")
    return 0


def cmd_cluster(args, settings) -> int:
    settings = _demo_settings(args, settings)
    catalog = load_catalog(args.race)
    cc = settings.clustering
    logs = _load_replays(args.replays)
    model = cluster_replays(logs, catalog, cc.k, cc.seed, settings.demos.winners_only, cc.max_iter)
    if args.out:
        model.save(args.out)
    sizes = {i: 0 for i in range(model.k)}
    for c in model.assignments.values():
        sizes[c] += 1
    samples = samples_for(logs, model, settings)
    print("cluster\tlabel\tair_share\tground_share\treplays\tsamples")
    for o in assign_strategic_objective(model, catalog, cc.dominance_threshold):
        n = sum(1 for s in samples if s.cluster_id == o.cluster)
        print(f"{o.cluster}\t{o.label.value}\t{o.air_share:.3f}\t{o.ground_share:.3f}\t{sizes[o.cluster]}\t{n}")
    return 0


def _parse_value(axis: str, text: str):
    if axis == "tcot":
        return text.lower() in ("1", "true", "on", "yes")
    if axis in ("agent_count", "delta"):
        return int(text)
    return text


def cmd_ablate(args, settings) -> int:
    values = [_parse_value(args.axis, v) for v in args.values] if args.values else None
    spec = AblationSpec(args.axis, values, args.level, args.n or settings.harness.ablation_matches, args.seed_base,
                        args.race, args.opponent_race, args.workers, settings=settings)
    logs = _load_replays(args.replays) if args.replays else None
    table = ablate(spec, logs, args.out)
    sys.stdout.write(table.to_tsv())
    return 0


def cmd_metrics(args, settings) -> int:
    report = compute_metrics(args.trace)
    text = report.to_tsv()
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hima", description="Multi-agent macro planning in a text RTS simulator")
    parser.add_argument("--config", help="JSON file overriding the defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="play one match")
    _add_hima_args(p)
    p.add_argument("--opponent", default="builtin:4")
    p.add_argument("--opponent-race", default="zerg")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--time-cap", type=int, default=3600)
    p.add_argument("--trace")
    p.add_argument("--replay")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ladder", help="win rate against one builtin level")
    _add_hima_args(p)
    p.add_argument("--side", default="hima", help="hima, builtin:<level> or expert:<style>")
    p.add_argument("--level", type=int, default=4)
    p.add_argument("--opponent-race", default="zerg")
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--seed-base", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--time-cap", type=int, default=3600)
    p.add_argument("--out", help="per-seed results file")
    p.set_defaults(func=cmd_ladder)

    p = sub.add_parser("arena", help="HIMA against another HIMA mode or an external agent")
    _add_hima_args(p)
    p.add_argument("--against", default="direct", help="a planner mode or external:<endpoint>")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--seed-base", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--time-cap", type=int, default=3600)
    p.add_argument("--out")
    p.set_defaults(func=cmd_arena)

    p = sub.add_parser("dataset", help="record expert replays and write the demonstration dataset")
    p.add_argument("--race", default="protoss")
    p.add_argument("--per-style", type=int, default=6)
    p.add_argument("--seed-base", type=int, default=1000)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--window-seconds", type=int)
    p.add_argument("--rationale-mode", choices=("template", "external"))
    _add_winners_flag(p)
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("cluster", help="cluster recorded replays by final army composition")
    p.add_argument("--race", default="protoss")
    p.add_argument("--replays", required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    _add_winners_flag(p)
    p.add_argument("--out", help="write the cluster model here")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("ablate", help="win rate per value of one configuration axis")
    p.add_argument("--axis", required=True, help=", ".join(AXES))
    p.add_argument("--values", nargs="*")
    p.add_argument("--level", type=int, default=5)
    p.add_argument("--n", type=int)
    p.add_argument("--seed-base", type=int, default=0)
    p.add_argument("--race", default="protoss")
    p.add_argument("--opponent-race", default="zerg")
    p.add_argument("--replays")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("metrics", help="recompute PBR/RUR/APU/TR from a trace file")
    p.add_argument("trace")
    p.add_argument("--out")
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = load_config(args.config)
        return args.func(args, settings)
    except (ConfigError, UnknownAxis, IncompleteTrace, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
