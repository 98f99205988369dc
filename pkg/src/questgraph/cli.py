"""Command-line entry point: play, train, eval, stats, export, serve, gen-matrix.

Flag names mirror GameConfig fields so the docs and the wire protocol's
configure payload stay aligned. Every subcommand is deterministic given
--seed; artifact-writing commands stamp seed, config and engine version.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import agents as agentsmod
from . import corpus, graph, protocol
from . import engine as enginemod
from .engine import ENGINE_VERSION, GameConfig, Session
from .errors import QuestgraphError


def _add_scenario_flags(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", metavar="PATH", help="scenario JSON file")
    src.add_argument("--builtin", action="store_true", help="use the bundled scenario")
    p.add_argument("--hints", metavar="PATH", help="hint JSONL file")


def _add_game_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--choices", type=int, default=2, help="choices per step (default 2)")
    p.add_argument("--handicap", action="store_true", help="show hints")
    p.add_argument("--back-hop", type=int, default=1, help="hops backward per wrong action")
    p.add_argument("--neg-distance", type=int, default=None,
                   help="override the scenario's negative sampling distance")
    p.add_argument("--distance-space", choices=enginemod.DISTANCE_SPACES,
                   default="scenario-graph")
    p.add_argument("--max-steps", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0, help="64-bit unsigned seed")


def _load_assets(args):
    if args.builtin:
        scenario = corpus.builtin_scenario()
        hints = corpus.builtin_hints() if (args.hints is None) else None
    else:
        scenario = corpus.load_scenario(args.scenario)
        hints = None
    if args.hints:
        hints = corpus.load_hints(args.hints, scenario)
    g = graph.expand(graph.build_compact(scenario), scenario)
    return scenario, g, hints


def _game_config(args) -> GameConfig:
    return GameConfig(num_choices=args.choices, back_hop=args.back_hop,
                      handicap=args.handicap, neg_distance=args.neg_distance,
                      max_steps=args.max_steps, seed=args.seed,
                      distance_space=args.distance_space)


def _stamp(args, cfg: GameConfig) -> dict:
    return {"engine_version": ENGINE_VERSION, "seed": args.seed,
            "config": cfg.to_dict()}


def cmd_play(args) -> int:
    scenario, g, hints = _load_assets(args)
    cfg = _game_config(args)
    session = Session(g, scenario, hints, cfg)
    print(f"quest: {session.observation.quest}")
    while not session.done:
        obs = session.observation
        print()
        if obs.hint is not None:
            print(f"hint: {obs.hint}")
        for i, choice in enumerate(obs.choices):
            print(f"  [{i}] {choice}")
        try:
            raw = input("> ")
        except EOFError:
            print("\nbye")
            return 0
        raw = raw.strip()
        if raw.lower() in ("q", "quit", "exit"):
            print("bye")
            return 0
        if not raw.lstrip("-").isdigit() or not 0 <= int(raw) < cfg.num_choices:
            print(f"enter a number between 0 and {cfg.num_choices - 1}")
            continue
        result = session.step(int(raw))
        print(f"reward: {result.reward:+d}   running score: {session.score}")
    print(f"\n{session.state.reason}")
    print(f"score: {session.score}")
    if args.transcript:
        Path(args.transcript).write_text(session.transcript().to_jsonl(), encoding="utf-8")
        print(f"transcript written to {args.transcript}")
    return 0


def _make_env_factory(g, scenario, hints, game_cfg):
    def factory(seed: int) -> Session:
        cfg = GameConfig(**{**game_cfg.to_dict(), "seed": seed})
        return Session(g, scenario, hints, cfg)

    return factory


def _agent_config(args) -> agentsmod.AgentConfig:
    return agentsmod.AgentConfig(
        gamma=args.gamma, learning_rate=args.lr,
        epsilon_schedule=(args.eps_start, args.eps_end, args.eps_decay),
        replay_capacity=args.replay_capacity, batch_size=args.batch_size,
        target_sync_interval=args.target_sync, hidden_sizes=tuple(args.hidden),
        seed=args.seed)


def _add_agent_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--agent", choices=("random", "oracle", "tabq", "dqn", "reinforce"),
                   default="random")
    p.add_argument("--episodes", type=int, default=1000)
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--eps-start", type=float, default=1.0)
    p.add_argument("--eps-end", type=float, default=0.01)
    p.add_argument("--eps-decay", type=int, default=2000)
    p.add_argument("--replay-capacity", type=int, default=5000)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--target-sync", type=int, default=100)
    p.add_argument("--hidden", type=int, nargs="*", default=[])
    p.add_argument("--feature-dim", type=int, default=768)
    p.add_argument("--head", choices=("shared", "per_action"), default="per_action")
    p.add_argument("--embeddings", metavar="PATH", help="embedding JSONL for featurization")
    p.add_argument("--window", type=int, default=100, help="moving average window")
    p.add_argument("--workers", type=int, default=1,
                   help="reserved for vectorized training (currently sequential)")


def _build_agent(args, game_cfg):
    table = None
    if args.embeddings:
        from .features import load_embeddings

        table = load_embeddings(args.embeddings)
    return agentsmod.make_agent(args.agent, _agent_config(args), game_cfg,
                                dim=args.feature_dim, table=table, head=args.head)


def cmd_train(args) -> int:
    scenario, g, hints = _load_assets(args)
    cfg = _game_config(args)
    agent = _build_agent(args, cfg)
    report = agentsmod.train(agent, _make_env_factory(g, scenario, hints, cfg),
                             _agent_config(args), args.episodes, window=args.window,
                             eval_episodes=args.eval_episodes)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.to_csv(out / "report.csv")
    summary = {**_stamp(args, cfg), "agent": args.agent, **report.summary(),
               "last_100_mean": report.last_mean(100)}
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n",
                                      encoding="utf-8")
    print(f"episodes: {args.episodes}  last-100 mean: {report.last_mean(100):.3f}  "
          f"eval: {report.eval_mean:.3f} ± {report.eval_sd:.3f}")
    print(f"report written to {out / 'report.csv'}")
    return 0


def cmd_eval(args) -> int:
    scenario, g, hints = _load_assets(args)
    cfg = _game_config(args)
    agent = _build_agent(args, cfg)
    factory = _make_env_factory(g, scenario, hints, cfg)
    acfg = _agent_config(args)
    if getattr(agent, "learns", False) and args.train_episodes:
        agentsmod.train(agent, factory, acfg, args.train_episodes, eval_episodes=0)
    agent.set_eval(True)
    import random as _random

    seeder = _random.Random(args.seed)
    scores = [agentsmod.run_episode(agent, factory(seeder.getrandbits(64)))
              for _ in range(args.episodes)]
    mean = sum(scores) / len(scores)
    sd = (sum((x - mean) ** 2 for x in scores) / len(scores)) ** 0.5
    result = {**_stamp(args, cfg), "agent": args.agent, "episodes": args.episodes,
              "train_episodes": args.train_episodes, "mean": mean, "sd": sd}
    print(f"mean score over {args.episodes} episodes: {mean:.3f} ± {sd:.3f}")
    if args.out:
        Path(args.out).write_text(json.dumps(result, indent=2) + "\n", encoding="utf-8")
        print(f"written to {args.out}")
    return 0


def cmd_stats(args) -> int:
    scenario, g, _ = _load_assets(args)
    cg = graph.build_compact(scenario)
    st = graph.stats(g, scenario)
    print(f"scenario: {scenario.title}")
    print(f"engine: {ENGINE_VERSION}")
    print(f"compact nodes (clusters): {len(cg.cluster_ids)}")
    print(f"scenario-graph nodes (sentinels excluded): {st.node_count}")
    print(f"average degree: {st.avg_degree:.2f}")
    print(f"total paths: {st.total_paths:.3e}" if st.total_paths > 10 ** 6 else
          f"total paths: {st.total_paths}")
    if args.json:
        payload = {"title": scenario.title, "engine_version": ENGINE_VERSION,
                   "compact_nodes": len(cg.cluster_ids), "node_count": st.node_count,
                   "avg_degree": st.avg_degree, "total_paths": str(st.total_paths),
                   "neg_distance": scenario.neg_distance}
        Path(args.json).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        print(f"written to {args.json}")
    return 0


def cmd_export(args) -> int:
    scenario, g, _ = _load_assets(args)
    target = graph.build_compact(scenario) if args.graph == "compact" else g
    text = graph.export_dot(target) if args.format == "dot" else graph.export_json(target)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"written to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_serve(args) -> int:
    scenario, g, hints = _load_assets(args)
    bind = "stdio" if args.stdio else f"tcp:{args.tcp}"
    protocol.serve(g, scenario, hints, bind=bind)
    return 0


def cmd_replay(args) -> int:
    scenario = None
    hints = None
    if args.scenario:
        scenario = corpus.load_scenario(args.scenario)
        if args.hints:
            hints = corpus.load_hints(args.hints, scenario)
    verdict = protocol.replay(args.log, scenario=scenario, hints=hints)
    print(verdict)
    return 0


def cmd_gen_matrix(args) -> int:
    scenarios = [corpus.load_scenario(p) for p in args.scenarios]
    cfg = _game_config(args)
    result = agentsmod.cross_eval(args.agent, scenarios, _agent_config(args), cfg,
                                  train_episodes=args.train_episodes,
                                  eval_episodes=args.eval_episodes,
                                  dim=args.feature_dim)
    result.to_csv(args.out)
    print(f"{len(scenarios)}x{len(scenarios)} matrix written to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="questgraph",
        description="Choice-based text game environment over script knowledge graphs")
    parser.add_argument("--version", action="version", version=ENGINE_VERSION)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("play", help="play interactively")
    _add_scenario_flags(p)
    _add_game_flags(p)
    p.add_argument("--transcript", metavar="PATH", help="write the episode log")
    p.set_defaults(func=cmd_play)

    p = sub.add_parser("train", help="train a baseline agent")
    _add_scenario_flags(p)
    _add_game_flags(p)
    _add_agent_flags(p)
    p.add_argument("--eval-episodes", type=int, default=100)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate an agent's frozen policy")
    _add_scenario_flags(p)
    _add_game_flags(p)
    _add_agent_flags(p)
    p.add_argument("--train-episodes", type=int, default=0)
    p.add_argument("--out", help="output JSON file")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stats", help="graph statistics report")
    _add_scenario_flags(p)
    p.add_argument("--json", metavar="PATH", help="also write a JSON report")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("export", help="export graphs for visualization/analysis")
    _add_scenario_flags(p)
    p.add_argument("--graph", choices=("compact", "scenario"), default="scenario")
    p.add_argument("--format", choices=("dot", "json"), default="dot")
    p.add_argument("--dot", dest="format", action="store_const", const="dot",
                   help="shorthand for --format dot")
    p.add_argument("--out", metavar="PATH")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("serve", help="serve games over the wire protocol")
    _add_scenario_flags(p)
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--stdio", action="store_true")
    mode.add_argument("--tcp", metavar="HOST:PORT")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("replay", help="verify a transcript replays byte-identically")
    p.add_argument("log", help="EpisodeLog JSONL path")
    p.add_argument("--scenario", metavar="PATH")
    p.add_argument("--hints", metavar="PATH")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("gen-matrix", help="cross-scenario generalization matrix")
    p.add_argument("--scenarios", nargs="+", required=True, metavar="PATH")
    _add_game_flags(p)
    _add_agent_flags(p)
    p.add_argument("--train-episodes", type=int, default=1000)
    p.add_argument("--eval-episodes", type=int, default=100)
    p.add_argument("--out", required=True, metavar="CSV")
    p.set_defaults(func=cmd_gen_matrix)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (QuestgraphError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
