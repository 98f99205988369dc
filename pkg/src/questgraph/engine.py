"""The playable choice-based environment.

A game walks the scenario graph from START toward END. At every step the
engine samples one correct choice (a surface text of a next step node) and
``num_choices - 1`` wrong choices drawn from nodes more than ``neg_distance``
undirected hops away. Correct answers advance, wrong answers cost -1 and
hop the player backward, finishing the quest pays +10, and the episode ends
after ``consecutive_wrong_limit`` successive mistakes.

Determinism contract: a game is fully determined by (seed, config, action
sequence). All randomness flows through one ``random.Random`` stream whose
draw order is documented on :func:`sample_choices` and :func:`step`.
"""

from __future__ import annotations

import hashlib
import json
import random
import weakref
from dataclasses import dataclass, field
from typing import Optional

from . import graph as graphmod
from .corpus import HintStore, Scenario, scenario_to_dict
from .errors import ConfigError, OutOfRange, SamplingError, Terminated
from .graph import END, START, ScenarioGraph

ENGINE_VERSION = "0.1.0"

IN_PROGRESS = "InProgress"
GOAL_REACHED = "GoalReached"
TOO_MANY_WRONG = "TooManyWrong"
STEP_CAP_EXCEEDED = "StepCapExceeded"

DISTANCE_SPACES = ("scenario-graph", "compact-graph")

# Attempts to assemble pairwise-distinct choice texts before giving up.
_TEXT_RETRIES = 8


@dataclass(frozen=True)
class GameConfig:
    num_choices: int = 2
    back_hop: int = 1
    handicap: bool = False
    neg_distance: Optional[int] = None  # None -> use the scenario's distance
    consecutive_wrong_limit: int = 5
    max_steps: Optional[int] = 10_000
    seed: int = 0
    distance_space: str = "scenario-graph"

    def validate(self) -> None:
        if self.num_choices < 2:
            raise ConfigError(f"num_choices must be >= 2, got {self.num_choices}")
        if self.back_hop < 1:
            raise ConfigError(f"back_hop must be >= 1, got {self.back_hop}")
        if self.consecutive_wrong_limit < 1:
            raise ConfigError("consecutive_wrong_limit must be >= 1")
        if self.neg_distance is not None and self.neg_distance < 1:
            raise ConfigError(f"neg_distance must be >= 1, got {self.neg_distance}")
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1 or None")
        if self.distance_space not in DISTANCE_SPACES:
            raise ConfigError(f"distance_space must be one of {DISTANCE_SPACES}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must fit in 64 unsigned bits")

    def to_dict(self) -> dict:
        return {
            "num_choices": self.num_choices,
            "back_hop": self.back_hop,
            "handicap": self.handicap,
            "neg_distance": self.neg_distance,
            "consecutive_wrong_limit": self.consecutive_wrong_limit,
            "max_steps": self.max_steps,
            "seed": self.seed,
            "distance_space": self.distance_space,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GameConfig":
        return cls(**{k: data[k] for k in cls().to_dict() if k in data})


@dataclass(frozen=True)
class Observation:
    quest: str
    choices: tuple[str, ...]
    hint: Optional[str]
    # Hidden from agents; present only in-process for the logger and oracle.
    correct_index: Optional[int]

    def public_dict(self) -> dict:
        """Agent-facing view; never includes the correct index."""
        return {"quest": self.quest, "choices": list(self.choices), "hint": self.hint}


@dataclass(frozen=True)
class StepResult:
    reward: int
    done: bool
    reason: str
    next_observation: Optional[Observation]


@dataclass(frozen=True)
class StepRecord:
    t: int
    node: str  # node occupied when the observation was shown
    choices: tuple[str, ...]
    hint: Optional[str]
    action: int
    correct: int
    reward: int
    done: bool
    reason: str

    def to_json(self) -> str:
        return json.dumps({
            "t": self.t, "node": self.node, "choices": list(self.choices),
            "hint": self.hint, "action": self.action, "correct": self.correct,
            "reward": self.reward, "done": self.done, "reason": self.reason,
        }, ensure_ascii=False, separators=(",", ":"))


@dataclass
class GameState:
    current: str
    consecutive_wrong: int
    cumulative_reward: int
    step_index: int
    rng: random.Random
    done: bool
    reason: str
    last_observation: Optional[Observation]
    correct_node: Optional[str]  # hidden: step node behind the correct choice
    records: list[StepRecord] = field(default_factory=list)
    _scenario: Optional[Scenario] = None
    _hints: Optional[HintStore] = None
    _config: Optional[GameConfig] = None


class _Tables:
    """Per-(graph, distance space, distance) lookup tables for fast play."""

    def __init__(self, g: ScenarioGraph, s: Scenario, space: str, neg_distance: int):
        self.neg_distance = neg_distance
        self.space = space
        self.choice_successors = {n: g.choice_successors(n) for n in g.nodes}
        self.terminal_steps = g.terminal_steps
        self.positions = g.positions()
        self.decision_positions = g.decision_positions()

        if space == "compact-graph":
            cg = graphmod.build_compact(s)
            cdist = {c: cg.undirected_distances(c) for c in cg.nodes}

            def far(a: str, b: str) -> bool:
                ca, cb = g.compact_origin[a], g.compact_origin[b]
                return cdist[ca].get(cb, float("inf")) > neg_distance
        else:
            def far(a: str, b: str) -> bool:
                return g.undirected_distances(a).get(b, float("inf")) > neg_distance

        steps = sorted(g.step_nodes)
        self.neg_pool: dict[str, tuple[str, ...]] = {}
        for node in self.decision_positions:
            succ = set(self.choice_successors[node])
            self.neg_pool[node] = tuple(
                v for v in steps if v != node and v not in succ and far(node, v)
            )


_tables_cache: "weakref.WeakKeyDictionary[ScenarioGraph, dict]" = weakref.WeakKeyDictionary()


def _tables(g: ScenarioGraph, s: Scenario, cfg: GameConfig) -> _Tables:
    d = cfg.neg_distance if cfg.neg_distance is not None else s.neg_distance
    key = (cfg.distance_space, d)
    per_graph = _tables_cache.setdefault(g, {})
    if key not in per_graph:
        per_graph[key] = _Tables(g, s, cfg.distance_space, d)
    return per_graph[key]


def scenario_digest(s: Scenario) -> str:
    payload = json.dumps(scenario_to_dict(s), sort_keys=True).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()


def hints_digest(hints: Optional[HintStore]) -> Optional[str]:
    if hints is None:
        return None
    payload = json.dumps({k: list(v) for k, v in sorted(hints.hints.items())},
                         sort_keys=True).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()


def _sample(state: GameState, g: ScenarioGraph, s: Scenario,
            hints: Optional[HintStore], cfg: GameConfig) -> Observation:
    """Build an observation at ``state.current``.

    Draw order (one rng stream): 1) correct successor node, 2) correct
    surface text, 3) wrong-choice nodes without replacement then one text
    each, retried as a whole on text collisions, 4) choice order shuffle,
    5) hint pick when the handicap is on.
    """
    tables = _tables(g, s, cfg)
    rng = state.rng
    succs = tables.choice_successors[state.current]
    if not succs:
        raise SamplingError(f"node {state.current} has no next actions")

    node = succs[rng.randrange(len(succs))]
    texts = g.action_texts[node]
    correct_text = texts[rng.randrange(len(texts))]

    pool = tables.neg_pool[state.current]
    needed = cfg.num_choices - 1
    if len(pool) < needed:
        raise SamplingError(
            f"node {state.current} has {len(pool)} eligible far nodes, "
            f"need {needed} (distance > {tables.neg_distance})")
    negatives: list[str] = []
    for _ in range(_TEXT_RETRIES):
        candidates = rng.sample(pool, needed)
        drawn = [g.action_texts[v][rng.randrange(len(g.action_texts[v]))] for v in candidates]
        if len({correct_text, *drawn}) == cfg.num_choices:
            negatives = drawn
            break
    if not negatives and needed:
        raise SamplingError("could not assemble pairwise distinct choice texts")

    items = [correct_text] + negatives
    order = list(range(cfg.num_choices))
    rng.shuffle(order)
    choices = tuple(items[i] for i in order)
    correct_index = order.index(0)

    hint = None
    if cfg.handicap:
        node_hints = hints.for_node(state.current)  # coverage checked at new_game
        hint = node_hints[rng.randrange(len(node_hints))]

    state.correct_node = node
    return Observation(quest=s.title, choices=choices, hint=hint, correct_index=correct_index)


def sample_choices(state: GameState, g: ScenarioGraph, s: Scenario,
                   cfg: GameConfig) -> Observation:
    """Sample a fresh observation for the current node (state not done)."""
    if state.done:
        raise Terminated("game is finished")
    obs = _sample(state, g, s, state._hints, cfg)
    state.last_observation = obs
    return obs


def new_game(g: ScenarioGraph, s: Scenario, hints: Optional[HintStore],
             cfg: GameConfig) -> tuple[GameState, Observation]:
    """Start an episode at START and return the first observation."""
    cfg.validate()
    tables = _tables(g, s, cfg)
    if cfg.handicap:
        if hints is None:
            raise ConfigError("handicap mode requires a hint store")
        missing = [n for n in tables.positions if n not in hints.hints]
        if missing:
            raise ConfigError(f"hint store misses {len(missing)} visitable node(s), "
                              f"e.g. {missing[0]}")
    if len(tables.neg_pool[START]) < cfg.num_choices - 1:
        raise SamplingError(
            f"graph too small: START offers {len(tables.neg_pool[START])} far nodes, "
            f"need {cfg.num_choices - 1}")

    state = GameState(current=START, consecutive_wrong=0, cumulative_reward=0,
                      step_index=0, rng=random.Random(cfg.seed), done=False,
                      reason=IN_PROGRESS, last_observation=None, correct_node=None,
                      _scenario=s, _hints=hints, _config=cfg)
    obs = _sample(state, g, s, hints, cfg)
    state.last_observation = obs
    return state, obs


def step(state: GameState, action_index: int, g: ScenarioGraph, s: Scenario,
         hints: Optional[HintStore], cfg: GameConfig) -> StepResult:
    """Apply one action.

    Correct choices advance to the sampled successor (finishing pays +10);
    wrong ones cost -1 and move the player ``back_hop`` hops backward, one
    uniform draw over incoming edges per hop (no draw at START, which has
    none). Draws for the backward hops precede the next observation's.
    """
    if state.done:
        raise Terminated("game is finished")
    if not isinstance(action_index, int) or not 0 <= action_index < cfg.num_choices:
        raise OutOfRange(f"action index {action_index!r} not in [0, {cfg.num_choices})")

    obs = state.last_observation
    tables = _tables(g, s, cfg)
    node_before = state.current
    done = False
    reason = IN_PROGRESS

    if action_index == obs.correct_index:
        state.current = state.correct_node
        state.consecutive_wrong = 0
        if state.current in tables.terminal_steps:
            reward = 10
            done, reason = True, GOAL_REACHED
        else:
            reward = 0
    else:
        reward = -1
        state.consecutive_wrong += 1
        if state.consecutive_wrong >= cfg.consecutive_wrong_limit:
            done, reason = True, TOO_MANY_WRONG
        else:
            for _ in range(cfg.back_hop):
                preds = g.predecessors[state.current]
                if not preds:
                    break  # at the start frontier: stay, choices re-sample below
                state.current = preds[state.rng.randrange(len(preds))]

    state.cumulative_reward += reward
    t = state.step_index
    state.step_index += 1
    if not done and cfg.max_steps is not None and state.step_index >= cfg.max_steps:
        done, reason = True, STEP_CAP_EXCEEDED

    state.records.append(StepRecord(
        t=t, node=node_before, choices=obs.choices, hint=obs.hint,
        action=action_index, correct=obs.correct_index, reward=reward,
        done=done, reason=reason))

    next_obs = None
    if done:
        state.done = True
        state.reason = reason
        state.last_observation = None
    else:
        next_obs = _sample(state, g, s, hints, cfg)
        state.last_observation = next_obs
    return StepResult(reward=reward, done=done, reason=reason, next_observation=next_obs)


@dataclass(frozen=True)
class EpisodeLog:
    version: str
    seed: int
    config: dict
    scenario_title: str
    scenario_sha256: str
    hints_sha256: Optional[str]
    steps: tuple[StepRecord, ...]

    def header_json(self) -> str:
        return json.dumps({
            "version": self.version, "seed": self.seed, "config": self.config,
            "scenario_title": self.scenario_title, "scenario_sha256": self.scenario_sha256,
            "hints_sha256": self.hints_sha256,
        }, ensure_ascii=False, separators=(",", ":"))

    def to_jsonl(self) -> str:
        lines = [self.header_json()] + [rec.to_json() for rec in self.steps]
        return "\n".join(lines) + "\n"

    @property
    def total_reward(self) -> int:
        return sum(rec.reward for rec in self.steps)

    @classmethod
    def parse(cls, text: str, source: str = "<log>") -> "EpisodeLog":
        from .errors import ParseError

        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ParseError(f"{source}: empty transcript")
        try:
            header = json.loads(lines[0])
            records = [json.loads(ln) for ln in lines[1:]]
        except json.JSONDecodeError as exc:
            raise ParseError(f"{source}: bad JSON: {exc}") from exc
        for key in ("version", "seed", "config", "scenario_title", "scenario_sha256"):
            if key not in header:
                raise ParseError(f"{source}: header misses {key!r}")
        steps = tuple(StepRecord(
            t=r["t"], node=r["node"], choices=tuple(r["choices"]), hint=r["hint"],
            action=r["action"], correct=r["correct"], reward=r["reward"],
            done=r["done"], reason=r["reason"]) for r in records)
        return cls(version=header["version"], seed=header["seed"], config=header["config"],
                   scenario_title=header["scenario_title"],
                   scenario_sha256=header["scenario_sha256"],
                   hints_sha256=header.get("hints_sha256"), steps=steps)


def transcript(state: GameState) -> EpisodeLog:
    """Full ordered record of the episode so far, replayable byte-for-byte."""
    cfg = state._config
    return EpisodeLog(
        version=ENGINE_VERSION,
        seed=cfg.seed,
        config=cfg.to_dict(),
        scenario_title=state._scenario.title,
        scenario_sha256=scenario_digest(state._scenario),
        hints_sha256=hints_digest(state._hints),
        steps=tuple(state.records),
    )


class Session:
    """Binds graph, scenario, hints and config for loop-style play."""

    def __init__(self, g: ScenarioGraph, s: Scenario, hints: Optional[HintStore],
                 cfg: GameConfig):
        self.graph, self.scenario, self.hints, self.config = g, s, hints, cfg
        self.state, self.observation = new_game(g, s, hints, cfg)

    def step(self, action_index: int) -> StepResult:
        result = step(self.state, action_index, self.graph, self.scenario,
                      self.hints, self.config)
        self.observation = result.next_observation
        return result

    @property
    def done(self) -> bool:
        return self.state.done

    @property
    def score(self) -> int:
        return self.state.cumulative_reward

    def transcript(self) -> EpisodeLog:
        return transcript(self.state)
