"""Baseline agents and the training/evaluation loop.

Everything numerical is implemented from first principles on numpy so the
gradients can be verified against finite differences: a dense tanh MLP, a
DQN-style temporal-difference learner with replay buffer and target network,
a REINFORCE policy-gradient learner, and a white-box tabular Q-learner keyed
on (node id, action text). Optimization is plain seeded SGD.
"""

from __future__ import annotations

import csv
import random
import time
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import engine as enginemod
from .engine import Observation, Session
from .errors import (FeatureDimMismatch, NonFiniteLoss, OracleUnavailable,
                     ShapeMismatch)
from .features import EmbeddingTable, FeatureVector, HashFeaturizer, featurize


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.99
    epsilon_schedule: tuple[float, float, int] = (1.0, 0.05, 5000)  # start, end, decay steps
    learning_rate: float = 0.05
    replay_capacity: int = 10_000
    batch_size: int = 32
    target_sync_interval: int = 250
    hidden_sizes: tuple[int, ...] = ()
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")

    def epsilon_at(self, step: int) -> float:
        start, end, decay = self.epsilon_schedule
        if decay <= 0:
            return end
        frac = min(1.0, step / decay)
        return start + (end - start) * frac


class MLP:
    """Dense feed-forward net: tanh hidden layers, linear output.

    Weights start uniform in +-1/sqrt(fan_in), fixed by seed.
    """

    def __init__(self, sizes: list[int], seed: int):
        rng = np.random.default_rng(seed)
        self.sizes = list(sizes)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(sizes, sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(rng.uniform(-bound, bound, size=fan_out))

    @property
    def parameter_count(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Returns (output, activations); activations[i] feeds layer i."""
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            h = z if i == last else np.tanh(z)
            acts.append(h)
        return h, acts

    def backward(self, acts: list[np.ndarray], d_out: np.ndarray
                 ) -> list[tuple[np.ndarray, np.ndarray]]:
        """Gradients of a scalar loss wrt (W, b) per layer, given dL/d_output."""
        grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(self.weights)
        delta = d_out
        for i in range(len(self.weights) - 1, -1, -1):
            a_in = acts[i]
            grads[i] = (a_in.T @ delta, delta.sum(axis=0))
            if i > 0:
                delta = (delta @ self.weights[i].T) * (1.0 - acts[i] ** 2)
        return grads

    def sgd_step(self, grads, lr: float) -> None:
        for (dw, db), w, b in zip(grads, self.weights, self.biases):
            w -= lr * dw
            b -= lr * db

    def get_flat(self) -> np.ndarray:
        return np.concatenate([w.ravel() for w in self.weights]
                              + [b.ravel() for b in self.biases])

    def set_flat(self, flat: np.ndarray) -> None:
        pos = 0
        for w in self.weights:
            w[...] = flat[pos:pos + w.size].reshape(w.shape)
            pos += w.size
        for b in self.biases:
            b[...] = flat[pos:pos + b.size]
            pos += b.size

    def copy_from(self, other: "MLP") -> None:
        for mine, theirs in zip(self.weights, other.weights):
            mine[...] = theirs
        for mine, theirs in zip(self.biases, other.biases):
            mine[...] = theirs

    def clone(self) -> "MLP":
        twin = MLP(self.sizes, seed=0)
        twin.copy_from(self)
        return twin


class QNet:
    """Q/policy network over observation features.

    Two head layouts:
      - ``per_action``: the full concatenated feature vector maps to one
        output per choice index.
      - ``shared``: one scalar head scores each choice from its own block
        (plus the hint block when present); weights are shared across
        choices, so scores are index-permutation equivariant.
    """

    def __init__(self, layout: tuple[int, int, bool], hidden_sizes, seed: int,
                 head: str = "shared"):
        if head not in ("shared", "per_action"):
            raise ValueError(f"unknown head {head!r}")
        self.layout = tuple(layout)
        self.head = head
        num_choices, dim, hint = self.layout
        if head == "shared":
            in_dim = dim * (2 if hint else 1)
            out_dim = 1
        else:
            in_dim = dim * (num_choices + (1 if hint else 0))
            out_dim = num_choices
        self.net = MLP([in_dim, *hidden_sizes, out_dim], seed=seed)

    @property
    def num_choices(self) -> int:
        return self.layout[0]

    def _check(self, feat: FeatureVector) -> None:
        if tuple(feat.layout) != self.layout:
            raise ShapeMismatch(f"feature layout {feat.layout} != net layout {self.layout}")

    def _rows(self, feat: FeatureVector) -> np.ndarray:
        """shared head: one input row per choice."""
        hint = feat.hint_block()
        rows = []
        for i in range(feat.num_choices):
            block = feat.choice_block(i)
            rows.append(np.concatenate([block, hint]) if hint is not None else block)
        return np.stack(rows)

    def input_batch(self, feats: list[FeatureVector]) -> np.ndarray:
        for f in feats:
            self._check(f)
        if self.head == "per_action":
            return np.stack([f.values for f in feats])
        return np.concatenate([self._rows(f) for f in feats], axis=0)

    def q_from_out(self, out: np.ndarray, batch: int) -> np.ndarray:
        if self.head == "per_action":
            return out
        return out.reshape(batch, self.num_choices)

    def q_values(self, feat: FeatureVector) -> np.ndarray:
        x = self.input_batch([feat])
        out, _ = self.net.forward(x)
        return self.q_from_out(out, 1)[0]

    def clone(self) -> "QNet":
        twin = QNet(self.layout, [], seed=0, head=self.head)
        twin.net = self.net.clone()
        return twin


def act_random(obs: Observation, rng: random.Random) -> int:
    """Uniform choice over the presented indices."""
    return rng.randrange(len(obs.choices))


def act_oracle(obs: Observation) -> int:
    """Reads the hidden correct index; test/analysis builds only."""
    if obs.correct_index is None:
        raise OracleUnavailable("observation carries no correct index")
    return obs.correct_index


def act_epsilon_greedy(qnet: QNet, features: FeatureVector, epsilon: float,
                       rng: random.Random) -> int:
    """Argmax of Q with probability 1 - epsilon (ties to the lowest index),
    uniform otherwise."""
    if rng.random() < epsilon:
        return rng.randrange(features.num_choices)
    q = qnet.q_values(features)
    return int(np.argmax(q))


Transition = tuple[FeatureVector, int, float, Optional[FeatureVector], bool]


class ReplayBuffer:
    def __init__(self, capacity: int):
        self.items: deque[Transition] = deque(maxlen=capacity)

    def push(self, transition: Transition) -> None:
        self.items.append(transition)

    def sample(self, batch_size: int, rng: random.Random) -> list[Transition]:
        return [self.items[rng.randrange(len(self.items))] for _ in range(batch_size)]

    def __len__(self) -> int:
        return len(self.items)


def dqn_loss_and_grads(qnet: QNet, target_net: QNet, batch: list[Transition],
                       cfg: AgentConfig):
    """Mean squared TD error with target r + gamma * max_a' Q_target(s') * (1-done)."""
    n = len(batch)
    feats = [t[0] for t in batch]
    actions = np.array([t[1] for t in batch])
    rewards = np.array([t[2] for t in batch], dtype=float)

    targets = rewards.copy()
    live = [i for i, t in enumerate(batch) if not t[4]]
    if live:
        next_x = target_net.input_batch([batch[i][3] for i in live])
        next_out, _ = target_net.net.forward(next_x)
        next_q = target_net.q_from_out(next_out, len(live))
        targets[live] += cfg.gamma * next_q.max(axis=1)

    x = qnet.input_batch(feats)
    out, acts = qnet.net.forward(x)
    q = qnet.q_from_out(out, n)
    chosen = q[np.arange(n), actions]
    errors = chosen - targets
    loss = float(np.mean(errors ** 2))

    d_q = np.zeros_like(q)
    d_q[np.arange(n), actions] = 2.0 * errors / n
    if qnet.head == "per_action":
        d_out = d_q
    else:
        d_out = d_q.reshape(-1, 1)
    grads = qnet.net.backward(acts, d_out)
    return loss, grads


def dqn_update(qnet: QNet, target_net: QNet, batch: list[Transition],
               cfg: AgentConfig) -> float:
    """One SGD step on the TD loss; target sync is the caller's schedule."""
    loss, grads = dqn_loss_and_grads(qnet, target_net, batch, cfg)
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"TD loss {loss} on batch of {len(batch)}")
    qnet.net.sgd_step(grads, cfg.learning_rate)
    return loss


Step = tuple[FeatureVector, int, float]  # features, action, reward


def discounted_returns(rewards: list[float], gamma: float) -> np.ndarray:
    out = np.zeros(len(rewards))
    acc = 0.0
    for i in range(len(rewards) - 1, -1, -1):
        acc = rewards[i] + gamma * acc
        out[i] = acc
    return out


def reinforce_loss_and_grads(policy_net: QNet, episode: list[Step],
                             cfg: AgentConfig, baseline: float = 0.0):
    """Loss -sum_t log pi(a_t) * (G_t - baseline) with softmax policy head."""
    n = len(episode)
    feats = [s[0] for s in episode]
    actions = np.array([s[1] for s in episode])
    returns = discounted_returns([s[2] for s in episode], cfg.gamma)
    advantages = returns - baseline

    x = policy_net.input_batch(feats)
    out, acts = policy_net.net.forward(x)
    logits = policy_net.q_from_out(out, n)
    shifted = logits - logits.max(axis=1, keepdims=True)
    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = float(-(advantages * log_probs[np.arange(n), actions]).sum())

    d_logits = probs * advantages[:, None]
    d_logits[np.arange(n), actions] -= advantages
    if policy_net.head == "per_action":
        d_out = d_logits
    else:
        d_out = d_logits.reshape(-1, 1)
    grads = policy_net.net.backward(acts, d_out)
    return loss, grads


def reinforce_update(policy_net: QNet, episode: list[Step], cfg: AgentConfig,
                     baseline: float = 0.0) -> float:
    loss, grads = reinforce_loss_and_grads(policy_net, episode, cfg, baseline)
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"policy loss {loss} on episode of {len(episode)} steps")
    policy_net.net.sgd_step(grads, cfg.learning_rate)
    return loss


def tabular_q_update(table: dict, state_key, action, reward: float,
                     next_key, cfg: AgentConfig) -> float:
    """Q(s,a) <- Q + alpha * (r + gamma * max_a' Q(s',a') - Q); unseen keys are 0.

    ``next_key`` None marks a terminal transition. The learning rate doubles
    as alpha.
    """
    q_row = table.setdefault(state_key, {})
    q = q_row.get(action, 0.0)
    nxt = 0.0
    if next_key is not None:
        nxt_row = table.get(next_key)
        if nxt_row:
            nxt = max(nxt_row.values())
    target = reward + cfg.gamma * nxt
    q_row[action] = q + cfg.learning_rate * (target - q)
    return q_row[action]


class RandomAgent:
    """Difficulty floor: uniform over choices."""

    learns = False

    def __init__(self, cfg: AgentConfig):
        self.rng = random.Random(cfg.seed)

    def begin_episode(self, session: Session) -> None:
        pass

    def act(self, session: Session) -> int:
        return act_random(session.observation, self.rng)

    def observe(self, session, obs, node_before, action, result) -> None:
        pass

    def end_episode(self) -> None:
        pass

    def set_eval(self, flag: bool) -> None:
        pass


class OracleAgent(RandomAgent):
    """Upper-bound reference; reads the hidden correct index."""

    def act(self, session: Session) -> int:
        return act_oracle(session.observation)


class TabularQAgent:
    """White-box Q-learning keyed on (current node id, choice text).

    Needs in-process access to the engine state (the node id), which the
    wire protocol never exposes.
    """

    learns = True

    def __init__(self, cfg: AgentConfig):
        cfg.validate()
        self.cfg = cfg
        self.table: dict = {}
        self.rng = random.Random(cfg.seed)
        self.steps = 0
        self.eval_mode = False

    def begin_episode(self, session: Session) -> None:
        pass

    def _q(self, node: str, text: str) -> float:
        return self.table.get(node, {}).get(text, 0.0)

    def act(self, session: Session) -> int:
        obs = session.observation
        node = session.state.current
        eps = 0.0 if self.eval_mode else self.cfg.epsilon_at(self.steps)
        if self.rng.random() < eps:
            return self.rng.randrange(len(obs.choices))
        q = [self._q(node, t) for t in obs.choices]
        return int(np.argmax(q))

    def observe(self, session, obs, node_before, action, result) -> None:
        if self.eval_mode:
            return
        self.steps += 1
        next_key = None if result.done else session.state.current
        tabular_q_update(self.table, node_before, obs.choices[action],
                         result.reward, next_key, self.cfg)

    def end_episode(self) -> None:
        pass

    def set_eval(self, flag: bool) -> None:
        self.eval_mode = flag


class DQNAgent:
    """TD learner with replay buffer and a periodically synced target net."""

    learns = True

    def __init__(self, cfg: AgentConfig, layout: tuple[int, int, bool],
                 featurizer: Callable[[Observation], FeatureVector],
                 head: str = "shared"):
        cfg.validate()
        self.cfg = cfg
        self.featurize = featurizer
        self.qnet = QNet(layout, cfg.hidden_sizes, seed=cfg.seed, head=head)
        self.target = self.qnet.clone()
        self.buffer = ReplayBuffer(cfg.replay_capacity)
        self.rng = random.Random(cfg.seed)
        self.steps = 0
        self.eval_mode = False
        self.last_loss = float("nan")

    def begin_episode(self, session: Session) -> None:
        pass

    def act(self, session: Session) -> int:
        feat = self.featurize(session.observation)
        eps = 0.0 if self.eval_mode else self.cfg.epsilon_at(self.steps)
        return act_epsilon_greedy(self.qnet, feat, eps, self.rng)

    def observe(self, session, obs, node_before, action, result) -> None:
        if self.eval_mode:
            return
        self.steps += 1
        feat = self.featurize(obs)
        next_feat = None if result.done else self.featurize(result.next_observation)
        self.buffer.push((feat, action, float(result.reward), next_feat, result.done))
        if len(self.buffer) >= self.cfg.batch_size:
            batch = self.buffer.sample(self.cfg.batch_size, self.rng)
            self.last_loss = dqn_update(self.qnet, self.target, batch, self.cfg)
        if self.steps % self.cfg.target_sync_interval == 0:
            self.target.net.copy_from(self.qnet.net)

    def end_episode(self) -> None:
        pass

    def set_eval(self, flag: bool) -> None:
        self.eval_mode = flag


class ReinforceAgent:
    """Policy gradient with discounted returns and a running-mean baseline."""

    learns = True

    def __init__(self, cfg: AgentConfig, layout: tuple[int, int, bool],
                 featurizer: Callable[[Observation], FeatureVector],
                 head: str = "shared"):
        cfg.validate()
        self.cfg = cfg
        self.featurize = featurizer
        self.policy = QNet(layout, cfg.hidden_sizes, seed=cfg.seed, head=head)
        self.rng = random.Random(cfg.seed)
        self.episode: list[Step] = []
        self.baseline = 0.0
        self.episodes_seen = 0
        self.eval_mode = False

    def begin_episode(self, session: Session) -> None:
        self.episode = []

    def act(self, session: Session) -> int:
        feat = self.featurize(session.observation)
        logits = self.policy.q_values(feat)
        if self.eval_mode:
            return int(np.argmax(logits))
        shifted = logits - logits.max()
        probs = np.exp(shifted)
        probs /= probs.sum()
        return int(self.rng.choices(range(len(probs)), weights=probs)[0])

    def observe(self, session, obs, node_before, action, result) -> None:
        if not self.eval_mode:
            self.episode.append((self.featurize(obs), action, float(result.reward)))

    def end_episode(self) -> None:
        if self.eval_mode or not self.episode:
            return
        reinforce_update(self.policy, self.episode, self.cfg, self.baseline)
        ret = float(discounted_returns([s[2] for s in self.episode], self.cfg.gamma)[0])
        self.episodes_seen += 1
        self.baseline += (ret - self.baseline) / self.episodes_seen

    def set_eval(self, flag: bool) -> None:
        self.eval_mode = flag


@dataclass
class TrainReport:
    scores: list[int]
    moving_avg: list[float]
    coverage_pct: list[float]
    wall_clock_s: float
    eval_mean: float
    eval_sd: float
    window: int

    def last_mean(self, n: int = 100) -> float:
        tail = self.scores[-n:]
        return float(np.mean(tail)) if tail else float("nan")

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["episode", "score", "moving_avg", "coverage_pct"])
            for i, (s, m, c) in enumerate(zip(self.scores, self.moving_avg,
                                              self.coverage_pct)):
                writer.writerow([i, s, f"{m:.4f}", f"{c:.2f}"])

    def summary(self) -> dict:
        return {
            "episodes": len(self.scores),
            "window": self.window,
            "final_moving_avg": self.moving_avg[-1] if self.moving_avg else None,
            "final_coverage_pct": self.coverage_pct[-1] if self.coverage_pct else None,
            "eval_mean": self.eval_mean,
            "eval_sd": self.eval_sd,
            "wall_clock_s": self.wall_clock_s,
        }


def run_episode(agent, session: Session, visited: Optional[set] = None) -> int:
    """Play one episode to termination; optionally collect visited nodes."""
    agent.begin_episode(session)
    if visited is not None:
        visited.add(session.state.current)
    while not session.done:
        obs = session.observation
        node_before = session.state.current
        action = agent.act(session)
        result = session.step(action)
        agent.observe(session, obs, node_before, action, result)
        if visited is not None:
            visited.add(session.state.current)
    agent.end_episode()
    return session.score


def train(agent, env_factory: Callable[[int], Session], cfg: AgentConfig,
          episodes: int, window: int = 100, eval_episodes: int = 100) -> TrainReport:
    """Run training episodes, tracking scores, moving averages and cumulative
    node coverage, then evaluate the frozen policy.

    ``env_factory`` receives a 64-bit seed and must return a fresh Session.
    Coverage is measured against the nodes a game can occupy.
    """
    cfg.validate()
    seeder = random.Random(cfg.seed)
    t0 = time.monotonic()
    scores: list[int] = []
    moving: list[float] = []
    coverage: list[float] = []
    visited: set[str] = set()
    total_positions: Optional[int] = None

    for _ in range(episodes):
        session = env_factory(seeder.getrandbits(64))
        if total_positions is None:
            total_positions = len(session.graph.positions())
        scores.append(run_episode(agent, session, visited))
        tail = scores[-window:]
        moving.append(float(np.mean(tail)))
        coverage.append(100.0 * len(visited) / total_positions)

    agent.set_eval(True)
    try:
        eval_scores = [run_episode(agent, env_factory(seeder.getrandbits(64)))
                       for _ in range(eval_episodes)]
    finally:
        agent.set_eval(False)
    wall = time.monotonic() - t0
    eval_mean = float(np.mean(eval_scores)) if eval_scores else float("nan")
    eval_sd = float(np.std(eval_scores)) if eval_scores else float("nan")
    return TrainReport(scores=scores, moving_avg=moving, coverage_pct=coverage,
                       wall_clock_s=wall, eval_mean=eval_mean, eval_sd=eval_sd,
                       window=window)


def make_agent(kind: str, cfg: AgentConfig, game_cfg, *, dim: int = 256,
               table: Optional[EmbeddingTable] = None, head: str = "shared"):
    """Construct a named baseline agent for a given game configuration."""
    if kind == "random":
        return RandomAgent(cfg)
    if kind == "oracle":
        return OracleAgent(cfg)
    if kind == "tabq":
        return TabularQAgent(cfg)
    fallback = HashFeaturizer(table.dim if table is not None else dim)
    layout = (game_cfg.num_choices, fallback.dim, bool(game_cfg.handicap))

    def featurizer(obs: Observation) -> FeatureVector:
        return featurize(obs, table, fallback)

    if kind == "dqn":
        return DQNAgent(cfg, layout, featurizer, head=head)
    if kind == "reinforce":
        return ReinforceAgent(cfg, layout, featurizer, head=head)
    raise ValueError(f"unknown agent kind {kind!r}")


@dataclass
class CrossEvalResult:
    labels: list[str]
    matrix: list[list[float]]  # [train_idx][eval_idx]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["train\\eval"] + self.labels)
            for label, row in zip(self.labels, self.matrix):
                writer.writerow([label] + [f"{v:.3f}" for v in row])


def cross_eval(agent_kind: str, scenarios: list, agent_cfg: AgentConfig,
               game_cfg, train_episodes: int, eval_episodes: int = 100,
               dim: int = 256) -> CrossEvalResult:
    """Train on each scenario, evaluate the frozen policy on all of them.

    All scenarios play with the same num_choices; a learned policy's feature
    layout would otherwise disagree across columns.
    """
    from . import graph as graphmod

    if not scenarios:
        raise ValueError("cross_eval needs at least one scenario")
    if game_cfg.handicap:
        raise FeatureDimMismatch("cross_eval runs without handicap hints")
    envs = []
    for s in scenarios:
        g = graphmod.expand(graphmod.build_compact(s), s)
        if game_cfg.num_choices - 1 > min(
                len(t) for t in enginemod._tables(g, s, game_cfg).neg_pool.values()):
            raise FeatureDimMismatch(
                f"scenario {s.title!r} cannot offer {game_cfg.num_choices} choices")
        envs.append((s, g))

    def factory_for(idx: int) -> Callable[[int], Session]:
        s, g = envs[idx]

        def factory(seed: int) -> Session:
            cfg_run = enginemod.GameConfig(**{**game_cfg.to_dict(), "seed": seed})
            return Session(g, s, None, cfg_run)

        return factory

    matrix: list[list[float]] = []
    for i in range(len(envs)):
        agent = make_agent(agent_kind, agent_cfg, game_cfg, dim=dim)
        train(agent, factory_for(i), agent_cfg, train_episodes, eval_episodes=0)
        agent.set_eval(True)
        row = []
        try:
            for j in range(len(envs)):
                seeder = random.Random(agent_cfg.seed + 7 * j + 13 * i)
                scores = [run_episode(agent, factory_for(j)(seeder.getrandbits(64)))
                          for _ in range(eval_episodes)]
                row.append(float(np.mean(scores)))
        finally:
            agent.set_eval(False)
        matrix.append(row)
    return CrossEvalResult(labels=[s.title for s, _ in envs], matrix=matrix)
