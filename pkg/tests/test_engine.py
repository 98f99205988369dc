import json
import random

import pytest

from questgraph import corpus, engine, graph
from questgraph.engine import GameConfig
from questgraph.errors import ConfigError, OutOfRange, SamplingError, Terminated

import oracles


def fresh(sgraph, scenario, hints=None, **kw):
    cfg = GameConfig(**kw)
    state, obs = engine.new_game(sgraph, scenario, hints, cfg)
    return state, obs, cfg


def play_random(state, cfg, sgraph, scenario, hints, rng):
    while not state.done:
        engine.step(state, rng.randrange(cfg.num_choices), sgraph, scenario, hints, cfg)
    return state


class TestNewGame:
    def test_two_distinct_choices_one_correct(self, sgraph, scenario):
        state, obs, cfg = fresh(sgraph, scenario, num_choices=2, seed=7)
        assert len(obs.choices) == 2
        assert len(set(obs.choices)) == 2
        assert obs.correct_index in (0, 1)
        assert obs.quest == "Get Medicine"

    def test_handicap_without_hints(self, sgraph, scenario):
        with pytest.raises(ConfigError):
            fresh(sgraph, scenario, handicap=True)

    def test_handicap_with_hints_shows_hint(self, sgraph, scenario, hints):
        state, obs, cfg = fresh(sgraph, scenario, hints=hints, handicap=True, seed=1)
        assert obs.hint in hints.for_node("START")

    def test_no_handicap_no_hint(self, sgraph, scenario):
        _, obs, _ = fresh(sgraph, scenario, seed=1)
        assert obs.hint is None

    def test_sampling_error_on_small_graph(self):
        s = corpus.scenario_from_dict({
            "title": "tiny", "neg_distance": 3,
            "esds": [{"id": "e0", "events": ["first move", "second move", "third move"]}],
            "clusters": [
                {"id": f"c{i}", "label": f"c{i}", "members": [{"esd": "e0", "pos": i}],
                 "sequences": [[[t]]]}
                for i, t in enumerate(["first move", "second move", "third move"])
            ],
        })
        g = graph.expand(graph.build_compact(s), s)
        with pytest.raises(SamplingError):
            engine.new_game(g, s, None, GameConfig(num_choices=5))

    def test_builtin_supports_five_choices_everywhere(self, sgraph, scenario):
        # every reachable decision position must offer >= 4 far negatives,
        # otherwise the 5-choice setting would die mid-episode
        dump = graph.graph_to_dict(sgraph)
        pools = oracles.negative_pools(dump, scenario.neg_distance)
        assert min(len(p) for p in pools.values()) >= 4

    def test_bad_config_rejected(self, sgraph, scenario):
        for kw in (dict(num_choices=1), dict(back_hop=0),
                   dict(consecutive_wrong_limit=0), dict(distance_space="euclidean"),
                   dict(neg_distance=0), dict(seed=-1)):
            with pytest.raises(ConfigError):
                fresh(sgraph, scenario, **kw)

    def test_deterministic_given_seed(self, sgraph, scenario):
        _, obs1, _ = fresh(sgraph, scenario, seed=42)
        _, obs2, _ = fresh(sgraph, scenario, seed=42)
        assert obs1 == obs2


class TestSampleChoices:
    def test_revisits_resample(self, sgraph, scenario):
        # wrong answer at START keeps the position but re-rolls the draws
        state, obs, cfg = fresh(sgraph, scenario, seed=3)
        seen = set()
        for _ in range(8):
            wrong = 1 - state.last_observation.correct_index
            result = engine.step(state, wrong, sgraph, scenario, None, cfg)
            if state.done:
                break
            seen.add(result.next_observation.choices)
        assert len(seen) > 1

    def test_negative_sources_beyond_distance(self, sgraph, scenario):
        # 500 observations; full 10k sweep lives in the acceptance suite
        dump = graph.graph_to_dict(sgraph)
        pools = oracles.negative_pools(dump, scenario.neg_distance)
        succs = oracles.skip_successors(dump)
        rng = random.Random(0)
        checked = 0
        for seed in range(60):
            cfg = GameConfig(num_choices=3, seed=seed)
            state, obs = engine.new_game(sgraph, scenario, None, cfg)
            while not state.done and checked < 500:
                obs = state.last_observation
                node = state.current
                matches = [i for i, text in enumerate(obs.choices)
                           if any(text in sgraph.action_texts[u] for u in succs[node])]
                assert matches == [obs.correct_index]
                for i, text in enumerate(obs.choices):
                    if i == obs.correct_index:
                        continue
                    sources = [v for v in pools[node] if text in sgraph.action_texts[v]]
                    assert sources, f"negative {text!r} has no far source at {node}"
                checked += 1
                engine.step(state, rng.randrange(3), sgraph, scenario, None, cfg)
        assert checked == 500

    def test_sample_on_finished_game(self, sgraph, scenario):
        state, obs, cfg = fresh(sgraph, scenario, seed=5)
        while not state.done:
            engine.step(state, state.last_observation.correct_index,
                        sgraph, scenario, None, cfg)
        with pytest.raises(Terminated):
            engine.sample_choices(state, sgraph, scenario, cfg)

    def test_compact_distance_space(self, scenario, sgraph, cgraph):
        cfg = GameConfig(num_choices=2, distance_space="compact-graph", neg_distance=1,
                         seed=11)
        state, obs = engine.new_game(sgraph, scenario, None, cfg)
        cdist = {c: cgraph.undirected_distances(c) for c in cgraph.nodes}
        rng = random.Random(2)
        for _ in range(300):
            if state.done:
                break
            obs = state.last_observation
            origin = sgraph.compact_origin[state.current]
            for i, text in enumerate(obs.choices):
                if i == obs.correct_index:
                    continue
                sources = [v for v in sgraph.step_nodes if text in sgraph.action_texts[v]]
                assert any(cdist[origin][sgraph.compact_origin[v]] > 1 for v in sources)
            engine.step(state, rng.randrange(2), sgraph, scenario, None, cfg)


class TestStep:
    def test_perfect_play_scores_ten(self, sgraph, scenario):
        for seed in range(20):
            state, obs, cfg = fresh(sgraph, scenario, seed=seed)
            while not state.done:
                engine.step(state, state.last_observation.correct_index,
                            sgraph, scenario, None, cfg)
            assert state.cumulative_reward == 10
            assert state.reason == engine.GOAL_REACHED

    def test_five_wrong_terminates(self, sgraph, scenario):
        state, obs, cfg = fresh(sgraph, scenario, seed=9)
        for _ in range(5):
            wrong = 1 - state.last_observation.correct_index
            result = engine.step(state, wrong, sgraph, scenario, None, cfg)
        assert state.done and state.reason == engine.TOO_MANY_WRONG
        assert state.cumulative_reward == -5
        assert result.next_observation is None

    def test_wrong_at_start_keeps_position(self, sgraph, scenario):
        state, obs, cfg = fresh(sgraph, scenario, seed=13)
        assert state.current == "START"
        wrong = 1 - obs.correct_index
        result = engine.step(state, wrong, sgraph, scenario, None, cfg)
        assert state.current == "START"
        assert result.next_observation is not None

    def test_correct_resets_consecutive_counter(self, sgraph, scenario):
        state, obs, cfg = fresh(sgraph, scenario, seed=21)
        wrong = 1 - obs.correct_index
        engine.step(state, wrong, sgraph, scenario, None, cfg)
        assert state.consecutive_wrong == 1
        engine.step(state, state.last_observation.correct_index,
                    sgraph, scenario, None, cfg)
        assert state.consecutive_wrong == 0

    def test_back_hop_moves_backward(self, sgraph, scenario):
        state, obs, cfg = fresh(sgraph, scenario, seed=2)
        engine.step(state, obs.correct_index, sgraph, scenario, None, cfg)
        node = state.current
        assert graph.is_step(node)
        wrong = 1 - state.last_observation.correct_index
        engine.step(state, wrong, sgraph, scenario, None, cfg)
        assert state.current in sgraph.predecessors[node]

    def test_multi_back_hop(self, sgraph, scenario):
        cfg = GameConfig(num_choices=2, back_hop=2, seed=17)
        state, obs = engine.new_game(sgraph, scenario, None, cfg)
        engine.step(state, obs.correct_index, sgraph, scenario, None, cfg)
        node = state.current
        wrong = 1 - state.last_observation.correct_index
        engine.step(state, wrong, sgraph, scenario, None, cfg)
        two_back = {p2 for p1 in sgraph.predecessors[node]
                    for p2 in (sgraph.predecessors[p1] or (p1,))}
        assert state.current in two_back

    def test_out_of_range(self, sgraph, scenario):
        state, obs, cfg = fresh(sgraph, scenario, seed=1)
        with pytest.raises(OutOfRange):
            engine.step(state, 2, sgraph, scenario, None, cfg)
        with pytest.raises(OutOfRange):
            engine.step(state, -1, sgraph, scenario, None, cfg)

    def test_step_after_done(self, sgraph, scenario):
        state, obs, cfg = fresh(sgraph, scenario, seed=1)
        while not state.done:
            engine.step(state, state.last_observation.correct_index,
                        sgraph, scenario, None, cfg)
        with pytest.raises(Terminated):
            engine.step(state, 0, sgraph, scenario, None, cfg)

    def test_step_cap(self, sgraph, scenario):
        cfg = GameConfig(num_choices=2, max_steps=3, seed=33)
        state, obs = engine.new_game(sgraph, scenario, None, cfg)
        rng = random.Random(0)
        while not state.done:
            engine.step(state, 1 - state.last_observation.correct_index,
                        sgraph, scenario, None, cfg)
            if state.consecutive_wrong >= 3:
                break
        assert state.done and state.reason == engine.STEP_CAP_EXCEEDED

    def test_accounting_identity_random_play(self, sgraph, scenario):
        rng = random.Random(77)
        for seed in range(50):
            state, obs, cfg = fresh(sgraph, scenario, seed=seed)
            play_random(state, cfg, sgraph, scenario, None, rng)
            wrongs = sum(1 for r in state.records if r.reward == -1)
            goal = state.reason == engine.GOAL_REACHED
            assert state.cumulative_reward == 10 * goal - wrongs
            assert state.cumulative_reward <= 10
            assert state.reason in (engine.GOAL_REACHED, engine.TOO_MANY_WRONG,
                                    engine.STEP_CAP_EXCEEDED)


class TestTranscript:
    def test_rewards_sum_to_cumulative(self, sgraph, scenario):
        rng = random.Random(4)
        state, obs, cfg = fresh(sgraph, scenario, seed=101)
        play_random(state, cfg, sgraph, scenario, None, rng)
        log = engine.transcript(state)
        assert log.total_reward == state.cumulative_reward

    def test_goal_transcript_ends_with_ten(self, sgraph, scenario):
        state, obs, cfg = fresh(sgraph, scenario, seed=8)
        while not state.done:
            engine.step(state, state.last_observation.correct_index,
                        sgraph, scenario, None, cfg)
        log = engine.transcript(state)
        assert log.steps[-1].reward == 10
        assert log.steps[-1].reason == engine.GOAL_REACHED

    def test_deterministic_replay_bytes(self, sgraph, scenario, hints):
        def run(seed):
            cfg = GameConfig(num_choices=3, handicap=True, seed=seed)
            state, obs = engine.new_game(sgraph, scenario, hints, cfg)
            rng = random.Random(seed)
            actions = []
            while not state.done:
                a = rng.randrange(3)
                actions.append(a)
                engine.step(state, a, sgraph, scenario, hints, cfg)
            return engine.transcript(state).to_jsonl(), actions

        text1, actions1 = run(404)
        text2, actions2 = run(404)
        assert actions1 == actions2
        assert text1 == text2

    def test_jsonl_schema(self, sgraph, scenario):
        state, obs, cfg = fresh(sgraph, scenario, seed=1)
        rng = random.Random(0)
        play_random(state, cfg, sgraph, scenario, None, rng)
        lines = engine.transcript(state).to_jsonl().splitlines()
        header = json.loads(lines[0])
        assert {"version", "seed", "config", "scenario_title",
                "scenario_sha256", "hints_sha256"} <= header.keys()
        for line in lines[1:]:
            rec = json.loads(line)
            assert list(rec.keys()) == ["t", "node", "choices", "hint", "action",
                                        "correct", "reward", "done", "reason"]

    def test_parse_round_trip(self, sgraph, scenario):
        state, obs, cfg = fresh(sgraph, scenario, seed=55)
        rng = random.Random(1)
        play_random(state, cfg, sgraph, scenario, None, rng)
        text = engine.transcript(state).to_jsonl()
        parsed = engine.EpisodeLog.parse(text)
        assert parsed.to_jsonl() == text


class TestSession:
    def test_session_wrapper(self, sgraph, scenario, hints):
        session = engine.Session(sgraph, scenario, hints,
                                 GameConfig(num_choices=2, handicap=True, seed=6))
        while not session.done:
            session.step(session.observation.correct_index)
        assert session.score == 10
