import json
import random

import pytest

from questgraph import corpus
from questgraph.errors import CoverageError, ParseError, RepeatError, ValidationError

import oracles


def write_scenario(tmp_path, data, name="s.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


def builtin_dict():
    return corpus.scenario_to_dict(corpus.builtin_scenario())


class TestBuiltin:
    def test_title_and_shape(self, scenario):
        assert scenario.title == "Get Medicine"
        assert len(scenario.clusters) == 6
        assert len(scenario.esds) == 3

    def test_validates_clean(self, scenario):
        assert corpus.validate_scenario(scenario) == []

    def test_has_parallel_sequences(self, scenario):
        assert any(len(c.sequences) >= 2 for c in scenario.clusters)

    def test_neg_distance(self, scenario):
        assert scenario.neg_distance == 2

    def test_coverage_partition(self, scenario):
        total_members = sum(len(c.members) for c in scenario.clusters)
        total_events = sum(len(e.events) for e in scenario.esds)
        assert total_members == total_events


class TestLoadScenario:
    def test_load_builtin_file(self, tmp_path, scenario):
        path = write_scenario(tmp_path, builtin_dict())
        loaded = corpus.load_scenario(path)
        assert loaded == scenario

    def test_event_in_two_clusters_rejected(self, tmp_path):
        data = builtin_dict()
        data["clusters"][1]["members"].append({"esd": "m1", "pos": 0})
        with pytest.raises(ValidationError):
            corpus.load_scenario(write_scenario(tmp_path, data))

    def test_neg_distance_zero_rejected(self, tmp_path):
        data = builtin_dict()
        data["neg_distance"] = 0
        with pytest.raises(ValidationError):
            corpus.load_scenario(write_scenario(tmp_path, data))

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(ParseError):
            corpus.load_scenario(path)

    def test_duplicate_cluster_id(self, tmp_path):
        data = builtin_dict()
        data["clusters"][1]["id"] = data["clusters"][0]["id"]
        with pytest.raises(ParseError):
            corpus.load_scenario(write_scenario(tmp_path, data))

    def test_round_trip_builtin(self, tmp_path, scenario):
        out = tmp_path / "rt.json"
        corpus.save_scenario(scenario, out)
        assert corpus.load_scenario(out) == scenario

    def test_round_trip_random_scenarios(self, tmp_path):
        rng = random.Random(7)
        for i in range(10):
            data = oracles.random_scenario(rng, max_clusters=8)
            path = write_scenario(tmp_path, data, name=f"r{i}.json")
            loaded = corpus.load_scenario(path)
            corpus.save_scenario(loaded, path)
            assert corpus.load_scenario(path) == loaded


class TestValidateScenario:
    def test_too_short_esd(self):
        data = builtin_dict()
        data["esds"].append({"id": "tiny", "events": ["only step"]})
        data["clusters"][0]["members"].append({"esd": "tiny", "pos": 0})
        s = corpus.scenario_from_dict(data)
        codes = [f.code for f in corpus.validate_scenario(s)]
        assert "too-short-esd" in codes

    def test_empty_cluster(self):
        data = builtin_dict()
        data["clusters"].append({"id": "ghost", "label": "ghost", "members": [],
                                 "sequences": [[["x"]]]})
        s = corpus.scenario_from_dict(data)
        findings = corpus.validate_scenario(s)
        assert any(f.code == "empty-cluster" and f.severity == "error" for f in findings)

    def test_empty_event_text(self):
        data = builtin_dict()
        data["esds"][0]["events"][0] = "   "
        s = corpus.scenario_from_dict(data)
        codes = [f.code for f in corpus.validate_scenario(s)]
        assert "empty-event-text" in codes

    def test_error_findings_imply_load_rejection(self, tmp_path):
        # every mutation that yields an error finding must also fail to load
        mutations = []
        base = builtin_dict()

        def mutate(fn):
            data = json.loads(json.dumps(base))
            fn(data)
            return data

        mutations.append(mutate(lambda d: d["esds"][0]["events"].__setitem__(0, "")))
        mutations.append(mutate(lambda d: d.update(neg_distance=-3)))
        mutations.append(mutate(lambda d: d["clusters"][2]["members"].clear()))
        mutations.append(mutate(lambda d: d["clusters"][3]["members"].append(
            {"esd": "m1", "pos": 99})))
        for i, data in enumerate(mutations):
            s = corpus.scenario_from_dict(data)
            errors = [f for f in corpus.validate_scenario(s) if f.severity == "error"]
            assert errors, f"mutation {i} produced no error finding"
            with pytest.raises(ValidationError):
                corpus.load_scenario(write_scenario(tmp_path, data, name=f"m{i}.json"))

    def test_text_collision_is_warning(self):
        data = builtin_dict()
        # same surface text in two different clusters
        data["clusters"][1]["sequences"][0][0].append(
            data["clusters"][2]["sequences"][0][0][0])
        s = corpus.scenario_from_dict(data)
        findings = corpus.validate_scenario(s)
        assert any(f.code == "text-collision" and f.severity == "warning"
                   for f in findings)
        assert not any(f.severity == "error" for f in findings)


class TestHints:
    def test_builtin_hints_cover_positions(self, scenario, sgraph, hints):
        assert hints.covers(sgraph.positions())

    def test_missing_node_raises_coverage_error(self, tmp_path, scenario, hints):
        lines = [json.dumps({"node": n, "hints": list(t)})
                 for n, t in sorted(hints.hints.items()) if n != "START"]
        path = tmp_path / "h.jsonl"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        with pytest.raises(CoverageError) as exc:
            corpus.load_hints(path, scenario)
        assert "START" in exc.value.missing

    def test_verbatim_hint_raises_repeat_error(self, tmp_path, scenario, sgraph, hints):
        node = "step:drugstore:0:0"
        action = sgraph.action_texts[node][0]
        lines = [json.dumps({"node": n, "hints": list(t)})
                 for n, t in sorted(hints.hints.items()) if n != node]
        lines.append(json.dumps({"node": node, "hints": [f"  {action.upper()} "]}))
        path = tmp_path / "h.jsonl"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        with pytest.raises(RepeatError):
            corpus.load_hints(path, scenario)

    def test_unknown_node_raises_parse_error(self, tmp_path, scenario, hints):
        lines = [json.dumps({"node": n, "hints": list(t)})
                 for n, t in sorted(hints.hints.items())]
        lines.append(json.dumps({"node": "step:nowhere:0:0", "hints": ["x"]}))
        path = tmp_path / "h.jsonl"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        with pytest.raises(ParseError):
            corpus.load_hints(path, scenario)

    def test_duplicate_node_raises_parse_error(self, tmp_path, scenario, hints):
        lines = [json.dumps({"node": n, "hints": list(t)})
                 for n, t in sorted(hints.hints.items())]
        lines.append(lines[0])
        path = tmp_path / "h.jsonl"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        with pytest.raises(ParseError):
            corpus.load_hints(path, scenario)
