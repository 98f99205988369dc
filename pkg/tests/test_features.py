import json

import numpy as np
import pytest

from questgraph.engine import Observation
from questgraph.errors import DimMismatch, NonFinite, ParseError
from questgraph.features import (HashFeaturizer, featurize, hash_featurize,
                                 load_embeddings, normalize_text)


def obs(choices, hint=None):
    return Observation(quest="q", choices=tuple(choices), hint=hint, correct_index=0)


def write_embeddings(tmp_path, dim, rows, model="test-model"):
    lines = [json.dumps({"dim": dim, "model": model})]
    lines += [json.dumps({"text": t, "vec": v}) for t, v in rows]
    path = tmp_path / "emb.jsonl"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


class TestNormalize:
    def test_rule(self):
        assert normalize_text("  Take   the Bus\t") == "take the bus"


class TestLoadEmbeddings:
    def test_small_table(self, tmp_path):
        rows = [(f"text number {i}", [float(i), 0.5, -1.0, 2.0]) for i in range(10)]
        table = load_embeddings(write_embeddings(tmp_path, 4, rows))
        assert table.dim == 4
        assert len(table.entries) == 10
        assert table.meta["model"] == "test-model"
        np.testing.assert_allclose(table.lookup("Text  Number 3"), [3.0, 0.5, -1.0, 2.0])

    def test_dim_mismatch(self, tmp_path):
        rows = [("one", [1.0, 2.0]), ("two", [1.0, 2.0, 3.0])]
        with pytest.raises(DimMismatch):
            load_embeddings(write_embeddings(tmp_path, 2, rows))

    def test_duplicate_key(self, tmp_path):
        rows = [("same text", [1.0, 2.0]), ("Same  TEXT", [3.0, 4.0])]
        with pytest.raises(ParseError):
            load_embeddings(write_embeddings(tmp_path, 2, rows))

    def test_non_finite(self, tmp_path):
        rows = [("bad", [1.0, float("nan")])]
        with pytest.raises(NonFinite):
            load_embeddings(write_embeddings(tmp_path, 2, rows))

    def test_missing_header(self, tmp_path):
        path = tmp_path / "emb.jsonl"
        path.write_text(json.dumps({"text": "x", "vec": [1.0]}) + "\n", encoding="utf-8")
        with pytest.raises(ParseError):
            load_embeddings(path)


class TestHashFeaturizer:
    def test_empty_text_is_zero(self):
        assert not hash_featurize("", 16).any()

    def test_deterministic(self):
        a = hash_featurize("take the bus", 32)
        b = hash_featurize("take the bus", 32)
        np.testing.assert_array_equal(a, b)

    def test_order_free_bag(self):
        np.testing.assert_array_equal(hash_featurize("take bus", 64),
                                      hash_featurize("bus take", 64))

    def test_unit_norm_or_zero(self):
        for text in ("", "a", "some longer action text", "x y z w"):
            vec = hash_featurize(text, 16)
            norm = np.linalg.norm(vec)
            assert norm == pytest.approx(1.0) or norm == 0.0

    def test_all_finite(self):
        vec = hash_featurize("word " * 100, 8)
        assert np.all(np.isfinite(vec))


class TestFeaturize:
    def test_concatenation(self, tmp_path):
        rows = [("alpha", [1.0, 2.0, 3.0, 4.0]), ("beta", [5.0, 6.0, 7.0, 8.0])]
        table = load_embeddings(write_embeddings(tmp_path, 4, rows))
        fv = featurize(obs(["alpha", "beta"]), table, HashFeaturizer(4))
        assert fv.values.shape == (8,)
        np.testing.assert_allclose(fv.values, [1, 2, 3, 4, 5, 6, 7, 8])
        assert fv.layout == (2, 4, False)

    def test_permuting_choices_permutes_blocks(self, tmp_path):
        rows = [("alpha", [1.0, 0.0]), ("beta", [0.0, 1.0])]
        table = load_embeddings(write_embeddings(tmp_path, 2, rows))
        fb = HashFeaturizer(2)
        ab = featurize(obs(["alpha", "beta"]), table, fb)
        ba = featurize(obs(["beta", "alpha"]), table, fb)
        np.testing.assert_array_equal(ab.choice_block(0), ba.choice_block(1))
        np.testing.assert_array_equal(ab.choice_block(1), ba.choice_block(0))

    def test_unseen_text_uses_fallback(self, tmp_path):
        table = load_embeddings(write_embeddings(tmp_path, 8, [("known", [0.0] * 8)]))
        fb = HashFeaturizer(8)
        fv1 = featurize(obs(["unknown thing", "known"]), table, fb)
        fv2 = featurize(obs(["unknown thing", "known"]), table, fb)
        np.testing.assert_array_equal(fv1.values, fv2.values)
        np.testing.assert_array_equal(fv1.choice_block(0), fb("unknown thing"))

    def test_hint_appended(self):
        fb = HashFeaturizer(4)
        with_hint = featurize(obs(["a", "b"], hint="clue text"), None, fb)
        assert with_hint.layout == (2, 4, True)
        assert with_hint.values.shape == (12,)
        np.testing.assert_array_equal(with_hint.hint_block(), fb("clue text"))
        suppressed = featurize(obs(["a", "b"], hint="clue text"), None, fb,
                               include_hint=False)
        assert suppressed.layout == (2, 4, False)

    def test_block_locality(self):
        fb = HashFeaturizer(8)
        base = featurize(obs(["one", "two", "three"]), None, fb)
        changed = featurize(obs(["one", "TWO CHANGED", "three"]), None, fb)
        np.testing.assert_array_equal(base.choice_block(0), changed.choice_block(0))
        np.testing.assert_array_equal(base.choice_block(2), changed.choice_block(2))
        assert not np.array_equal(base.choice_block(1), changed.choice_block(1))

    def test_dim_mismatch(self, tmp_path):
        table = load_embeddings(write_embeddings(tmp_path, 4, [("x", [0.0] * 4)]))
        with pytest.raises(DimMismatch):
            featurize(obs(["x", "y"]), table, HashFeaturizer(8))

    def test_pure_function(self, sgraph, scenario, hints):
        from questgraph import engine

        cfg = engine.GameConfig(num_choices=3, handicap=True, seed=12)
        _, observation = engine.new_game(sgraph, scenario, hints, cfg)
        fb = HashFeaturizer(16)
        a = featurize(observation, None, fb)
        b = featurize(observation, None, fb)
        np.testing.assert_array_equal(a.values, b.values)
        assert np.all(np.isfinite(a.values))
