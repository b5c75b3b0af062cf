import math
from collections import Counter

import numpy as np
import pytest

from proficiency import (ConfigError, DataError, FeatureMatrix, ModelArtifacts,
                         QuerySet, TrainConfig, build_feature_matrix, idf_weights,
                         tf_features, tfidf_features, train_lda,
                         train_user_embeddings)
from tests.conftest import make_corpus, make_word_table


class TestQuerySet:
    def test_flatten_order_and_dedup(self):
        q = QuerySet({"a": ("x", "y"), "b": ("y", "z")})
        assert q.flattened == ("x", "y", "z")
        assert q.topic_names() == ("a", "b")

    def test_rejects_uppercase(self):
        with pytest.raises(ConfigError):
            QuerySet({"a": ("OK",)})

    def test_rejects_non_surviving_word(self):
        with pytest.raises(ConfigError):
            QuerySet({"a": ("two words",)})

    def test_accepts_tokenizer_survivors(self):
        q = QuerySet({"a": ("#championsleague", "self-titled", "co-star")})
        assert len(q) == 3

    def test_truncated(self):
        q = QuerySet({"a": ("x", "y", "z"), "b": ("u", "v")})
        assert q.truncated(2).flattened == ("x", "y", "u", "v")

    def test_from_file(self, tmp_path):
        path = tmp_path / "q.json"
        path.write_text('{"a": ["x"], "b": ["y"]}')
        assert QuerySet.from_file(path).flattened == ("x", "y")


class TestTfFeatures:
    def test_direct_fraction(self):
        tokens = ["therapy"] * 5 + ["filler"] * 45
        corpus = make_corpus({"u1": [tokens], "u2": [["other"] * 10]})
        q = QuerySet({"t": ("therapy", "ocd")})
        m = tf_features(corpus, q)
        np.testing.assert_allclose(m.row("u1"), [0.1, 0.0])

    def test_unmatchable_word_gives_zero_column(self):
        corpus = make_corpus({"u1": [["abc"] * 4], "u2": [["abc"] * 2]})
        m = tf_features(corpus, QuerySet({"t": ("abc", "zzz")}))
        assert np.all(m.values[:, 1] == 0.0)

    def test_zero_token_user_rejected(self):
        corpus = make_corpus({"u1": [[]], "u2": [["a"]]})
        with pytest.raises(DataError, match="u1"):
            tf_features(corpus, QuerySet({"t": ("a",)}))

    def test_requires_preprocessed(self, tmp_path):
        import json

        from proficiency import load_corpus

        posts = tmp_path / "p.jsonl"
        users = tmp_path / "u.jsonl"
        posts.write_text(json.dumps({"user_id": "a", "post_id": "p", "text": "x"}) + "\n")
        users.write_text("")
        raw = load_corpus(posts, users)
        with pytest.raises(DataError, match="preprocessed"):
            tf_features(raw, QuerySet({"t": ("x",)}))

    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(5)
        vocab = [f"w{i}" for i in range(30)]
        user_posts = {}
        for u in range(100):
            n_posts = int(rng.integers(1, 5))
            user_posts[f"u{u:03d}"] = [
                [vocab[k] for k in rng.integers(0, 30, size=rng.integers(3, 25))]
                for _ in range(n_posts)]
        corpus = make_corpus(user_posts)
        q = QuerySet({"t": tuple(vocab[:7])})
        m = tf_features(corpus, q)
        for uid, token_lists in user_posts.items():
            counts = Counter(t for toks in token_lists for t in toks)
            n_u = sum(len(t) for t in token_lists)
            expected = [counts[w] / n_u for w in q.flattened]
            np.testing.assert_array_equal(m.row(uid), expected)

    def test_values_bounded_and_row_sums(self):
        corpus = make_corpus({"u1": [["a", "b", "a"]], "u2": [["c", "c"]]})
        m = tf_features(corpus, QuerySet({"t": ("a", "b", "c")}))
        assert np.all(m.values >= 0) and np.all(m.values <= 1)
        assert np.all(m.values.sum(axis=1) <= 1 + 1e-12)

    def test_post_order_invariance(self):
        posts = [["a", "b"], ["c"], ["a", "a"]]
        c1 = make_corpus({"u1": posts, "u2": [["b"]]})
        c2 = make_corpus({"u1": posts[::-1], "u2": [["b"]]})
        q = QuerySet({"t": ("a", "b", "c")})
        np.testing.assert_array_equal(tf_features(c1, q).values, tf_features(c2, q).values)


class TestIdfWeights:
    def _corpus(self, df, n_users=10):
        # df users contain "word", the rest only filler
        posts = {f"u{i:02d}": [["word" if i < df else "fill", "pad"]] for i in range(n_users)}
        return make_corpus(posts)

    def test_half_population(self):
        idf = idf_weights(self._corpus(df=4), QuerySet({"t": ("word",)}))
        assert idf[0] == pytest.approx(math.log(2), abs=1e-12)

    def test_absent_word(self):
        idf = idf_weights(self._corpus(df=0), QuerySet({"t": ("word",)}))
        assert idf[0] == pytest.approx(math.log(10), abs=1e-12)

    def test_ubiquitous_word_goes_negative(self):
        idf = idf_weights(self._corpus(df=10), QuerySet({"t": ("word",)}))
        assert idf[0] == pytest.approx(math.log(10 / 11), abs=1e-12)
        assert idf[0] < 0

    def test_zero_exactly_when_df_plus_one_is_population(self):
        idf = idf_weights(self._corpus(df=9), QuerySet({"t": ("word",)}))
        assert idf[0] == pytest.approx(0.0, abs=1e-15)


class TestTfidfFeatures:
    def test_elementwise_product(self):
        tokens = ["w"] * 5 + ["x"] * 45
        corpus = make_corpus({"u1": [tokens], "u2": [["x"] * 10]})
        m = tfidf_features(corpus, QuerySet({"t": ("w",)}))
        # df=1 of 2 users: idf = ln(2/2) = 0 -> column exactly zero
        assert m.row("u1")[0] == pytest.approx(0.0)

    def test_matches_composed_oracles(self):
        rng = np.random.default_rng(6)
        vocab = [f"w{i}" for i in range(12)]
        corpus = make_corpus({
            f"u{i}": [[vocab[k] for k in rng.integers(0, 12, size=20)]] for i in range(30)})
        q = QuerySet({"t": tuple(vocab[:5])})
        m = tfidf_features(corpus, q)
        # oracle: recount tf and df independently
        for uid in corpus.user_ids():
            tokens = list(corpus.user_tokens(uid))
            counts = Counter(tokens)
            for j, w in enumerate(q.flattened):
                df = sum(1 for other in corpus.user_ids()
                         if w in set(corpus.user_tokens(other)))
                expected = (counts[w] / len(tokens)) * math.log(30 / (1 + df))
                assert m.row(uid)[j] == pytest.approx(expected, rel=1e-12)


class TestFeatureMatrix:
    def test_rejects_nan(self):
        with pytest.raises(DataError):
            FeatureMatrix("tf", ("a",), ("u1",), [[float("nan")]])

    def test_rejects_unsorted_users(self):
        with pytest.raises(DataError):
            FeatureMatrix("tf", ("a",), ("u2", "u1"), [[1.0], [2.0]])

    def test_csv_roundtrip_precision(self, tmp_path):
        values = [[1 / 3, 2.0 ** -52], [math.pi, 1e-300]]
        m = FeatureMatrix("tf", ("c1", "c2"), ("u1", "u2"), values)
        path = tmp_path / "m.csv"
        m.write_csv(path, header_comments=["test"])
        lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
        assert lines[0] == "user_id,c1,c2"
        parsed = [[float(v) for v in line.split(",")[1:]] for line in lines[1:]]
        np.testing.assert_array_equal(np.array(parsed), m.values)

    def test_subset(self):
        m = FeatureMatrix("tf", ("a",), ("u1", "u2", "u3"), [[1.0], [2.0], [3.0]])
        s = m.subset(["u3", "u1"])
        assert s.user_ids == ("u1", "u3")
        np.testing.assert_array_equal(s.values, [[1.0], [3.0]])


@pytest.fixture(scope="module")
def small_setup():
    rng = np.random.default_rng(8)
    vocab_a = tuple(f"aw{i}" for i in range(6))
    vocab_b = tuple(f"bw{i}" for i in range(6))
    posts = {}
    for i in range(12):
        vocab = vocab_a if i % 2 == 0 else vocab_b
        posts[f"u{i:02d}"] = [[vocab[k] for k in rng.integers(0, 6, size=12)]
                              for _ in range(3)]
    corpus = make_corpus(posts)
    words = make_word_table(vocab_a + vocab_b, dim=6, seed=1, scale=8.0)
    q = QuerySet({"a": vocab_a, "b": vocab_b})
    user_table = train_user_embeddings(corpus, words, TrainConfig(seed=2, max_epochs=3, patience=3))
    lda_model = train_lda(corpus, k=3, passes=2, seed=4)
    return corpus, q, ModelArtifacts(word_table=words, user_table=user_table,
                                     lda_model=lda_model)


class TestDispatcher:
    def test_tf_dispatch_matches_direct(self, small_setup):
        corpus, q, artifacts = small_setup
        direct = tf_features(corpus, q)
        via = build_feature_matrix("tf", corpus, q, artifacts)
        np.testing.assert_array_equal(via.values, direct.values)

    def test_missing_artifacts_error(self, small_setup):
        corpus, q, _ = small_setup
        with pytest.raises(ConfigError):
            build_feature_matrix("u2v", corpus, q, ModelArtifacts())
        with pytest.raises(ConfigError):
            build_feature_matrix("lda", corpus, q, ModelArtifacts())

    @pytest.mark.parametrize("model_id", ["tf", "tfidf", "u2v", "relu2v", "lda"])
    def test_shapes_across_models(self, small_setup, model_id):
        corpus, q, artifacts = small_setup
        m = build_feature_matrix(model_id, corpus, q, artifacts)
        assert m.shape[0] == corpus.n_users()
        assert m.shape[1] == (3 if model_id == "lda" else len(q))
        assert m.model_id == model_id
