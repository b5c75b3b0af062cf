"""Query-aligned per-user feature vectors (term-frequency family) and the
feature-matrix container shared by every model."""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .preprocess import tokenize

MODEL_IDS = ("tf", "tfidf", "u2v", "relu2v", "lda")


class QuerySet:
    """Ordered topics, each an ordered list of query words.

    `flattened` is the concatenation of all topic word lists in declaration
    order with duplicates removed (first occurrence wins). Words must be
    lowercase and must survive the tokenizer unchanged, otherwise they could
    never match a corpus token.
    """

    def __init__(self, topics):
        self.topics = {str(name): tuple(words) for name, words in dict(topics).items()}
        seen = set()
        flattened = []
        for name, words in self.topics.items():
            if not words:
                raise ConfigError(f"query topic {name!r} has no words")
            for word in words:
                if word != word.lower():
                    raise ConfigError(f"query word {word!r} in topic {name!r} is not lowercase")
                if tokenize(word) != [word]:
                    raise ConfigError(f"query word {word!r} in topic {name!r} does not survive tokenization")
                if word not in seen:
                    seen.add(word)
                    flattened.append(word)
        self.flattened = tuple(flattened)
        if not self.flattened:
            raise ConfigError("query set is empty")

    def topic_names(self):
        return tuple(self.topics)

    def truncated(self, words_per_topic: int) -> "QuerySet":
        """Copy of this query keeping only the first n words per topic."""
        if words_per_topic < 1:
            raise ConfigError("words_per_topic must be >= 1")
        return QuerySet({name: words[:words_per_topic] for name, words in self.topics.items()})

    @classmethod
    def from_file(cls, path) -> "QuerySet":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: query file must map topic names to word arrays")
        for name, words in data.items():
            if not isinstance(words, list) or not all(isinstance(w, str) for w in words):
                raise ConfigError(f"{path}: topic {name!r} must map to an array of strings")
        return cls(data)

    def __len__(self):
        return len(self.flattened)

    def __eq__(self, other):
        return isinstance(other, QuerySet) and self.topics == other.topics


@dataclass(frozen=True)
class FeatureVector:
    user_id: str
    model_id: str
    values: tuple[float, ...]

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.values):
            raise DataError(f"feature vector for {self.user_id!r} contains NaN/inf")


class FeatureMatrix:
    """Per-user feature rows for one model, users sorted by id."""

    def __init__(self, model_id, column_names, user_ids, values, query=None):
        if model_id not in MODEL_IDS:
            raise ConfigError(f"unknown model_id {model_id!r}; expected one of {MODEL_IDS}")
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (len(user_ids), len(column_names)):
            raise DataError(f"feature matrix shape {values.shape} does not match "
                            f"{len(user_ids)} users x {len(column_names)} columns")
        if not np.all(np.isfinite(values)):
            raise DataError("feature matrix contains NaN/inf")
        if list(user_ids) != sorted(user_ids) or len(set(user_ids)) != len(user_ids):
            raise DataError("user_ids must be sorted and unique")
        self.model_id = model_id
        self.column_names = tuple(column_names)
        self.user_ids = tuple(user_ids)
        self.values = values
        self.query = query
        self._index = {uid: i for i, uid in enumerate(self.user_ids)}

    @property
    def shape(self):
        return self.values.shape

    def row(self, user_id) -> np.ndarray:
        try:
            return self.values[self._index[user_id]]
        except KeyError:
            raise DataError(f"user {user_id!r} not in feature matrix") from None

    def vector(self, user_id) -> FeatureVector:
        return FeatureVector(user_id, self.model_id, tuple(float(v) for v in self.row(user_id)))

    def subset(self, user_ids) -> "FeatureMatrix":
        keep = sorted(user_ids)
        rows = [self._index[uid] for uid in keep]
        return FeatureMatrix(self.model_id, self.column_names, keep, self.values[rows], query=self.query)

    def write_csv(self, path, header_comments=()):
        """Delimited export: optional '#' provenance lines, then the header
        row "user_id,<col>,..." and one full-precision row per user."""
        with open(path, "w", encoding="utf-8", newline="") as fh:
            for comment in header_comments:
                fh.write(f"# {comment}\n")
            writer = csv.writer(fh)
            writer.writerow(["user_id", *self.column_names])
            for uid, row in zip(self.user_ids, self.values):
                writer.writerow([uid, *(repr(float(v)) for v in row)])


def _user_query_counts(corpus, user_id, words):
    counts = Counter()
    wanted = set(words)
    for token in corpus.user_tokens(user_id):
        if token in wanted:
            counts[token] += 1
    return counts


def tf_features(corpus, q: QuerySet) -> FeatureMatrix:
    """Per-user query-word frequencies, each divided by the user's total
    token count so unevenly sized post histories stay comparable."""
    corpus.require_preprocessed()
    user_ids = corpus.user_ids()
    rows = np.zeros((len(user_ids), len(q.flattened)))
    col = {w: j for j, w in enumerate(q.flattened)}
    for i, user_id in enumerate(user_ids):
        n_u = corpus.users[user_id].token_count
        if n_u == 0:
            raise DataError(f"user {user_id!r} has no tokens; term frequencies are undefined")
        for word, count in _user_query_counts(corpus, user_id, q.flattened).items():
            rows[i, col[word]] = count / n_u
    return FeatureMatrix("tf", q.flattened, user_ids, rows, query=q)


def idf_weights(corpus, q: QuerySet) -> np.ndarray:
    """Inverse document frequency per query word: ln(|U| / (1 + df)).

    df counts users whose history contains the word at least once; the +1
    offset keeps the ratio finite (and makes ubiquitous words go negative).
    """
    corpus.require_preprocessed()
    if corpus.n_users() < 1:
        raise DataError("idf requires at least one user")
    n_users = corpus.n_users()
    df = Counter()
    for user_id in corpus.user_ids():
        seen = set(corpus.user_tokens(user_id)).intersection(q.flattened)
        for word in seen:
            df[word] += 1
    return np.array([math.log(n_users / (1 + df[w])) for w in q.flattened])


def tfidf_features(corpus, q: QuerySet) -> FeatureMatrix:
    """Elementwise product of the per-user TF rows with the IDF vector."""
    tf = tf_features(corpus, q)
    idf = idf_weights(corpus, q)
    return FeatureMatrix("tfidf", q.flattened, tf.user_ids, tf.values * idf, query=q)


@dataclass
class ModelArtifacts:
    """Trained inputs the dispatcher may need: embedding tables for the
    sigmoid models, a topic model for the topic baseline."""

    word_table: object = None
    user_table: object = None
    lda_model: object = None


def build_feature_matrix(model_id, corpus, q, model_artifacts: ModelArtifacts | None = None) -> FeatureMatrix:
    """Uniform dispatcher over the five feature models."""
    from . import embeddings, lda

    artifacts = model_artifacts or ModelArtifacts()
    if model_id == "tf":
        return tf_features(corpus, q)
    if model_id == "tfidf":
        return tfidf_features(corpus, q)
    if model_id in ("u2v", "relu2v"):
        if artifacts.user_table is None or artifacts.word_table is None:
            raise ConfigError(f"model {model_id!r} requires trained user embeddings and a word table")
        u2v = embeddings.u2v_features(artifacts.user_table, artifacts.word_table, q)
        if model_id == "u2v":
            return u2v
        return embeddings.rel_u2v_features(u2v)
    if model_id == "lda":
        if artifacts.lda_model is None:
            raise ConfigError("model 'lda' requires a trained topic model")
        return lda.lda_features(artifacts.lda_model, corpus)
    raise ConfigError(f"unknown model_id {model_id!r}; expected one of {MODEL_IDS}")
