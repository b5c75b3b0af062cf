"""Corpus loading, filtering, and synthetic corpus generation.

A corpus maps users to their posts plus per-user proficiency labels.
Input files are JSON Lines: posts carry user_id/post_id/text, users carry
user_id/labels. Everything is immutable after construction.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, CorpusFormatError, DataError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Post:
    user_id: str
    post_id: str
    raw_text: str
    tokens: tuple[str, ...] = ()


@dataclass(frozen=True)
class UserRecord:
    user_id: str
    labels: frozenset[str]
    post_count: int
    token_count: int


@dataclass(frozen=True)
class Corpus:
    """Users, their posts, and whether preprocessing has run.

    Treated as immutable once built; safe for concurrent readers.
    """

    users: dict[str, UserRecord]
    posts: dict[str, list[Post]]
    preprocessed: bool = False

    def n_users(self) -> int:
        return len(self.users)

    def user_ids(self) -> list[str]:
        return sorted(self.users)

    def iter_posts(self):
        for user_id in self.user_ids():
            yield from self.posts[user_id]

    def user_tokens(self, user_id):
        """All tokens of one user, post order preserved."""
        for post in self.posts[user_id]:
            yield from post.tokens

    def require_preprocessed(self):
        if not self.preprocessed:
            raise DataError("operation requires a preprocessed corpus")


def _parse_jsonl_record(path, lineno, line, required_fields):
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise CorpusFormatError(path, lineno, f"invalid JSON: {exc.msg}") from None
    if not isinstance(record, dict):
        raise CorpusFormatError(path, lineno, "record is not an object")
    for name, kind in required_fields:
        if name not in record:
            raise CorpusFormatError(path, lineno, f"missing field {name!r}")
        if not isinstance(record[name], kind):
            raise CorpusFormatError(path, lineno, f"field {name!r} has wrong type")
    return record


def _iter_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip() == "" or line.lstrip().startswith("#"):
                continue
            yield lineno, line


def load_corpus(posts_path, users_path) -> Corpus:
    """Load a corpus from a posts file and a users file.

    Users present in the posts file but missing from the users file are
    kept with an empty label set; users without any post are dropped.
    Unknown record fields are ignored.
    """
    labels = load_user_labels(users_path)

    posts = {}
    seen_post_ids = set()
    for lineno, line in _iter_jsonl(posts_path):
        record = _parse_jsonl_record(
            posts_path, lineno, line, [("user_id", str), ("post_id", str), ("text", str)]
        )
        post_id = record["post_id"]
        if post_id in seen_post_ids:
            raise CorpusFormatError(posts_path, lineno, f"duplicate post_id {post_id!r}")
        seen_post_ids.add(post_id)
        posts.setdefault(record["user_id"], []).append(
            Post(record["user_id"], post_id, record["text"])
        )
    if not posts:
        raise DataError(f"{posts_path}: posts file contains no records")

    dropped = set(labels) - set(posts)
    if dropped:
        log.warning("dropping %d labeled user(s) without posts", len(dropped))
    users = {
        user_id: UserRecord(user_id, frozenset(labels.get(user_id, ())), len(user_posts), 0)
        for user_id, user_posts in posts.items()
    }
    return Corpus(users=users, posts=posts, preprocessed=False)


def filter_min_posts(corpus: Corpus, k: int) -> Corpus:
    """Keep only users with at least k posts (inclusive threshold)."""
    if k < 1:
        raise ConfigError("min-post threshold k must be >= 1")
    kept = {uid for uid, rec in corpus.users.items() if rec.post_count >= k}
    if len(kept) < 2:
        raise DataError(f"filter_min_posts(k={k}) leaves {len(kept)} user(s); cross-user models need >= 2")
    return Corpus(
        users={uid: corpus.users[uid] for uid in kept},
        posts={uid: corpus.posts[uid] for uid in kept},
        preprocessed=corpus.preprocessed,
    )


def subset_corpus(corpus: Corpus, user_ids) -> Corpus:
    """Corpus restricted to the given users (e.g. a balanced subsample)."""
    keep = set(user_ids)
    missing = keep - set(corpus.users)
    if missing:
        raise DataError(f"unknown user(s) in subset: {sorted(missing)[:3]}")
    return Corpus(
        users={u: corpus.users[u] for u in keep},
        posts={u: corpus.posts[u] for u in keep},
        preprocessed=corpus.preprocessed,
    )


def load_user_labels(users_path) -> dict:
    """Read just the user_id -> label-set map from a users file."""
    labels = {}
    for lineno, line in _iter_jsonl(users_path):
        record = _parse_jsonl_record(users_path, lineno, line, [("user_id", str), ("labels", list)])
        if not all(isinstance(x, str) for x in record["labels"]):
            raise CorpusFormatError(users_path, lineno, "labels must be an array of strings")
        labels.setdefault(record["user_id"], set()).update(record["labels"])
    return labels


@dataclass(frozen=True)
class SynthConfig:
    """Recipe for a planted-topic synthetic corpus.

    Each user gets one topic label; each token comes from the user's topic
    vocabulary with probability topic_word_rate, otherwise from the
    background vocabulary. Ranges are inclusive.
    """

    n_users: int
    topics: tuple[tuple[str, tuple[str, ...]], ...]
    background_vocab: tuple[str, ...]
    topic_word_rate: float
    posts_per_user: tuple[int, int]
    post_length: tuple[int, int]
    seed: int = 0

    def __post_init__(self):
        if self.n_users < 2:
            raise ConfigError("synthetic corpus needs n_users >= 2")
        if not 0.0 <= self.topic_word_rate <= 1.0:
            raise ConfigError("topic_word_rate must lie in [0, 1]")
        if not self.topics:
            raise ConfigError("at least one topic is required")
        if not self.background_vocab:
            raise ConfigError("background_vocab must be non-empty")
        seen = set(self.background_vocab)
        if len(seen) != len(self.background_vocab):
            raise ConfigError("background_vocab contains duplicates")
        for name, vocab in self.topics:
            if not vocab:
                raise ConfigError(f"topic {name!r} has an empty vocabulary")
            overlap = seen.intersection(vocab)
            if overlap:
                raise ConfigError(f"topic {name!r} vocabulary overlaps another pool: {sorted(overlap)[:3]}")
            seen.update(vocab)
        for label, (lo, hi) in (("posts_per_user", self.posts_per_user), ("post_length", self.post_length)):
            if lo < 1 or hi < lo:
                raise ConfigError(f"{label} range must satisfy 1 <= lo <= hi, got ({lo}, {hi})")


def generate_synthetic_corpus(config: SynthConfig) -> Corpus:
    """Generate a labeled corpus; fully deterministic given config.seed."""
    rng = np.random.default_rng(config.seed)
    topic_names = [name for name, _ in config.topics]
    topic_vocabs = [list(vocab) for _, vocab in config.topics]
    background = list(config.background_vocab)

    users = {}
    posts = {}
    width = max(4, len(str(config.n_users - 1)))
    for i in range(config.n_users):
        user_id = f"u{i:0{width}d}"
        topic_idx = int(rng.integers(0, len(topic_names)))
        n_posts = int(rng.integers(config.posts_per_user[0], config.posts_per_user[1] + 1))
        user_posts = []
        for j in range(n_posts):
            length = int(rng.integers(config.post_length[0], config.post_length[1] + 1))
            from_topic = rng.random(length) < config.topic_word_rate
            topic_picks = rng.integers(0, len(topic_vocabs[topic_idx]), size=length)
            background_picks = rng.integers(0, len(background), size=length)
            tokens = [
                topic_vocabs[topic_idx][topic_picks[t]] if from_topic[t] else background[background_picks[t]]
                for t in range(length)
            ]
            user_posts.append(Post(user_id, f"{user_id}-p{j:04d}", " ".join(tokens)))
        posts[user_id] = user_posts
        users[user_id] = UserRecord(user_id, frozenset({topic_names[topic_idx]}), n_posts, 0)
    return Corpus(users=users, posts=posts, preprocessed=False)


def save_corpus_files(corpus: Corpus, posts_path, users_path):
    """Write a corpus back out in the JSONL interchange format."""
    with open(posts_path, "w", encoding="utf-8") as fh:
        for post in corpus.iter_posts():
            fh.write(json.dumps(
                {"user_id": post.user_id, "post_id": post.post_id, "text": post.raw_text}
            ) + "\n")
    with open(users_path, "w", encoding="utf-8") as fh:
        for user_id in corpus.user_ids():
            rec = corpus.users[user_id]
            fh.write(json.dumps({"user_id": user_id, "labels": sorted(rec.labels)}) + "\n")
