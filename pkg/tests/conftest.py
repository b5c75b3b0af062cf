"""Shared fixtures: the bundled planted-topic corpus, its word-vector
table, and embeddings trained on it (expensive, so session-scoped)."""

from pathlib import Path

import numpy as np
import pytest

from proficiency import (Corpus, Post, QuerySet, TrainConfig, UserRecord,
                         WordEmbeddingTable, load_corpus, load_word_embeddings,
                         preprocess_corpus, train_user_embeddings)

FIXTURES = Path(__file__).parent / "fixtures"

TOPIC_A = tuple(f"qa{i // 26}{chr(97 + i % 26)}" for i in range(50))
TOPIC_B = tuple(f"qb{i // 26}{chr(97 + i % 26)}" for i in range(50))
BACKGROUND = tuple(f"bg{i // 26}{chr(97 + i % 26)}" for i in range(150))

ACCEPTANCE_TRAIN_SEED = 11
ACCEPTANCE_TASK_SEED = 42


def make_corpus(user_posts: dict) -> Corpus:
    """Build a preprocessed corpus directly from {user: [token lists]}."""
    posts = {}
    users = {}
    for user_id, token_lists in user_posts.items():
        ps = [Post(user_id, f"{user_id}-p{j:03d}", " ".join(toks), tuple(toks))
              for j, toks in enumerate(token_lists)]
        posts[user_id] = ps
        users[user_id] = UserRecord(user_id, frozenset(), len(ps),
                                    sum(len(t) for t in token_lists))
    return Corpus(users=users, posts=posts, preprocessed=True)


def make_word_table(words, dim=8, seed=0, scale=1.0) -> WordEmbeddingTable:
    rng = np.random.default_rng(seed)
    vectors = {}
    for w in words:
        v = rng.standard_normal(dim)
        vectors[w] = scale * v / np.linalg.norm(v)
    return WordEmbeddingTable(dim, vectors)


@pytest.fixture(scope="session")
def planted_corpus():
    corpus = load_corpus(FIXTURES / "synth200" / "posts.jsonl",
                         FIXTURES / "synth200" / "users.jsonl")
    return preprocess_corpus(corpus)


@pytest.fixture(scope="session")
def word_table():
    return load_word_embeddings(FIXTURES / "word_vectors_64d.txt")


@pytest.fixture(scope="session")
def trained_embeddings(planted_corpus, word_table):
    import time

    start = time.time()
    table = train_user_embeddings(planted_corpus, word_table,
                                  TrainConfig(seed=ACCEPTANCE_TRAIN_SEED))
    table.train_seconds = time.time() - start
    return table


@pytest.fixture(scope="session")
def full_query():
    return QuerySet({"alpha": TOPIC_A, "beta": TOPIC_B})


@pytest.fixture(scope="session")
def planted_labels(planted_corpus):
    return {uid: planted_corpus.users[uid].labels for uid in planted_corpus.user_ids()}
