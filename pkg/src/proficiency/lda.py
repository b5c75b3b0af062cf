"""Topic-model baseline: collapsed Gibbs training over posts and
post-level topic mixtures averaged up to user-level features."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .corpus import Post
from .embeddings import _mix_seed
from .errors import ConfigError, DataError
from .features import FeatureMatrix, FeatureVector

log = logging.getLogger(__name__)

DEFAULT_EXCLUDED_TOKENS = ("@user", "<url>", "<number>")

# Gibbs settings for per-post inference against a frozen model.
INFERENCE_SWEEPS = 50
INFERENCE_BURN_IN = 25


@dataclass(frozen=True)
class LdaModel:
    """Trained topic model: per-topic word distributions over a fixed vocab."""

    k: int
    vocab: tuple[str, ...]
    phi: np.ndarray  # (k, |vocab|), rows sum to 1
    alpha: float
    beta: float
    seed: int
    passes: int

    def word_index(self):
        return {w: i for i, w in enumerate(self.vocab)}


@dataclass(frozen=True)
class TopicDistribution:
    post_id: str
    theta: tuple[float, ...]


def _gibbs_sample_token(rng_value, weights):
    cum = np.cumsum(weights)
    idx = int(np.searchsorted(cum, rng_value * cum[-1], side="right"))
    return min(idx, len(weights) - 1)


def train_lda(corpus, k: int = 50, passes: int = 1, alpha: float | None = None,
              beta: float = 0.01, seed: int = 0, max_users: int | None = None,
              exclude_tokens=DEFAULT_EXCLUDED_TOKENS) -> LdaModel:
    """Fit topic-word distributions by collapsed Gibbs sampling.

    Documents are individual posts. The vocabulary is every corpus token
    except the masking placeholders. alpha defaults to 50/k; passes is the
    number of full sweeps over all tokens after random initialization.
    max_users keeps only the top users by post count, mirroring runs where
    the full population is too large to sample.
    """
    corpus.require_preprocessed()
    if k < 1:
        raise ConfigError("topic count k must be >= 1")
    if passes < 0:
        raise ConfigError("passes must be >= 0")
    if beta <= 0:
        raise ConfigError("beta must be positive")
    if alpha is None:
        alpha = 50.0 / k
    if alpha <= 0:
        raise ConfigError("alpha must be positive")

    user_ids = corpus.user_ids()
    if max_users is not None and max_users < len(user_ids):
        by_posts = sorted(user_ids, key=lambda u: (-corpus.users[u].post_count, u))
        user_ids = sorted(by_posts[:max_users])

    excluded = set(exclude_tokens)
    vocab = sorted({t for uid in user_ids for t in corpus.user_tokens(uid) if t not in excluded})
    if not vocab:
        raise DataError("empty vocabulary: corpus contains only placeholder tokens")
    index = {w: i for i, w in enumerate(vocab)}
    v = len(vocab)

    docs = []
    for uid in user_ids:
        for post in corpus.posts[uid]:
            ids = np.array([index[t] for t in post.tokens if t in index], dtype=np.intp)
            if len(ids):
                docs.append(ids)
    total_tokens = sum(len(d) for d in docs)
    if total_tokens == 0:
        raise DataError("no in-vocabulary tokens to train on")

    rng = np.random.default_rng(seed)
    n_dk = np.zeros((len(docs), k))
    n_kw = np.zeros((k, v))
    n_k = np.zeros(k)
    assignments = []
    for d, ids in enumerate(docs):
        z = rng.integers(0, k, size=len(ids))
        assignments.append(z)
        for t, w in zip(z, ids):
            n_dk[d, t] += 1
            n_kw[t, w] += 1
            n_k[t] += 1

    v_beta = v * beta
    for sweep in range(passes):
        uniforms = rng.random(total_tokens)
        pos = 0
        for d, ids in enumerate(docs):
            z = assignments[d]
            doc_row = n_dk[d]
            for t in range(len(ids)):
                w = ids[t]
                old = z[t]
                doc_row[old] -= 1
                n_kw[old, w] -= 1
                n_k[old] -= 1
                weights = (doc_row + alpha) * (n_kw[:, w] + beta) / (n_k + v_beta)
                new = _gibbs_sample_token(uniforms[pos], weights)
                pos += 1
                z[t] = new
                doc_row[new] += 1
                n_kw[new, w] += 1
                n_k[new] += 1
        if int(n_kw.sum()) != total_tokens:
            raise DataError(f"assignment counts diverged at sweep {sweep}: "
                            f"{int(n_kw.sum())} != {total_tokens}")

    phi = (n_kw + beta) / (n_k + v_beta)[:, None]
    return LdaModel(k=k, vocab=tuple(vocab), phi=phi, alpha=float(alpha),
                    beta=float(beta), seed=int(seed), passes=int(passes))


def infer_post_topics(model: LdaModel, post: Post, sweeps: int = INFERENCE_SWEEPS,
                      burn_in: int = INFERENCE_BURN_IN) -> TopicDistribution:
    """Estimate a post's topic mixture by Gibbs sampling against frozen phi.

    The chain seed is derived from the model seed and the post id, so
    inference over distinct posts is order-independent and reproducible.
    Posts without in-vocabulary tokens get the uniform distribution.
    """
    index = model.word_index()
    ids = np.array([index[t] for t in post.tokens if t in index], dtype=np.intp)
    k = model.k
    if len(ids) == 0:
        return TopicDistribution(post.post_id, tuple([1.0 / k] * k))
    if k == 1:
        return TopicDistribution(post.post_id, (1.0,))

    rng = np.random.default_rng(_mix_seed(model.seed, "infer", post.post_id))
    z = rng.integers(0, k, size=len(ids))
    counts = np.zeros(k)
    for t in z:
        counts[t] += 1
    phi_cols = model.phi[:, ids]  # (k, m)

    accumulated = np.zeros(k)
    kept = 0
    uniforms = rng.random(sweeps * len(ids))
    pos = 0
    for sweep in range(sweeps):
        for t in range(len(ids)):
            old = z[t]
            counts[old] -= 1
            weights = (counts + model.alpha) * phi_cols[:, t]
            new = _gibbs_sample_token(uniforms[pos], weights)
            pos += 1
            z[t] = new
            counts[new] += 1
        if sweep >= burn_in:
            accumulated += counts
            kept += 1
    mean_counts = accumulated / kept
    theta = (mean_counts + model.alpha) / (len(ids) + k * model.alpha)
    return TopicDistribution(post.post_id, tuple(float(x) for x in theta))


def user_lda_features(model: LdaModel, corpus, user_id, token_weighted: bool = False) -> FeatureVector:
    """Average the user's per-post topic mixtures into one feature vector.

    The default is an unweighted mean over posts; token_weighted weights
    each post by its in-vocabulary token count instead.
    """
    if user_id not in corpus.users:
        raise DataError(f"user {user_id!r} not in corpus")
    index = model.word_index()
    thetas = []
    weights = []
    for post in corpus.posts[user_id]:
        dist = infer_post_topics(model, post)
        thetas.append(dist.theta)
        weights.append(sum(1 for t in post.tokens if t in index))
    thetas = np.asarray(thetas)
    if token_weighted and sum(weights) > 0:
        mean = np.average(thetas, axis=0, weights=weights)
    else:
        mean = thetas.mean(axis=0)
    return FeatureVector(user_id, "lda", tuple(float(x) for x in mean))


def lda_features(model: LdaModel, corpus, token_weighted: bool = False) -> FeatureMatrix:
    """Feature matrix over all corpus users, columns topic_0..topic_{k-1}."""
    corpus.require_preprocessed()
    user_ids = corpus.user_ids()
    rows = np.stack([user_lda_features(model, corpus, uid, token_weighted).values
                     for uid in user_ids])
    columns = tuple(f"topic_{i}" for i in range(model.k))
    return FeatureMatrix("lda", columns, user_ids, rows)


def save_lda_model(path, model: LdaModel):
    """Single-file text format: header line "k v alpha beta seed passes",
    then the vocab (one word per line), then k phi rows."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{model.k} {len(model.vocab)} {repr(model.alpha)} {repr(model.beta)} "
                 f"{model.seed} {model.passes}\n")
        for word in model.vocab:
            fh.write(word + "\n")
        for row in model.phi:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def load_lda_model(path) -> LdaModel:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataError(f"{path}: empty model file")
    header = lines[0].split()
    if len(header) != 6:
        raise DataError(f"{path}:1: header must be 'k v alpha beta seed passes'")
    k, v = int(header[0]), int(header[1])
    alpha, beta = float(header[2]), float(header[3])
    seed, passes = int(header[4]), int(header[5])
    if len(lines) < 1 + v + k:
        raise DataError(f"{path}: truncated model file")
    vocab = tuple(lines[1:1 + v])
    phi = np.array([[float(x) for x in lines[1 + v + i].split()] for i in range(k)])
    if phi.shape != (k, v):
        raise DataError(f"{path}: phi shape {phi.shape} does not match header ({k}, {v})")
    return LdaModel(k=k, vocab=vocab, phi=phi, alpha=alpha, beta=beta, seed=seed, passes=passes)
