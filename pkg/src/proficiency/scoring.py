"""Per-post proficiency scores: average sigmoid word-user affinity,
optionally population-relative, optionally discounted for short posts."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .embeddings import UserEmbeddingTable, WordEmbeddingTable, sigmoid
from .errors import ConfigError, DataError, NoScorableTokens

SCORE_MODELS = ("u2v", "relu2v")
WORD_SCOPES = ("all_in_vocab_tokens", "query_restricted")
AUTO_REFERENCE = "auto"


@dataclass(frozen=True)
class ScoreConfig:
    """Scoring settings.

    word_scope picks which of a post's tokens are scored: every token with
    a word vector, or only those also present in query_words. With brevity
    on, posts shorter than the reference length r are discounted;
    reference_length "auto" resolves to the author's mean post length and
    therefore needs the post collection (see rank_user_posts).
    """

    score_model: str = "relu2v"
    word_scope: str = "all_in_vocab_tokens"
    brevity: str = "off"
    reference_length: float | str = AUTO_REFERENCE
    query_words: tuple[str, ...] = ()

    def __post_init__(self):
        if self.score_model not in SCORE_MODELS:
            raise ConfigError(f"score_model must be one of {SCORE_MODELS}")
        if self.word_scope not in WORD_SCOPES:
            raise ConfigError(f"word_scope must be one of {WORD_SCOPES}")
        if self.brevity not in ("off", "on"):
            raise ConfigError("brevity must be 'off' or 'on'")
        if self.word_scope == "query_restricted" and not self.query_words:
            raise ConfigError("query_restricted scoring requires query_words")
        if self.reference_length != AUTO_REFERENCE:
            if not isinstance(self.reference_length, (int, float)) or self.reference_length <= 0:
                raise ConfigError("reference_length must be a positive number or 'auto'")


@dataclass(frozen=True)
class ContentScore:
    user_id: str
    post_id: str
    ps: float
    ps_hat: float
    scored_token_count: int


def proficiency_score(features) -> float:
    """Arithmetic mean of the per-word feature values."""
    values = list(features)
    if not values:
        raise DataError("proficiency score of an empty feature list is undefined")
    return float(sum(values) / len(values))


def brevity_penalty(content_length: int, r: float) -> float:
    """exp(min(0, 1 - r/|c|)): in (0, 1], exactly 1 once |c| >= r."""
    if content_length < 1:
        raise DataError("content_length must be >= 1")
    if r <= 0:
        raise ConfigError("reference length r must be positive")
    return math.exp(min(0.0, 1.0 - r / content_length))


def relu2v_denominators(users: UserEmbeddingTable, words: WordEmbeddingTable, tokens) -> dict:
    """Per-word population sums of sigmoid(word . user) over all users.

    Results are cached on the user table, so repeated scoring against the
    same corpus population is O(post length) per post.
    """
    cache = getattr(users, "_relu2v_cache", None)
    if cache is None:
        cache = {}
        users._relu2v_cache = cache
    wanted = sorted({t for t in tokens if t in words and t not in cache})
    if wanted:
        user_matrix = np.stack([users.vectors[u] for u in users.user_ids()])
        word_matrix = np.stack([words.vectors[w] for w in wanted])
        sums = sigmoid(user_matrix @ word_matrix.T).sum(axis=0)
        for word, total in zip(wanted, sums):
            cache[word] = float(total)
    return cache


_compute_denominators = relu2v_denominators


def _scorable_tokens(post, words, config):
    tokens = [t for t in post.tokens if t in words]
    if config.word_scope == "query_restricted":
        allowed = set(config.query_words)
        tokens = [t for t in tokens if t in allowed]
    return tokens


def score_content(user_id, post, users: UserEmbeddingTable, words: WordEmbeddingTable,
                  relu2v_denominators: dict | None, config: ScoreConfig = ScoreConfig()) -> ContentScore:
    """Score one post for its author.

    Per scorable token the raw value is sigmoid(word . user); the
    population-relative model divides each by the population mean for that
    word, so values center at 1. The score is the mean over scorable
    tokens; with brevity on it is additionally multiplied by the brevity
    penalty of the post's full token count against reference length r.
    """
    if user_id not in users.vectors:
        raise DataError(f"user {user_id!r} has no trained embedding")
    tokens = _scorable_tokens(post, words, config)
    if not tokens:
        raise NoScorableTokens(f"post {post.post_id!r} has no scorable tokens")
    vector = users.vectors[user_id]
    word_matrix = np.stack([words.vectors[t] for t in tokens])
    values = sigmoid(word_matrix @ vector)
    eps = np.finfo(np.float64).tiny
    values = np.clip(values, eps, np.nextafter(1.0, 0.0))
    if config.score_model == "relu2v":
        denominators = relu2v_denominators
        if denominators is None:
            denominators = _compute_denominators(users, words, tokens)
        n_users = len(users.vectors)
        try:
            means = np.array([denominators[t] for t in tokens]) / n_users
        except KeyError as exc:
            raise DataError(f"missing population denominator for word {exc.args[0]!r}") from None
        values = values / means
    ps = proficiency_score(values)
    ps_hat = ps
    if config.brevity == "on":
        r = config.reference_length
        if r == AUTO_REFERENCE:
            raise ConfigError("reference_length 'auto' needs the author's post collection; "
                              "use rank_user_posts or pass a numeric reference_length")
        ps_hat = ps * brevity_penalty(len(post.tokens), float(r))
    return ContentScore(user_id, post.post_id, ps, ps_hat, len(tokens))


def rank_user_posts(user_id, posts, users: UserEmbeddingTable, words: WordEmbeddingTable,
                    relu2v_denominators: dict | None, config: ScoreConfig = ScoreConfig()):
    """Score and rank a user's posts.

    Returns (scores, skipped_post_ids): scores sorted by ps_hat descending
    with ties broken by ascending post_id; posts without scorable tokens
    are listed separately. reference_length "auto" resolves to the mean
    token count of the supplied posts.
    """
    posts = list(posts)
    if config.brevity == "on" and config.reference_length == AUTO_REFERENCE:
        lengths = [len(p.tokens) for p in posts]
        if not lengths or sum(lengths) == 0:
            raise DataError(f"cannot infer reference length: user {user_id!r} has no tokens")
        config = replace(config, reference_length=sum(lengths) / len(lengths))
    scores = []
    skipped = []
    for post in posts:
        try:
            scores.append(score_content(user_id, post, users, words, relu2v_denominators, config))
        except NoScorableTokens:
            skipped.append(post.post_id)
    scores.sort(key=lambda s: (-s.ps_hat, s.post_id))
    return scores, sorted(skipped)
