"""User embeddings trained against frozen word vectors.

Each user gets a dense vector trained by negative-sampling SGD so that the
user's own words score high under sigmoid(word . user). Word vectors are
never updated. Features derived here: the raw sigmoid scores per query
word, and their population-relative variant centered around 1.
"""

from __future__ import annotations

import hashlib
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .features import FeatureMatrix, QuerySet

log = logging.getLogger(__name__)


def sigmoid(x):
    x = np.clip(x, -500.0, 500.0)
    return 1.0 / (1.0 + np.exp(-x))


def log_sigmoid(x):
    return -np.logaddexp(0.0, -np.asarray(x, dtype=np.float64))


def _mix_seed(*parts) -> int:
    """Stable 64-bit seed derived from the given parts (hash-salt free)."""
    digest = hashlib.blake2b("\x1f".join(str(p) for p in parts).encode(), digest_size=8)
    return int.from_bytes(digest.digest(), "little")


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for the user-embedding trainer.

    The learning rate is multiplied by lr_decay_factor every time the
    held-out score improves; set decay_on_plateau=True to decay on
    stagnation instead. initial_lr=0 is allowed and leaves the seeded
    initialization untouched (useful as a control).
    """

    negatives_per_word: int = 15
    initial_lr: float = 0.00005
    lr_decay_factor: float = 0.1
    max_epochs: int = 25
    patience: int = 5
    validation_fraction: float = 0.1
    negative_distribution_power: float = 0.75
    seed: int = 0
    workers: int = 1
    decay_on_plateau: bool = False

    def __post_init__(self):
        if self.initial_lr < 0:
            raise ConfigError("initial_lr must be >= 0")
        if not 0 < self.lr_decay_factor <= 1:
            raise ConfigError("lr_decay_factor must lie in (0, 1]")
        if self.max_epochs < 1 or self.patience < 1:
            raise ConfigError("max_epochs and patience must be >= 1")
        if self.patience > self.max_epochs:
            raise ConfigError("patience must not exceed max_epochs")
        if not 0 < self.validation_fraction < 1:
            raise ConfigError("validation_fraction must lie in (0, 1)")
        if self.negatives_per_word < 1:
            raise ConfigError("negatives_per_word must be >= 1")
        if self.negative_distribution_power < 0:
            raise ConfigError("negative_distribution_power must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


@dataclass(frozen=True)
class LogEntry:
    epoch: int
    validation_score: float
    learning_rate: float


@dataclass
class TrainingLog:
    seed: int
    entries: list[LogEntry] = field(default_factory=list)
    epochs_run: int = 0
    best_epoch: int = 0
    final_learning_rate: float = 0.0
    flagged_users: tuple[str, ...] = ()
    validated_on_training_posts: bool = False

    def write_jsonl(self, path):
        import json

        with open(path, "w", encoding="utf-8") as fh:
            for e in self.entries:
                fh.write(json.dumps({"epoch": e.epoch,
                                     "validation_score": e.validation_score,
                                     "learning_rate": e.learning_rate}) + "\n")


class WordEmbeddingTable:
    """Frozen pretrained word vectors; vectors are read-only arrays."""

    def __init__(self, dim, vectors):
        self.dim = int(dim)
        self.vectors = {}
        for word, vec in vectors.items():
            arr = np.asarray(vec, dtype=np.float64)
            if arr.shape != (self.dim,):
                raise DataError(f"vector for {word!r} has shape {arr.shape}, expected ({self.dim},)")
            if not np.all(np.isfinite(arr)):
                raise DataError(f"vector for {word!r} contains NaN/inf")
            arr.flags.writeable = False
            self.vectors[word] = arr
        self.frozen = True

    def __contains__(self, word):
        return word in self.vectors

    def __len__(self):
        return len(self.vectors)


class UserEmbeddingTable:
    """Trained per-user vectors plus the training log that produced them."""

    def __init__(self, dim, vectors, training_log: TrainingLog | None = None):
        self.dim = int(dim)
        self.vectors = {uid: np.asarray(vec, dtype=np.float64) for uid, vec in vectors.items()}
        for uid, vec in self.vectors.items():
            if vec.shape != (self.dim,):
                raise DataError(f"user vector for {uid!r} has shape {vec.shape}, expected ({self.dim},)")
        self.training_log = training_log

    def user_ids(self):
        return sorted(self.vectors)

    def __len__(self):
        return len(self.vectors)


def load_word_embeddings(path) -> WordEmbeddingTable:
    """Read the text interchange format: "<count> <dim>" header, then one
    "<key> <v1> ... <v_dim>" line per word. Keys are lowercased."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].strip():
        raise DataError(f"{path}: empty embedding file")
    header = lines[0].split()
    if len(header) != 2 or not all(p.lstrip("-").isdigit() for p in header):
        raise DataError(f"{path}:1: header must be '<count> <dim>'")
    count, dim = int(header[0]), int(header[1])
    if count < 1 or dim < 1:
        raise DataError(f"{path}:1: count and dim must be positive")
    vectors = {}
    body = [(i, ln) for i, ln in enumerate(lines[1:], start=2) if ln.strip()]
    if len(body) != count:
        raise DataError(f"{path}: header promises {count} vectors but file has {len(body)}")
    for lineno, line in body:
        parts = line.split()
        if len(parts) != dim + 1:
            raise DataError(f"{path}:{lineno}: expected {dim} values, found {len(parts) - 1}")
        key = parts[0].lower()
        try:
            values = [float(p) for p in parts[1:]]
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric vector component") from None
        if key in vectors:
            log.warning("duplicate word %r after lowercasing; keeping first occurrence", key)
            continue
        vectors[key] = values
    return WordEmbeddingTable(dim, vectors)


def save_vectors(path, vectors: dict, dim: int):
    """Write vectors in the interchange format at full float precision."""
    keys = sorted(vectors)
    for key in keys:
        if any(c.isspace() for c in key):
            raise DataError(f"key {key!r} contains whitespace; not representable in the vector format")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(keys)} {dim}\n")
        for key in keys:
            fh.write(key + " " + " ".join(repr(float(v)) for v in vectors[key]) + "\n")


def load_user_embeddings(path) -> UserEmbeddingTable:
    table = load_word_embeddings(path)
    return UserEmbeddingTable(table.dim, table.vectors)


class _UserTask:
    """Per-user training state: token streams, frozen validation draws."""

    __slots__ = ("user_id", "train_ids", "val_posts", "val_negs", "vector")

    def __init__(self, user_id, train_ids, val_posts, val_negs, vector):
        self.user_id = user_id
        self.train_ids = train_ids
        self.val_posts = val_posts
        self.val_negs = val_negs
        self.vector = vector


def _sgd_pass(vector, word_matrix, token_ids, neg_cdf, negatives, lr, rng):
    """One epoch of per-token ascent on the negative-sampling objective."""
    m = len(token_ids)
    if m == 0:
        return
    draws = np.searchsorted(neg_cdf, rng.random(m * negatives), side="right")
    np.minimum(draws, len(neg_cdf) - 1, out=draws)
    negs = draws.reshape(m, negatives)
    for t in range(m):
        w = word_matrix[token_ids[t]]
        neg_rows = word_matrix[negs[t]]
        grad = (1.0 - sigmoid(w @ vector)) * w - sigmoid(neg_rows @ vector) @ neg_rows
        vector += lr * grad


def _val_post_score(vector, word_matrix, token_ids, negs):
    pos = log_sigmoid(word_matrix[token_ids] @ vector)
    neg = log_sigmoid(-(word_matrix[negs.reshape(-1)] @ vector)).reshape(negs.shape).sum(axis=1)
    return float(np.mean(pos + neg))


def train_user_embeddings(corpus, words: WordEmbeddingTable, config: TrainConfig = TrainConfig()) -> UserEmbeddingTable:
    """Train one vector per corpus user against the frozen word table.

    For every in-vocabulary token of a user's training posts the user
    vector ascends the gradient of
    log sigmoid(w . u) + sum_j log sigmoid(-w_j . u), with the w_j drawn
    from the corpus unigram distribution raised to
    negative_distribution_power. A validation fraction of each user's
    posts is held out (seeded split, fixed across epochs); after every
    epoch the same objective is evaluated on the held-out posts with
    negatives frozen at setup, and the vectors of the best-scoring epoch
    are returned. Users without any in-vocabulary token keep their seeded
    initialization and are flagged in the training log.

    With workers=1 the result is bit-reproducible for a given seed; the
    per-user RNG streams make larger worker counts reproducible too, since
    user vectors never interact during training.
    """
    corpus.require_preprocessed()
    dim = words.dim
    vocab = sorted({t for t in (tok for uid in corpus.user_ids() for tok in corpus.user_tokens(uid))
                    if t in words})
    if not vocab:
        raise DataError("no user has any in-vocabulary token; nothing to train")
    word_index = {w: i for i, w in enumerate(vocab)}
    word_matrix = np.stack([words.vectors[w] for w in vocab])

    counts = Counter(t for uid in corpus.user_ids() for t in corpus.user_tokens(uid) if t in word_index)
    weights = np.array([counts[w] for w in vocab], dtype=np.float64) ** config.negative_distribution_power
    neg_cdf = np.cumsum(weights / weights.sum())

    tasks = []
    flagged = []
    for user_id in corpus.user_ids():
        posts = corpus.posts[user_id]
        ids_per_post = [np.array([word_index[t] for t in p.tokens if t in word_index], dtype=np.intp)
                        for p in posts]
        total = sum(len(ids) for ids in ids_per_post)
        init_rng = np.random.default_rng(_mix_seed(config.seed, "init", user_id))
        vector = (init_rng.random(dim) - 0.5) / dim
        if total == 0:
            flagged.append(user_id)
            tasks.append(_UserTask(user_id, np.empty(0, dtype=np.intp), [], [], vector))
            continue
        split_rng = np.random.default_rng(_mix_seed(config.seed, "split", user_id))
        order = split_rng.permutation(len(posts))
        n_val = int(len(posts) * config.validation_fraction)
        val_set = set(order[:n_val].tolist())
        train_ids = np.concatenate(
            [ids_per_post[i] for i in range(len(posts)) if i not in val_set] or [np.empty(0, dtype=np.intp)]
        )
        val_posts = [ids_per_post[i] for i in sorted(val_set) if len(ids_per_post[i])]
        neg_rng = np.random.default_rng(_mix_seed(config.seed, "valneg", user_id))
        val_negs = []
        for ids in val_posts:
            draws = np.searchsorted(neg_cdf, neg_rng.random(len(ids) * config.negatives_per_word), side="right")
            np.minimum(draws, len(neg_cdf) - 1, out=draws)
            val_negs.append(draws.reshape(len(ids), config.negatives_per_word))
        tasks.append(_UserTask(user_id, train_ids, val_posts, val_negs, vector))

    if len(flagged) == len(tasks):
        raise DataError("no user has any in-vocabulary token; nothing to train")
    if flagged:
        log.warning("%d user(s) have no in-vocabulary tokens; keeping their initialization", len(flagged))

    # Fallback when the split leaves nothing held out anywhere: score the
    # training streams instead, so early stopping still has a signal.
    validate_on_train = all(not t.val_posts for t in tasks)
    if validate_on_train:
        for task in tasks:
            if len(task.train_ids) == 0:
                continue
            task.val_posts = [task.train_ids]
            neg_rng = np.random.default_rng(_mix_seed(config.seed, "valneg", task.user_id))
            draws = np.searchsorted(neg_cdf, neg_rng.random(len(task.train_ids) * config.negatives_per_word),
                                    side="right")
            np.minimum(draws, len(neg_cdf) - 1, out=draws)
            task.val_negs = [draws.reshape(len(task.train_ids), config.negatives_per_word)]

    def validation_score():
        scores = []
        for task in tasks:
            for ids, negs in zip(task.val_posts, task.val_negs):
                scores.append(_val_post_score(task.vector, word_matrix, ids, negs))
        return float(np.mean(scores)) if scores else float("-inf")

    def run_epoch(epoch, lr):
        def one(task):
            if len(task.train_ids) == 0:
                return
            rng = np.random.default_rng(_mix_seed(config.seed, "epoch", epoch, task.user_id))
            _sgd_pass(task.vector, word_matrix, task.train_ids, neg_cdf,
                      config.negatives_per_word, lr, rng)

        if config.workers == 1:
            for task in tasks:
                one(task)
        else:
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                list(pool.map(one, tasks))

    lr = config.initial_lr
    best_score = validation_score()
    best_vectors = {t.user_id: t.vector.copy() for t in tasks}
    best_epoch = 0
    tlog = TrainingLog(seed=config.seed, flagged_users=tuple(flagged),
                       validated_on_training_posts=validate_on_train)
    tlog.entries.append(LogEntry(0, best_score, lr))
    stale_epochs = 0
    for epoch in range(1, config.max_epochs + 1):
        run_epoch(epoch, lr)
        score = validation_score()
        improved = score > best_score
        if improved:
            best_score = score
            best_epoch = epoch
            best_vectors = {t.user_id: t.vector.copy() for t in tasks}
            stale_epochs = 0
            if not config.decay_on_plateau:
                lr *= config.lr_decay_factor
        else:
            stale_epochs += 1
            if config.decay_on_plateau:
                lr *= config.lr_decay_factor
        tlog.entries.append(LogEntry(epoch, score, lr))
        tlog.epochs_run = epoch
        if stale_epochs >= config.patience:
            break
    tlog.best_epoch = best_epoch
    tlog.final_learning_rate = lr
    return UserEmbeddingTable(dim, best_vectors, tlog)


def u2v_features(users: UserEmbeddingTable, words: WordEmbeddingTable, q: QuerySet) -> FeatureMatrix:
    """sigmoid(word . user) per (user, query word).

    Query words without a word vector are dropped from the columns with a
    warning; values are clipped into the open interval (0, 1) so downstream
    ratios stay finite.
    """
    effective = [w for w in q.flattened if w in words]
    dropped = [w for w in q.flattened if w not in words]
    if dropped:
        log.warning("dropping %d query word(s) without a word vector: %s", len(dropped), dropped)
    if not effective:
        raise DataError("no query word has a word vector; feature matrix would be empty")
    user_ids = users.user_ids()
    user_matrix = np.stack([users.vectors[u] for u in user_ids])
    word_matrix = np.stack([words.vectors[w] for w in effective])
    scores = sigmoid(user_matrix @ word_matrix.T)
    eps = np.finfo(np.float64).tiny
    scores = np.clip(scores, eps, np.nextafter(1.0, 0.0))
    return FeatureMatrix("u2v", effective, user_ids, scores, query=q)


def rel_u2v_features(u2v: FeatureMatrix) -> FeatureMatrix:
    """Population-relative variant: each value is scaled by |U| over the
    column total, centering every column's mean at exactly 1."""
    if u2v.model_id != "u2v":
        raise DataError(f"rel_u2v_features expects a 'u2v' matrix, got {u2v.model_id!r}")
    n = len(u2v.user_ids)
    if n < 2:
        raise DataError("population-relative features need at least 2 users")
    column_sums = u2v.values.sum(axis=0)
    values = u2v.values * (n / column_sums)
    return FeatureMatrix("relu2v", u2v.column_names, u2v.user_ids, values, query=u2v.query)


def pca_project(users: UserEmbeddingTable, k: int = 2, labels: dict | None = None):
    """Project mean-centered user vectors onto the top-k principal axes.

    Sign convention: each component's largest-magnitude loading is made
    positive, so output coordinates are reproducible across runs. Returns
    a list of (user_id, coordinates, label) rows sorted by user id.
    """
    if k < 1:
        raise ConfigError("k must be >= 1")
    if k > users.dim:
        raise DataError(f"k={k} exceeds embedding dimension {users.dim}")
    user_ids = users.user_ids()
    if len(user_ids) < k + 1:
        raise DataError(f"PCA with k={k} needs at least {k + 1} users, have {len(user_ids)}")
    matrix = np.stack([users.vectors[u] for u in user_ids])
    centered = matrix - matrix.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    components = vt[:k].copy()
    for i in range(k):
        j = int(np.argmax(np.abs(components[i])))
        if components[i, j] < 0:
            components[i] = -components[i]
    coords = centered @ components.T
    labels = labels or {}
    return [(uid, coords[i].copy(), str(labels.get(uid, ""))) for i, uid in enumerate(user_ids)]
