"""Linear SVM fitting and stratified cross-validated evaluation.

The solver minimizes L2-regularized hinge loss by dual coordinate descent
with a seeded sweep order, so runs are exactly reproducible. Multilabel
tasks train independent one-vs-rest separators.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .features import FeatureMatrix

TASK_MODES = ("binary", "multilabel")
CLASS_WEIGHTINGS = ("none", "balanced")


@dataclass(frozen=True)
class TaskSpec:
    mode: str
    positive_topic: str | None = None
    topics: tuple[str, ...] = ()
    folds: int = 5
    seed: int = 0
    svm_c: float = 1.0
    class_weighting: str = "none"

    def __post_init__(self):
        if self.mode not in TASK_MODES:
            raise ConfigError(f"task mode must be one of {TASK_MODES}, got {self.mode!r}")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        if self.mode == "binary" and not self.positive_topic:
            raise ConfigError("binary mode requires positive_topic")
        if self.mode == "multilabel" and not self.topics:
            raise ConfigError("multilabel mode requires a non-empty topic list")
        if self.svm_c <= 0:
            raise ConfigError("svm_c must be positive")
        if self.class_weighting not in CLASS_WEIGHTINGS:
            raise ConfigError(f"class_weighting must be one of {CLASS_WEIGHTINGS}")


@dataclass
class SvmModel:
    """One linear separator per class, plus the training-fold scaler."""

    mode: str
    classes: tuple[str, ...]
    weights: np.ndarray  # (n_classes, d)
    biases: np.ndarray  # (n_classes,)
    scaler_mean: np.ndarray
    scaler_std: np.ndarray

    def __post_init__(self):
        if np.any(self.scaler_std <= 0):
            raise DataError("scaler std entries must be positive")


def stratified_folds(labels: dict, k: int, seed: int) -> list[list[str]]:
    """Partition users into k folds preserving label-group proportions.

    Within each label group, members are shuffled (seeded) and dealt
    round-robin; the dealing position carries over between groups so fold
    sizes stay balanced. Groups smaller than k are pooled and dealt
    globally. Per-group fold counts differ by at most one.
    """
    if k > len(labels):
        raise DataError(f"cannot build {k} folds from {len(labels)} users")
    groups = {}
    for user_id, key in labels.items():
        groups.setdefault(str(key), []).append(user_id)
    rng = np.random.default_rng(seed)
    folds = [[] for _ in range(k)]
    position = 0
    small_pool = []
    for key in sorted(groups):
        members = sorted(groups[key])
        shuffled = [members[i] for i in rng.permutation(len(members))]
        if len(members) < k:
            small_pool.extend(shuffled)
            continue
        for member in shuffled:
            folds[position].append(member)
            position = (position + 1) % k
    for member in small_pool:
        folds[position].append(member)
        position = (position + 1) % k
    return [sorted(fold) for fold in folds]


def _solve_hinge_dual(x, y, c_upper, seed, tol=1e-10, max_passes=1000):
    """Dual coordinate descent for the L1-hinge linear SVM.

    x must already carry the augmented bias column. Deterministic: sweep
    order comes from a seeded permutation each pass.
    """
    n, d = x.shape
    alpha = np.zeros(n)
    w = np.zeros(d)
    q_diag = np.einsum("ij,ij->i", x, x)
    rng = np.random.default_rng(seed)
    for _ in range(max_passes):
        max_step = 0.0
        for i in rng.permutation(n):
            if q_diag[i] == 0.0:
                continue
            gradient = y[i] * (x[i] @ w) - 1.0
            updated = min(max(alpha[i] - gradient / q_diag[i], 0.0), c_upper[i])
            step = updated - alpha[i]
            if step != 0.0:
                alpha[i] = updated
                w += step * y[i] * x[i]
                max_step = max(max_step, abs(step))
        if max_step < tol:
            break
    return w


def _fit_scaler(x):
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std == 0.0, 1.0, std)
    return mean, std


def _class_bounds(y, c, weighting):
    if weighting == "none":
        return np.full(len(y), c)
    n = len(y)
    n_pos = int(np.sum(y > 0))
    n_neg = n - n_pos
    bounds = np.where(y > 0, c * n / (2.0 * n_pos), c * n / (2.0 * n_neg))
    return bounds


def fit_linear_svm(train_features, train_labels, spec: TaskSpec) -> SvmModel:
    """Fit separator(s) on standardized features.

    Binary: train_labels is a boolean per row (positive-topic membership).
    Multilabel: train_labels is a label set per row; one one-vs-rest
    separator is fitted per topic in spec.topics.
    """
    x = np.asarray(train_features, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise DataError("training features must be a non-empty 2-D array")
    mean, std = _fit_scaler(x)
    xs = (x - mean) / std
    x_aug = np.hstack([xs, np.ones((len(xs), 1))])

    if spec.mode == "binary":
        y = np.where(np.asarray(list(train_labels), dtype=bool), 1.0, -1.0)
        problems = [("positive", y)]
    else:
        label_sets = [frozenset(s) for s in train_labels]
        problems = []
        for topic in spec.topics:
            y = np.array([1.0 if topic in s else -1.0 for s in label_sets])
            problems.append((topic, y))

    weights = []
    biases = []
    for name, y in problems:
        if np.all(y > 0) or np.all(y < 0):
            side = "positive" if y[0] > 0 else "negative"
            raise DataError(f"class {name!r}: training data contains only {side} examples")
        bounds = _class_bounds(y, spec.svm_c, spec.class_weighting)
        w_aug = _solve_hinge_dual(x_aug, y, bounds, seed=spec.seed)
        weights.append(w_aug[:-1])
        biases.append(w_aug[-1])
    classes = tuple(name for name, _ in problems)
    return SvmModel(spec.mode, classes, np.array(weights), np.array(biases), mean, std)


def decision_values(model: SvmModel, features) -> np.ndarray:
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if x.shape[1] != model.weights.shape[1]:
        raise DataError(f"feature dimension {x.shape[1]} does not match model "
                        f"dimension {model.weights.shape[1]}")
    xs = (x - model.scaler_mean) / model.scaler_std
    return xs @ model.weights.T + model.biases


def predict(model: SvmModel, features):
    """Binary: True where the decision value is positive (ties negative).
    Multilabel: the possibly-empty set of topics with positive values."""
    values = decision_values(model, features)
    if model.mode == "binary":
        return values[:, 0] > 0.0
    return [frozenset(t for j, t in enumerate(model.classes) if row[j] > 0.0) for row in values]


def compute_metrics(predicted, actual, mode: str) -> dict:
    """Accuracy and F1 for either task mode.

    Binary: accuracy plus F1 of the positive class (0 when precision and
    recall are both 0). Multilabel: subset accuracy (exact label-set match)
    plus micro-F1 pooled over every (user, topic) indicator decision.
    """
    predicted = list(predicted)
    actual = list(actual)
    if len(predicted) != len(actual):
        raise DataError(f"prediction/label length mismatch: {len(predicted)} vs {len(actual)}")
    if not predicted:
        raise DataError("cannot compute metrics on empty input")
    if mode == "binary":
        p = np.asarray(predicted, dtype=bool)
        a = np.asarray(actual, dtype=bool)
        tp = int(np.sum(p & a))
        fp = int(np.sum(p & ~a))
        fn = int(np.sum(~p & a))
        accuracy = float(np.mean(p == a))
    elif mode == "multilabel":
        p_sets = [frozenset(s) for s in predicted]
        a_sets = [frozenset(s) for s in actual]
        tp = sum(len(ps & as_) for ps, as_ in zip(p_sets, a_sets))
        fp = sum(len(ps - as_) for ps, as_ in zip(p_sets, a_sets))
        fn = sum(len(as_ - ps) for ps, as_ in zip(p_sets, a_sets))
        accuracy = float(np.mean([ps == as_ for ps, as_ in zip(p_sets, a_sets)]))
    else:
        raise ConfigError(f"mode must be one of {TASK_MODES}, got {mode!r}")
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"accuracy": accuracy, "f1": f1, "precision": precision, "recall": recall}


@dataclass
class EvalReport:
    """Per-fold and aggregate metrics in mean/std form."""

    model_id: str
    task: TaskSpec
    folds: int
    per_fold: list[dict] = field(default_factory=list)
    accuracy_mean: float = 0.0
    accuracy_std: float = 0.0
    f1_mean: float = 0.0
    f1_std: float = 0.0
    seed: int = 0

    def summary(self) -> str:
        """One-line summary, accuracy in percent: "96.89 ± 0.26"."""
        task = self.task.positive_topic if self.task.mode == "binary" else "multilabel"
        return (f"{self.model_id} [{task}] acc {100 * self.accuracy_mean:.2f} "
                f"± {100 * self.accuracy_std:.2f} | "
                f"f1 {self.f1_mean:.2f} ± {self.f1_std:.2f}")

    def to_dict(self) -> dict:
        task = {"mode": self.task.mode, "folds": self.task.folds,
                "svm_c": self.task.svm_c, "class_weighting": self.task.class_weighting}
        if self.task.mode == "binary":
            task["positive_topic"] = self.task.positive_topic
        else:
            task["topics"] = list(self.task.topics)
        return {
            "model": self.model_id,
            "task": task,
            "folds": self.folds,
            "per_fold": [{"accuracy": f["accuracy"], "f1": f["f1"]} for f in self.per_fold],
            "accuracy_mean": self.accuracy_mean,
            "accuracy_std": self.accuracy_std,
            "f1_mean": self.f1_mean,
            "f1_std": self.f1_std,
            "seed": self.seed,
        }


def _task_labels(labels: dict, user_id, spec: TaskSpec):
    try:
        user_labels = labels[user_id]
    except KeyError:
        raise DataError(f"user {user_id!r} has no label entry") from None
    if spec.mode == "binary":
        return spec.positive_topic in user_labels
    return frozenset(t for t in user_labels if t in spec.topics)


def cross_validate(features: FeatureMatrix, labels: dict, spec: TaskSpec) -> EvalReport:
    """Stratified k-fold evaluation; scaler and separators are fitted on
    the training folds only. Population (ddof=0) std across folds."""
    user_ids = list(features.user_ids)
    y = {uid: _task_labels(labels, uid, spec) for uid in user_ids}
    if spec.mode == "binary":
        strata = {uid: ("pos" if y[uid] else "neg") for uid in user_ids}
    else:
        strata = {uid: tuple(sorted(y[uid])) for uid in user_ids}
    folds = stratified_folds(strata, spec.folds, spec.seed)

    per_fold = []
    for fold_idx, test_ids in enumerate(folds):
        test_set = set(test_ids)
        train_ids = [uid for uid in user_ids if uid not in test_set]
        x_train = np.stack([features.row(uid) for uid in train_ids])
        x_test = np.stack([features.row(uid) for uid in test_ids])
        y_train = [y[uid] for uid in train_ids]
        y_test = [y[uid] for uid in test_ids]
        try:
            model = fit_linear_svm(x_train, y_train, spec)
        except DataError as exc:
            raise DataError(f"fold {fold_idx}: {exc}") from None
        predictions = predict(model, x_test)
        per_fold.append(compute_metrics(predictions, y_test, spec.mode))

    accuracies = np.array([f["accuracy"] for f in per_fold])
    f1s = np.array([f["f1"] for f in per_fold])
    return EvalReport(
        model_id=features.model_id,
        task=spec,
        folds=spec.folds,
        per_fold=per_fold,
        accuracy_mean=float(accuracies.mean()),
        accuracy_std=float(accuracies.std()),
        f1_mean=float(f1s.mean()),
        f1_std=float(f1s.std()),
        seed=spec.seed,
    )


def balanced_subset(labels: dict, positive_topic: str, seed: int) -> list[str]:
    """All positive users plus an equal-size seeded sample of the rest."""
    positives = sorted(uid for uid, ls in labels.items() if positive_topic in ls)
    negatives = sorted(uid for uid, ls in labels.items() if positive_topic not in ls)
    if not positives:
        raise DataError(f"no user is labeled {positive_topic!r}")
    if len(negatives) < len(positives):
        raise DataError(f"cannot balance: {len(negatives)} non-{positive_topic!r} users "
                        f"for {len(positives)} positives")
    rng = np.random.default_rng(seed)
    sampled = [negatives[i] for i in rng.permutation(len(negatives))[: len(positives)]]
    return sorted(positives + sampled)
