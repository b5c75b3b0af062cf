"""Command-line driver: synth, ingest, featurize, train-embeddings,
train-lda, evaluate, score, pca.

Every command reads a JSON run config (--config); flags override config
fields. One global seed derives all module seeds, so identical configs
give byte-identical artifacts. Exit codes: 0 ok, 1 usage/config error,
2 data error, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .classify import TaskSpec, balanced_subset, cross_validate
from .corpus import (SynthConfig, filter_min_posts, generate_synthetic_corpus,
                     load_corpus, load_user_labels, save_corpus_files,
                     subset_corpus)
from .embeddings import (TrainConfig, _mix_seed, load_user_embeddings,
                         load_word_embeddings, pca_project, save_vectors,
                         train_user_embeddings)
from .errors import ConfigError, DataError
from .features import ModelArtifacts, MODEL_IDS, QuerySet, build_feature_matrix
from .lda import load_lda_model, save_lda_model, train_lda
from .preprocess import PreprocessConfig, preprocess_corpus
from .scoring import ScoreConfig, rank_user_posts, relu2v_denominators

log = logging.getLogger("proficiency")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3

DEFAULT_CONFIG = {
    "seed": 0,
    "workers": 1,
    "balanced": False,
    "plot": True,
    "model": "tf",
    "paths": {
        "posts": None,
        "users": None,
        "query": None,
        "word_embeddings": None,
        "user_embeddings": None,
        "lda_model": None,
        "out": "out",
    },
    "preprocess": {
        "mention_mode": "mask_all",
        "url_placeholder": "<url>",
        "number_placeholder": "<number>",
        "max_char_repeat": 2,
    },
    "corpus": {"min_posts": None},
    "train": {
        "negatives_per_word": 15,
        "initial_lr": 0.00005,
        "lr_decay_factor": 0.1,
        "max_epochs": 25,
        "patience": 5,
        "validation_fraction": 0.1,
        "negative_distribution_power": 0.75,
        "decay_on_plateau": False,
    },
    "lda": {"k": 50, "passes": 1, "alpha": None, "beta": 0.01, "max_users": None},
    "task": {
        "mode": "binary",
        "positive_topic": None,
        "topics": [],
        "folds": 5,
        "svm_c": 1.0,
        "class_weighting": "none",
    },
    "score": {
        "score_model": "relu2v",
        "word_scope": "all_in_vocab_tokens",
        "brevity": "off",
        "reference_length": "auto",
    },
    "synth": None,
}


def _deep_merge(base, override):
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _config_hash(config) -> str:
    import hashlib

    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def load_run_config(path=None, overrides=None) -> dict:
    config = dict(DEFAULT_CONFIG)
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            with open(p, encoding="utf-8") as fh:
                file_config = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: invalid JSON at line {exc.lineno}") from None
        if not isinstance(file_config, dict):
            raise ConfigError(f"{p}: config must be a JSON object")
        unknown = set(file_config) - set(DEFAULT_CONFIG)
        if unknown:
            raise ConfigError(f"{p}: unknown config field(s): {sorted(unknown)}")
        config = _deep_merge(config, file_config)
    if overrides:
        config = _deep_merge(config, overrides)
    return config


def _require_paths(config, names):
    """Validate every input path before any work starts."""
    resolved = {}
    for name in names:
        value = config["paths"].get(name)
        if not value:
            raise ConfigError(f"config field paths.{name} is required for this command")
        p = Path(value)
        if not p.is_file():
            raise DataError(f"input file not found: {p} (paths.{name})")
        resolved[name] = p
    return resolved


def _out_dir(config) -> Path:
    out = Path(config["paths"]["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _derived_seed(config, label, section=None) -> int:
    if section is not None:
        explicit = config[section].get("seed")
        if explicit is not None:
            return int(explicit)
    return _mix_seed(int(config["seed"]), label)


def _preprocess_config(config) -> PreprocessConfig:
    section = config["preprocess"]
    return PreprocessConfig(
        mention_mode=section["mention_mode"],
        url_placeholder=section["url_placeholder"],
        number_placeholder=section["number_placeholder"],
        max_char_repeat=int(section["max_char_repeat"]),
    )


def _load_prepared_corpus(config):
    paths = _require_paths(config, ["posts", "users"])
    corpus = load_corpus(paths["posts"], paths["users"])
    corpus = preprocess_corpus(corpus, _preprocess_config(config))
    min_posts = config["corpus"].get("min_posts")
    if min_posts is not None:
        corpus = filter_min_posts(corpus, int(min_posts))
    return corpus


def _provenance(config) -> list[str]:
    return [f"proficiency {__version__}",
            f"seed={config['seed']}",
            f"config_hash={_config_hash(config)}"]


def _train_config(config) -> TrainConfig:
    section = config["train"]
    return TrainConfig(
        negatives_per_word=int(section["negatives_per_word"]),
        initial_lr=float(section["initial_lr"]),
        lr_decay_factor=float(section["lr_decay_factor"]),
        max_epochs=int(section["max_epochs"]),
        patience=int(section["patience"]),
        validation_fraction=float(section["validation_fraction"]),
        negative_distribution_power=float(section["negative_distribution_power"]),
        seed=_derived_seed(config, "embeddings", section="train"),
        workers=int(config["workers"]),
        decay_on_plateau=bool(section["decay_on_plateau"]),
    )


def _task_spec(config, query=None) -> TaskSpec:
    section = config["task"]
    topics = tuple(section.get("topics") or ())
    if section["mode"] == "multilabel" and not topics and query is not None:
        topics = query.topic_names()
    return TaskSpec(
        mode=section["mode"],
        positive_topic=section.get("positive_topic"),
        topics=topics,
        folds=int(section["folds"]),
        seed=_derived_seed(config, "task", section="task"),
        svm_c=float(section["svm_c"]),
        class_weighting=section["class_weighting"],
    )


def _score_config(config, query=None) -> ScoreConfig:
    section = config["score"]
    reference = section["reference_length"]
    if reference != "auto":
        reference = float(reference)
    query_words = tuple(query.flattened) if query is not None else ()
    return ScoreConfig(
        score_model=section["score_model"],
        word_scope=section["word_scope"],
        brevity=section["brevity"],
        reference_length=reference,
        query_words=query_words,
    )


def _model_artifacts(config, model_id) -> ModelArtifacts:
    artifacts = ModelArtifacts()
    if model_id in ("u2v", "relu2v"):
        paths = _require_paths(config, ["word_embeddings", "user_embeddings"])
        artifacts.word_table = load_word_embeddings(paths["word_embeddings"])
        artifacts.user_table = load_user_embeddings(paths["user_embeddings"])
    elif model_id == "lda":
        paths = _require_paths(config, ["lda_model"])
        artifacts.lda_model = load_lda_model(paths["lda_model"])
    return artifacts


def _write_meta(path, config, extra=None):
    meta = {"tool": "proficiency", "version": __version__,
            "seed": config["seed"], "config_hash": _config_hash(config)}
    if extra:
        meta.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


# --- commands ---------------------------------------------------------


def cmd_synth(config, args) -> int:
    section = config.get("synth")
    if not section:
        raise ConfigError("config field 'synth' is required for the synth command")
    topics = section.get("topics")
    if not isinstance(topics, dict) or not topics:
        raise ConfigError("synth.topics must map topic names to word arrays")
    synth = SynthConfig(
        n_users=int(section["n_users"]),
        topics=tuple((name, tuple(words)) for name, words in topics.items()),
        background_vocab=tuple(section["background_vocab"]),
        topic_word_rate=float(section["topic_word_rate"]),
        posts_per_user=tuple(section["posts_per_user"]),
        post_length=tuple(section["post_length"]),
        seed=_derived_seed(config, "synth", section="synth"),
    )
    corpus = generate_synthetic_corpus(synth)
    out = _out_dir(config)
    save_corpus_files(corpus, out / "posts.jsonl", out / "users.jsonl")
    manifest = {
        "n_users": corpus.n_users(),
        "n_posts": sum(r.post_count for r in corpus.users.values()),
        "users": {uid: {"labels": sorted(corpus.users[uid].labels),
                        "posts": corpus.users[uid].post_count}
                  for uid in corpus.user_ids()},
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_meta(out / "synth.meta.json", config)
    print(f"wrote {manifest['n_posts']} posts for {manifest['n_users']} users to {out}")
    return EXIT_OK


def cmd_ingest(config, args) -> int:
    corpus = _load_prepared_corpus(config)
    out = _out_dir(config)
    tokens_path = out / "corpus_tokens.jsonl"
    with open(tokens_path, "w", encoding="utf-8") as fh:
        for post in corpus.iter_posts():
            fh.write(json.dumps({"user_id": post.user_id, "post_id": post.post_id,
                                 "tokens": list(post.tokens)}) + "\n")
    label_counts = {}
    for rec in corpus.users.values():
        for label in rec.labels:
            label_counts[label] = label_counts.get(label, 0) + 1
    summary = {
        "n_users": corpus.n_users(),
        "n_posts": sum(r.post_count for r in corpus.users.values()),
        "n_tokens": sum(r.token_count for r in corpus.users.values()),
        "label_counts": dict(sorted(label_counts.items())),
    }
    with open(out / "corpus_summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_meta(out / "ingest.meta.json", config)
    print(f"{summary['n_users']} users, {summary['n_posts']} posts, {summary['n_tokens']} tokens")
    return EXIT_OK


def _build_features(config, corpus, model_id):
    query = None
    if model_id != "lda":
        paths = _require_paths(config, ["query"])
        query = QuerySet.from_file(paths["query"])
    artifacts = _model_artifacts(config, model_id)
    return build_feature_matrix(model_id, corpus, query, artifacts), query


def cmd_featurize(config, args) -> int:
    model_id = config["model"]
    corpus = _load_prepared_corpus(config)
    matrix, _ = _build_features(config, corpus, model_id)
    out = _out_dir(config)
    path = out / f"features_{model_id}.csv"
    matrix.write_csv(path, header_comments=_provenance(config))
    print(f"wrote {matrix.shape[0]} x {matrix.shape[1]} feature matrix to {path}")
    return EXIT_OK


def cmd_train_embeddings(config, args) -> int:
    corpus = _load_prepared_corpus(config)
    words = load_word_embeddings(_require_paths(config, ["word_embeddings"])["word_embeddings"])
    table = train_user_embeddings(corpus, words, _train_config(config))
    out = _out_dir(config)
    vectors_path = out / "user_embeddings.txt"
    save_vectors(vectors_path, table.vectors, table.dim)
    table.training_log.write_jsonl(out / "training_log.jsonl")
    _write_meta(out / "user_embeddings.meta.json", config, extra={
        "epochs_run": table.training_log.epochs_run,
        "best_epoch": table.training_log.best_epoch,
        "flagged_users": list(table.training_log.flagged_users),
    })
    print(f"trained {len(table)} user vectors (dim {table.dim}), "
          f"best epoch {table.training_log.best_epoch}; wrote {vectors_path}")
    return EXIT_OK


def cmd_train_lda(config, args) -> int:
    corpus = _load_prepared_corpus(config)
    section = config["lda"]
    model = train_lda(
        corpus,
        k=int(section["k"]),
        passes=int(section["passes"]),
        alpha=None if section["alpha"] is None else float(section["alpha"]),
        beta=float(section["beta"]),
        seed=_derived_seed(config, "lda", section="lda"),
        max_users=None if section["max_users"] is None else int(section["max_users"]),
    )
    out = _out_dir(config)
    path = out / "lda_model.txt"
    save_lda_model(path, model)
    _write_meta(out / "lda_model.meta.json", config, extra={"k": model.k, "vocab_size": len(model.vocab)})
    print(f"trained {model.k}-topic model over {len(model.vocab)} words; wrote {path}")
    return EXIT_OK


def cmd_evaluate(config, args) -> int:
    model_id = config["model"]
    corpus = _load_prepared_corpus(config)
    query = None
    if model_id != "lda":
        query = QuerySet.from_file(_require_paths(config, ["query"])["query"])
    spec = _task_spec(config, query)
    if config["balanced"]:
        if spec.mode != "binary":
            raise ConfigError("--balanced requires a binary task")
        labels = {uid: corpus.users[uid].labels for uid in corpus.user_ids()}
        keep = balanced_subset(labels, spec.positive_topic, _mix_seed(int(config["seed"]), "balanced"))
        corpus = subset_corpus(corpus, keep)
    artifacts = _model_artifacts(config, model_id)
    matrix = build_feature_matrix(model_id, corpus, query, artifacts)
    unknown = [uid for uid in matrix.user_ids if uid not in corpus.users]
    if unknown:
        raise DataError(f"embedding table contains users absent from the corpus "
                        f"(e.g. {unknown[:3]}); retrain on this corpus")
    if len(matrix.user_ids) < corpus.n_users():
        log.warning("%d corpus user(s) missing from the feature matrix are excluded "
                    "from evaluation", corpus.n_users() - len(matrix.user_ids))
    labels = {uid: corpus.users[uid].labels for uid in matrix.user_ids}
    report = cross_validate(matrix, labels, spec)

    out = _out_dir(config)
    task_slug = spec.positive_topic if spec.mode == "binary" else "multilabel"
    base = f"report_{model_id}_{task_slug}"
    document = report.to_dict()
    document["balanced"] = bool(config["balanced"])
    document["version"] = __version__
    document["config_hash"] = _config_hash(config)
    document["config"] = config
    report_path = out / f"{base}.json"
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(document, fh, indent=2)
        fh.write("\n")
    if config["plot"]:
        from .plots import save_eval_figure

        save_eval_figure(report, out / f"{base}.png")
    print(report.summary())
    print(f"wrote {report_path}")
    return EXIT_OK


def cmd_score(config, args) -> int:
    corpus = _load_prepared_corpus(config)
    paths = _require_paths(config, ["word_embeddings", "user_embeddings"])
    words = load_word_embeddings(paths["word_embeddings"])
    users = load_user_embeddings(paths["user_embeddings"])
    query = None
    if config["score"]["word_scope"] == "query_restricted" or config["paths"].get("query"):
        query = QuerySet.from_file(_require_paths(config, ["query"])["query"])
    score_config = _score_config(config, query)

    if args.user:
        if args.user not in corpus.users:
            raise DataError(f"user {args.user!r} not in corpus")
        target_users = [args.user]
    else:
        target_users = [u for u in corpus.user_ids() if u in users.vectors]
        if not target_users:
            raise DataError("no corpus user has a trained embedding")

    all_tokens = (t for uid in target_users for t in corpus.user_tokens(uid))
    denominators = relu2v_denominators(users, words, all_tokens) \
        if score_config.score_model == "relu2v" else None

    out = _out_dir(config)
    scores_path = out / "scores.csv"
    skipped_path = out / "scores_skipped.csv"
    all_scores = []
    n_skipped = 0
    post_text = {p.post_id: p.raw_text for uid in target_users for p in corpus.posts[uid]}
    with open(scores_path, "w", encoding="utf-8", newline="") as fh, \
            open(skipped_path, "w", encoding="utf-8", newline="") as skipped_fh:
        for comment in _provenance(config):
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        header = ["user_id", "post_id", "ps", "ps_hat", "scored_token_count"]
        if args.with_text:
            header.append("text")
        writer.writerow(header)
        skipped_writer = csv.writer(skipped_fh)
        skipped_writer.writerow(["user_id", "post_id"])
        for uid in target_users:
            scores, skipped = rank_user_posts(uid, corpus.posts[uid], users, words,
                                              denominators, score_config)
            for s in scores:
                row = [s.user_id, s.post_id, repr(s.ps), repr(s.ps_hat), s.scored_token_count]
                if args.with_text:
                    row.append(post_text[s.post_id])
                writer.writerow(row)
            for post_id in skipped:
                skipped_writer.writerow([uid, post_id])
            all_scores.extend(scores)
            n_skipped += len(skipped)
    if config["plot"] and all_scores:
        from .plots import save_score_figure

        save_score_figure(all_scores, out / "scores.png")
    print(f"scored {len(all_scores)} posts ({n_skipped} without scorable tokens); wrote {scores_path}")
    return EXIT_OK


def cmd_pca(config, args) -> int:
    users_table = load_user_embeddings(_require_paths(config, ["user_embeddings"])["user_embeddings"])
    labels = {}
    if config["paths"].get("users"):
        users_path = _require_paths(config, ["users"])["users"]
        labels = {uid: "|".join(sorted(ls))
                  for uid, ls in load_user_labels(users_path).items()}
    rows = pca_project(users_table, k=args.components, labels=labels)
    out = _out_dir(config)
    path = out / "pca.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for comment in _provenance(config):
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["user_id", *(f"pc{i + 1}" for i in range(args.components)), "label"])
        for user_id, coords, label in rows:
            writer.writerow([user_id, *(repr(float(c)) for c in coords), label])
    if config["plot"]:
        from .plots import save_pca_figure

        save_pca_figure(rows, out / "pca.png")
    print(f"wrote {len(rows)} projected users to {path}")
    return EXIT_OK


# --- argument parsing -------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="proficiency",
                     description="Model user proficiency from post histories.")
    parser.add_argument("--version", action="version", version=f"proficiency {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run config; flags override its fields")
        p.add_argument("--seed", type=int, help="global seed; module seeds derive from it")
        p.add_argument("--out", help="output directory")
        p.add_argument("--posts", help="posts JSONL path")
        p.add_argument("--users", help="users JSONL path")
        p.add_argument("--min-posts", type=int, dest="min_posts",
                       help="keep only users with at least this many posts")
        p.add_argument("--workers", type=int, help="worker threads for training")
        p.add_argument("--no-plot", action="store_true", help="skip figure rendering")

    p_synth = sub.add_parser("synth", help="generate a planted-topic synthetic corpus")
    common(p_synth)

    p_ingest = sub.add_parser("ingest", help="load, validate, and tokenize a corpus")
    common(p_ingest)

    p_feat = sub.add_parser("featurize", help="write a per-user feature matrix")
    common(p_feat)
    p_feat.add_argument("--model", choices=MODEL_IDS)
    p_feat.add_argument("--query", help="query JSON file (topic -> word array)")
    p_feat.add_argument("--word-embeddings", dest="word_embeddings")
    p_feat.add_argument("--user-embeddings", dest="user_embeddings")
    p_feat.add_argument("--lda-model", dest="lda_model")

    p_train = sub.add_parser("train-embeddings", help="train user embeddings by negative sampling")
    common(p_train)
    p_train.add_argument("--word-embeddings", dest="word_embeddings")

    p_lda = sub.add_parser("train-lda", help="train the topic-model baseline")
    common(p_lda)
    p_lda.add_argument("--topics", type=int, help="number of LDA topics")
    p_lda.add_argument("--passes", type=int)

    p_eval = sub.add_parser("evaluate", help="cross-validated SVM evaluation of one model")
    common(p_eval)
    p_eval.add_argument("--model", choices=MODEL_IDS)
    p_eval.add_argument("--task", help="binary:<topic> or multilabel")
    p_eval.add_argument("--balanced", action="store_true",
                        help="downsample to all positives plus an equal number of others")
    p_eval.add_argument("--query", help="query JSON file")
    p_eval.add_argument("--word-embeddings", dest="word_embeddings")
    p_eval.add_argument("--user-embeddings", dest="user_embeddings")
    p_eval.add_argument("--lda-model", dest="lda_model")

    p_score = sub.add_parser("score", help="rank posts by per-post proficiency score")
    common(p_score)
    p_score.add_argument("--user", help="score only this user's posts")
    p_score.add_argument("--score-model", choices=("u2v", "relu2v"), dest="score_model")
    p_score.add_argument("--brevity", choices=("off", "on"))
    p_score.add_argument("--with-text", action="store_true", dest="with_text",
                         help="include original text in the score table")
    p_score.add_argument("--query", help="query JSON file")
    p_score.add_argument("--word-embeddings", dest="word_embeddings")
    p_score.add_argument("--user-embeddings", dest="user_embeddings")

    p_pca = sub.add_parser("pca", help="project user embeddings to principal components")
    common(p_pca)
    p_pca.add_argument("--components", type=int, default=2)
    p_pca.add_argument("--user-embeddings", dest="user_embeddings")

    return parser


def _overrides_from_args(args) -> dict:
    overrides = {"paths": {}, "corpus": {}, "task": {}, "score": {}, "lda": {}}
    path_flags = ("posts", "users", "query", "word_embeddings", "user_embeddings", "lda_model")
    for name in path_flags:
        value = getattr(args, name, None)
        if value:
            overrides["paths"][name] = value
    if getattr(args, "out", None):
        overrides["paths"]["out"] = args.out
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        overrides["workers"] = args.workers
    if getattr(args, "min_posts", None) is not None:
        overrides["corpus"]["min_posts"] = args.min_posts
    if getattr(args, "model", None):
        overrides["model"] = args.model
    if getattr(args, "balanced", False):
        overrides["balanced"] = True
    if getattr(args, "no_plot", False):
        overrides["plot"] = False
    if getattr(args, "topics", None) is not None:
        overrides["lda"]["k"] = args.topics
    if getattr(args, "passes", None) is not None:
        overrides["lda"]["passes"] = args.passes
    if getattr(args, "score_model", None):
        overrides["score"]["score_model"] = args.score_model
    if getattr(args, "brevity", None):
        overrides["score"]["brevity"] = args.brevity
    task = getattr(args, "task", None)
    if task:
        if task == "multilabel":
            overrides["task"]["mode"] = "multilabel"
        elif task.startswith("binary:") and len(task) > len("binary:"):
            overrides["task"]["mode"] = "binary"
            overrides["task"]["positive_topic"] = task.split(":", 1)[1]
        else:
            raise ConfigError(f"--task must be 'binary:<topic>' or 'multilabel', got {task!r}")
    return {k: v for k, v in overrides.items() if v or not isinstance(v, dict)}


_COMMANDS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "featurize": cmd_featurize,
    "train-embeddings": cmd_train_embeddings,
    "train-lda": cmd_train_lda,
    "evaluate": cmd_evaluate,
    "score": cmd_score,
    "pca": cmd_pca,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        config = load_run_config(args.config, _overrides_from_args(args))
        return _COMMANDS[args.command](config, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover - internal invariant violations
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
