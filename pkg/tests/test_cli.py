import json
from pathlib import Path

import numpy as np
import pytest

from proficiency import load_corpus, save_vectors
from proficiency.cli import main

TOPIC_A = tuple(f"ta{chr(97 + i)}" for i in range(8))
TOPIC_B = tuple(f"tb{chr(97 + i)}" for i in range(8))
BACKGROUND = tuple(f"zz{chr(97 + i)}" for i in range(20))


def base_config(root: Path) -> dict:
    return {
        "seed": 7,
        "paths": {
            "posts": str(root / "data" / "posts.jsonl"),
            "users": str(root / "data" / "users.jsonl"),
            "query": str(root / "query.json"),
            "word_embeddings": str(root / "words.txt"),
            "user_embeddings": str(root / "embed" / "user_embeddings.txt"),
            "lda_model": str(root / "lda" / "lda_model.txt"),
            "out": str(root / "out"),
        },
        "train": {"initial_lr": 0.005, "max_epochs": 3, "patience": 3},
        "lda": {"k": 3, "passes": 2},
        "task": {"mode": "binary", "positive_topic": "alpha"},
        "synth": {
            "n_users": 30,
            "topics": {"alpha": list(TOPIC_A), "beta": list(TOPIC_B)},
            "background_vocab": list(BACKGROUND),
            "topic_word_rate": 0.5,
            "posts_per_user": [6, 6],
            "post_length": [10, 20],
            "seed": 99,
        },
    }


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Full artifact chain: synth -> embeddings + lda, ready for evaluation."""
    root = tmp_path_factory.mktemp("cli")
    config = base_config(root)
    config_path = root / "config.json"
    config_path.write_text(json.dumps(config, indent=2))

    (root / "query.json").write_text(json.dumps(
        {"alpha": list(TOPIC_A), "beta": list(TOPIC_B)}))

    rng = np.random.default_rng(55)
    vectors = {}
    for w in TOPIC_A + TOPIC_B + BACKGROUND:
        v = rng.standard_normal(8)
        vectors[w] = 6.0 * v / np.linalg.norm(v)
    save_vectors(root / "words.txt", vectors, 8)

    assert main(["synth", "--config", str(config_path), "--out", str(root / "data")]) == 0
    assert main(["train-embeddings", "--config", str(config_path),
                 "--out", str(root / "embed")]) == 0
    assert main(["train-lda", "--config", str(config_path), "--out", str(root / "lda")]) == 0
    return root, config_path


class TestSynth:
    def test_outputs_loadable_and_match_manifest(self, workspace):
        root, _ = workspace
        corpus = load_corpus(root / "data" / "posts.jsonl", root / "data" / "users.jsonl")
        manifest = json.loads((root / "data" / "manifest.json").read_text())
        assert corpus.n_users() == manifest["n_users"] == 30
        assert {u: r.post_count for u, r in corpus.users.items()} == \
               {u: m["posts"] for u, m in manifest["users"].items()}

    def test_missing_synth_section(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text("{}")
        assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
        assert "synth" in capsys.readouterr().err


class TestIngest:
    def test_summary_and_tokens(self, workspace):
        root, config_path = workspace
        out = root / "ingest"
        assert main(["ingest", "--config", str(config_path), "--out", str(out)]) == 0
        summary = json.loads((out / "corpus_summary.json").read_text())
        assert summary["n_users"] == 30
        assert summary["label_counts"].keys() <= {"alpha", "beta"}
        lines = (out / "corpus_tokens.jsonl").read_text().splitlines()
        assert len(lines) == summary["n_posts"]
        record = json.loads(lines[0])
        assert set(record) == {"user_id", "post_id", "tokens"}


class TestFeaturize:
    @pytest.mark.parametrize("model", ["tf", "tfidf", "u2v", "relu2v", "lda"])
    def test_writes_matrix(self, workspace, model):
        root, config_path = workspace
        out = root / f"feat_{model}"
        assert main(["featurize", "--config", str(config_path), "--model", model,
                     "--out", str(out)]) == 0
        lines = [l for l in (out / f"features_{model}.csv").read_text().splitlines()
                 if not l.startswith("#")]
        header = lines[0].split(",")
        assert header[0] == "user_id"
        assert len(lines) == 31  # header + 30 users
        expected_cols = 3 if model == "lda" else 16
        assert len(header) == expected_cols + 1


class TestEvaluate:
    @pytest.mark.parametrize("model", ["tf", "tfidf", "u2v", "relu2v", "lda"])
    def test_five_models_produce_reports(self, workspace, model, capsys):
        root, config_path = workspace
        out = root / f"eval_{model}"
        assert main(["evaluate", "--config", str(config_path), "--model", model,
                     "--out", str(out), "--no-plot"]) == 0
        report = json.loads((out / f"report_{model}_alpha.json").read_text())
        assert report["model"] == model
        assert len(report["per_fold"]) == 5
        assert 0.0 <= report["accuracy_mean"] <= 1.0
        assert "±" in capsys.readouterr().out

    def test_multilabel_task(self, workspace):
        root, config_path = workspace
        out = root / "eval_ml"
        assert main(["evaluate", "--config", str(config_path), "--model", "tf",
                     "--task", "multilabel", "--out", str(out), "--no-plot"]) == 0
        report = json.loads((out / "report_tf_multilabel.json").read_text())
        assert report["task"]["topics"] == ["alpha", "beta"]

    def test_balanced_subsampling(self, workspace):
        # "beta" is the minority label under this synth seed
        root, config_path = workspace
        out = root / "eval_bal"
        assert main(["evaluate", "--config", str(config_path), "--model", "tf",
                     "--task", "binary:beta", "--balanced", "--out", str(out),
                     "--no-plot"]) == 0
        report = json.loads((out / "report_tf_beta.json").read_text())
        assert report["balanced"] is True

    def test_figure_written_alongside_report(self, workspace):
        root, config_path = workspace
        out = root / "eval_fig"
        assert main(["evaluate", "--config", str(config_path), "--model", "tf",
                     "--out", str(out)]) == 0
        assert (out / "report_tf_alpha.json").is_file()
        assert (out / "report_tf_alpha.png").is_file()

    def test_missing_posts_path_exits_2_with_path(self, workspace, capsys):
        root, config_path = workspace
        code = main(["evaluate", "--config", str(config_path), "--model", "tf",
                     "--posts", str(root / "nope.jsonl"), "--out", str(root / "x"),
                     "--no-plot"])
        assert code == 2
        assert "nope.jsonl" in capsys.readouterr().err

    def test_bad_task_flag_exits_1(self, workspace, capsys):
        root, config_path = workspace
        assert main(["evaluate", "--config", str(config_path), "--model", "tf",
                     "--task", "nonsense", "--out", str(root / "x"), "--no-plot"]) == 1

    def test_embedding_model_without_artifact_exits(self, workspace, tmp_path, capsys):
        root, config_path = workspace
        config = json.loads(config_path.read_text())
        config["paths"]["user_embeddings"] = str(tmp_path / "missing.txt")
        alt = tmp_path / "c.json"
        alt.write_text(json.dumps(config))
        code = main(["evaluate", "--config", str(alt), "--model", "u2v",
                     "--out", str(tmp_path / "o"), "--no-plot"])
        assert code == 2
        assert "missing.txt" in capsys.readouterr().err


class TestScore:
    def test_score_all_users(self, workspace):
        root, config_path = workspace
        out = root / "score_all"
        assert main(["score", "--config", str(config_path), "--out", str(out),
                     "--no-plot"]) == 0
        lines = [l for l in (out / "scores.csv").read_text().splitlines()
                 if not l.startswith("#")]
        assert lines[0] == "user_id,post_id,ps,ps_hat,scored_token_count"
        assert len(lines) > 100  # 30 users x 6 posts, minus any skipped

    def test_single_user_with_text_ranked(self, workspace):
        root, config_path = workspace
        out = root / "score_one"
        assert main(["score", "--config", str(config_path), "--user", "u0003",
                     "--with-text", "--out", str(out), "--no-plot"]) == 0
        import csv as csvmod

        with open(out / "scores.csv", encoding="utf-8") as fh:
            rows = [r for r in csvmod.reader(l for l in fh if not l.startswith("#"))]
        assert rows[0][-1] == "text"
        body = rows[1:]
        assert all(r[0] == "u0003" for r in body)
        values = [float(r[3]) for r in body]
        assert values == sorted(values, reverse=True)

    def test_unknown_user_exits_2(self, workspace, capsys):
        root, config_path = workspace
        assert main(["score", "--config", str(config_path), "--user", "ghost",
                     "--out", str(root / "score_x"), "--no-plot"]) == 2


class TestPca:
    def test_table_and_figure(self, workspace):
        root, config_path = workspace
        out = root / "pca_out"
        assert main(["pca", "--config", str(config_path), "--out", str(out)]) == 0
        lines = [l for l in (out / "pca.csv").read_text().splitlines()
                 if not l.startswith("#")]
        assert lines[0] == "user_id,pc1,pc2,label"
        assert len(lines) == 31
        labels = {l.split(",")[-1] for l in lines[1:]}
        assert labels <= {"alpha", "beta"}
        assert (out / "pca.png").is_file()


class TestDeterminism:
    def test_identical_runs_produce_identical_reports(self, workspace):
        root, config_path = workspace
        out = root / "det"
        name = "report_relu2v_alpha.json"
        assert main(["evaluate", "--config", str(config_path), "--model", "relu2v",
                     "--out", str(out), "--no-plot"]) == 0
        first = (out / name).read_bytes()
        assert main(["evaluate", "--config", str(config_path), "--model", "relu2v",
                     "--out", str(out), "--no-plot"]) == 0
        assert (out / name).read_bytes() == first

    def test_seed_changes_report(self, workspace):
        root, config_path = workspace
        out_a = root / "seed_a"
        out_b = root / "seed_b"
        assert main(["evaluate", "--config", str(config_path), "--model", "tf",
                     "--out", str(out_a), "--no-plot"]) == 0
        assert main(["evaluate", "--config", str(config_path), "--model", "tf",
                     "--seed", "1234", "--out", str(out_b), "--no-plot"]) == 0
        a = json.loads((out_a / "report_tf_alpha.json").read_text())
        b = json.loads((out_b / "report_tf_alpha.json").read_text())
        assert a["seed"] != b["seed"]


class TestUsageErrors:
    def test_unknown_command_exits_1(self, capsys):
        assert main(["frobnicate"]) == 1

    def test_unknown_config_field_exits_1(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text('{"surprise": 1}')
        assert main(["ingest", "--config", str(cfg)]) == 1
        assert "surprise" in capsys.readouterr().err

    def test_invalid_config_json_exits_1(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text("{nope")
        assert main(["ingest", "--config", str(cfg)]) == 1
