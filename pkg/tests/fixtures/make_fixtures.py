"""Regenerate the bundled test fixtures.

Run from the repository root:

    python3 tests/fixtures/make_fixtures.py

Outputs are deterministic; the committed files should never change unless
the recipe here changes.
"""

from pathlib import Path

import numpy as np

from proficiency import SynthConfig, generate_synthetic_corpus, save_corpus_files, save_vectors

HERE = Path(__file__).parent

TOPIC_A = tuple(f"qa{i // 26}{chr(97 + i % 26)}" for i in range(50))
TOPIC_B = tuple(f"qb{i // 26}{chr(97 + i % 26)}" for i in range(50))
BACKGROUND = tuple(f"bg{i // 26}{chr(97 + i % 26)}" for i in range(150))

SYNTH = SynthConfig(
    n_users=200,
    topics=(("alpha", TOPIC_A), ("beta", TOPIC_B)),
    background_vocab=BACKGROUND,
    topic_word_rate=0.3,
    posts_per_user=(20, 20),
    post_length=(30, 60),
    seed=20240601,
)

WORD_DIM = 64
WORD_SCALE = 32.0
WORD_TOPIC_COHESION = 0.7
WORD_SEED = 777


def build_word_vectors():
    """Tiny stand-in for a pretrained table: words of the same planted
    topic share a centroid direction, background words are random. The
    scale puts sigmoid dot products in a responsive range for the default
    learning rate at this corpus size."""
    rng = np.random.default_rng(WORD_SEED)
    centroids = {}
    for key in ("a", "b"):
        c = rng.standard_normal(WORD_DIM)
        centroids[key] = c / np.linalg.norm(c)
    vectors = {}
    for pool, centroid in ((TOPIC_A, centroids["a"]), (TOPIC_B, centroids["b"]), (BACKGROUND, None)):
        for word in pool:
            g = rng.standard_normal(WORD_DIM)
            g /= np.linalg.norm(g)
            if centroid is None:
                v = g
            else:
                v = np.sqrt(WORD_TOPIC_COHESION) * centroid + np.sqrt(1 - WORD_TOPIC_COHESION) * g
            vectors[word] = WORD_SCALE * v / np.linalg.norm(v)
    return vectors


def main():
    out = HERE / "synth200"
    out.mkdir(exist_ok=True)
    corpus = generate_synthetic_corpus(SYNTH)
    save_corpus_files(corpus, out / "posts.jsonl", out / "users.jsonl")

    import json

    manifest = {
        "seed": SYNTH.seed,
        "n_users": corpus.n_users(),
        "n_posts": sum(r.post_count for r in corpus.users.values()),
        "users": {uid: {"labels": sorted(corpus.users[uid].labels),
                        "posts": corpus.users[uid].post_count}
                  for uid in corpus.user_ids()},
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    save_vectors(HERE / "word_vectors_64d.txt", build_word_vectors(), WORD_DIM)
    print(f"wrote fixtures under {HERE}")


if __name__ == "__main__":
    main()
