"""Model user proficiency from social-media post histories.

Builds per-user feature vectors under five models (term frequency,
TF-IDF, sigmoid user-embedding scores, their population-relative variant,
and a topic-model baseline), classifies users by proficiency topic with
cross-validated linear SVMs, and scores individual posts.
"""

__version__ = "0.1.0"

from .classify import (EvalReport, SvmModel, TaskSpec, balanced_subset,
                       compute_metrics, cross_validate, decision_values,
                       fit_linear_svm, predict, stratified_folds)
from .corpus import (Corpus, Post, SynthConfig, UserRecord, filter_min_posts,
                     generate_synthetic_corpus, load_corpus, load_user_labels,
                     save_corpus_files, subset_corpus)
from .embeddings import (TrainConfig, UserEmbeddingTable, WordEmbeddingTable,
                         load_user_embeddings, load_word_embeddings,
                         pca_project, rel_u2v_features, save_vectors, sigmoid,
                         train_user_embeddings, u2v_features)
from .errors import ConfigError, CorpusFormatError, DataError, NoScorableTokens
from .features import (FeatureMatrix, FeatureVector, MODEL_IDS, ModelArtifacts,
                       QuerySet, build_feature_matrix, idf_weights, tf_features,
                       tfidf_features)
from .lda import (LdaModel, TopicDistribution, infer_post_topics, lda_features,
                  load_lda_model, save_lda_model, train_lda, user_lda_features)
from .preprocess import (PreprocessConfig, preprocess_corpus, preprocess_text,
                         tokenize)
from .scoring import (ContentScore, ScoreConfig, brevity_penalty,
                      proficiency_score, rank_user_posts, relu2v_denominators,
                      score_content)
