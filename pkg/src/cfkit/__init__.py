"""cfkit: memory-based and latent factor collaborative filtering."""

from cfkit.errors import (
    CFError,
    DatasetMissingError,
    DomainError,
    ModelCorruptError,
    ModelVersionError,
    ParseError,
    TrainingError,
    UndefinedMetricError,
    UnknownIdError,
)
from cfkit.factorization import TrainConfig, explainability_scores, train_emf, train_mf, train_nmf
from cfkit.neighborhood import (
    predict_item_based,
    predict_user_based,
    topn_item_based,
    topn_user_based,
)
from cfkit.ratings import build_matrix, load_matrix, parse_interactions, split_holdout
from cfkit.similarity import build_similarity_model, similarity
from cfkit.svd import svd_fit, svd_predict, truncated_svd

__version__ = "0.1.0"
