"""MultiCred: multilevel credibility assessment for social accounts.

End-to-end pipeline: ingest account records, build 51-dimensional user
feature vectors (profile scalars, aggregated tweet scalars, latent tweet
embeddings, comment sentiment), rebalance classes with SMOTE, train an
MLP classifier, and report multiclass metrics.

Main entry points:
- domain: UserRecord and friends, score binning, criterion scoring
- dataset: load_dataset / write_dataset / generate_synthetic
- features: build_user_vector, split, smote, normalization
- classifier: build_multicred, train, predict, evaluate
- cli: the `multicred` command
"""

from .domain import (
    ClassificationSystem,
    Comment,
    CriteriaFlags,
    DomainError,
    Tweet,
    UserProfile,
    UserRecord,
    bin_score,
    newsguard_score,
    validate_record,
)
from .dataset import (
    DatasetLoadError,
    DatasetManifest,
    SyntheticConfig,
    generate_synthetic,
    load_dataset,
    write_dataset,
)
from .preprocess import CleanText, preprocess
from .embedding import (
    EmbedderSpec,
    analyze_sentiment,
    embed_text,
    remote_embed_batch,
)
from .autoencoder import Autoencoder, AutoencoderSpec, reconstruction_error, train_autoencoder
from .features import (
    LabeledDataset,
    NormalizationStats,
    SplitDataset,
    UserFeatureVector,
    aggregate_mean,
    apply_minmax,
    build_user_vector,
    fit_minmax,
    smote,
    split,
)
from .classifier import (
    MetricsReport,
    TrainConfig,
    TrainHistory,
    build_multicred,
    evaluate,
    predict,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "ClassificationSystem", "Comment", "CriteriaFlags", "DomainError",
    "Tweet", "UserProfile", "UserRecord",
    "bin_score", "newsguard_score", "validate_record",
    "DatasetLoadError", "DatasetManifest", "SyntheticConfig",
    "generate_synthetic", "load_dataset", "write_dataset",
    "CleanText", "preprocess",
    "EmbedderSpec", "analyze_sentiment", "embed_text", "remote_embed_batch",
    "Autoencoder", "AutoencoderSpec", "reconstruction_error", "train_autoencoder",
    "LabeledDataset", "NormalizationStats", "SplitDataset", "UserFeatureVector",
    "aggregate_mean", "apply_minmax", "build_user_vector", "fit_minmax",
    "smote", "split",
    "MetricsReport", "TrainConfig", "TrainHistory",
    "build_multicred", "evaluate", "predict", "train",
]
