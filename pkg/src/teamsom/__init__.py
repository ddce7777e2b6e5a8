"""Self-organizing task and behavior maps for team work-item data."""

from .cluster import ClusterAssignment, adjusted_rand_index, som_ward_cluster
from .errors import DataError, TeamsomError
from .lexicon import Lexicon, compile_lexicon, load_demo_lexicon, score_text, score_work_item
from .model import Dataset, FeatureMatrix, Message, WorkItem, build_feature_matrix, ingest_dataset, zscore_normalize
from .som import SomConfig, SomMap, init_map, quantization_error, topographic_error, train_batch
from .stats import correlation_matrix, kendall_tau_b, ks_test

__version__ = "0.1.0"

__all__ = [
    "ClusterAssignment",
    "DataError",
    "Dataset",
    "FeatureMatrix",
    "Lexicon",
    "Message",
    "SomConfig",
    "SomMap",
    "TeamsomError",
    "WorkItem",
    "adjusted_rand_index",
    "build_feature_matrix",
    "compile_lexicon",
    "correlation_matrix",
    "ingest_dataset",
    "init_map",
    "kendall_tau_b",
    "ks_test",
    "load_demo_lexicon",
    "quantization_error",
    "score_text",
    "score_work_item",
    "som_ward_cluster",
    "topographic_error",
    "train_batch",
    "zscore_normalize",
]
