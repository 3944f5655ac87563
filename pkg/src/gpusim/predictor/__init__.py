from .features import FEATURE_NAMES, UNKNOWN, JobEncoder, calendar_fields, encode_features
from .gbdt import (GBDTConfig, GBDTModel, RegressionTree, fit_tree, predict_gbdt, train_gbdt,
                   update_model)
from .history import DEFAULT_PRIOR, HistoryStore, ew_mean, rolling_estimate
from .levenshtein import NameClusterIndex, cluster_names, levenshtein, normalized_distance
from .model import DurationModel, split_by_time

__all__ = [
    "FEATURE_NAMES", "UNKNOWN", "JobEncoder", "calendar_fields", "encode_features",
    "GBDTConfig", "GBDTModel", "RegressionTree", "fit_tree", "predict_gbdt", "train_gbdt",
    "update_model", "DEFAULT_PRIOR", "HistoryStore", "ew_mean", "rolling_estimate",
    "NameClusterIndex", "cluster_names", "levenshtein", "normalized_distance",
    "DurationModel", "split_by_time",
]
