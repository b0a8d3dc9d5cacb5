"""Speech-based blood-pressure class clustering with the Fact-Finding Instructor optimizer."""

from .audio_io import AudioClip, BPLabel, PreprocessConfig, frame, load_wav, preprocess
from .clustering import BPClass, ClusterModel, accuracy_fitness, bp_class_from_label, ffi_cluster, fuse, incremental_update, kmeans_batch
from .features import FEATURE_NAMES, FeatureConfig, FeatureVector, extract_feature_vector
from .harness import ExperimentConfig, SweepGrid, SyntheticSpec, generate_synthetic, run_experiment, sweep
from .metrics import EvaluationReport, RegressionStats, ols_regression
from .optimizer import FFIConfig, optimize

__all__ = [
    "AudioClip",
    "BPClass",
    "BPLabel",
    "ClusterModel",
    "EvaluationReport",
    "ExperimentConfig",
    "FEATURE_NAMES",
    "FFIConfig",
    "FeatureConfig",
    "FeatureVector",
    "PreprocessConfig",
    "RegressionStats",
    "SweepGrid",
    "SyntheticSpec",
    "accuracy_fitness",
    "bp_class_from_label",
    "extract_feature_vector",
    "ffi_cluster",
    "frame",
    "fuse",
    "generate_synthetic",
    "incremental_update",
    "kmeans_batch",
    "load_wav",
    "ols_regression",
    "optimize",
    "preprocess",
    "run_experiment",
    "sweep",
]
