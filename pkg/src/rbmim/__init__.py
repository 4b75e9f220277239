"""Drift detection for multi-class imbalanced data streams with a class-weighted RBM."""

from .drift import DetectorConfig, DriftReport, RbmImDetector, reconstruction_error
from .evaluation import (LinearClassifier, detection_metrics, make_detector, pm_auc, pm_gm,
                         run_prequential)
from .experiment import load_config, run_experiment, validate_config
from .generators import ConfigError, generator_from_config, make_benchmark
from .rbm import RbmHyperparams, RbmParameters
from .stream import Instance, MiniBatch, SchemaError, StreamSchema, batches, read_csv, write_csv

__all__ = [
    "DetectorConfig", "DriftReport", "RbmImDetector", "reconstruction_error",
    "LinearClassifier", "detection_metrics", "make_detector", "pm_auc", "pm_gm",
    "run_prequential", "load_config", "run_experiment", "validate_config",
    "ConfigError", "generator_from_config", "make_benchmark",
    "RbmHyperparams", "RbmParameters",
    "Instance", "MiniBatch", "SchemaError", "StreamSchema", "batches", "read_csv", "write_csv",
]
