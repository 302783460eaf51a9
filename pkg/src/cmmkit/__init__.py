"""Hybrid Gaussian/multinomial mixture classifiers trained by variational
Bayes, with component-level measures, rule extraction and novelty detection."""

from .data import Dataset, load_builtin, load_csv, pca, split, z_normalize
from .errors import (BandwidthError, CMMError, DegenerateInputError, EmptyInputError, ExtractionError,
                     ParameterError, SchemaError, StructuralError, UndefinedMeasureError)
from .io import load_model, save_model
from .measures import MEASURES, MeasureReport, evaluate, spearman
from .model import Classifier, ColumnSchema, HybridComponent, Sample, Schema, make_component
from .novelty import NoveltyDetector, alarm, znormalize_series
from .rules import extract_rules, render_rules
from .training import FitResult, SecondOrderParams, TrainingConfig, fit

__version__ = "0.1.0"

__all__ = [
    "BandwidthError", "CMMError", "Classifier", "ColumnSchema", "Dataset", "DegenerateInputError",
    "EmptyInputError", "ExtractionError", "FitResult", "HybridComponent", "MEASURES", "MeasureReport",
    "NoveltyDetector", "ParameterError", "Sample", "Schema", "SchemaError", "SecondOrderParams",
    "StructuralError", "TrainingConfig", "UndefinedMeasureError", "alarm", "evaluate", "extract_rules",
    "fit", "load_builtin", "load_csv", "load_model", "make_component", "pca", "render_rules",
    "save_model", "spearman", "split", "z_normalize", "znormalize_series",
]
