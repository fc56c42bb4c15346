"""Per-image selection between a shape classifier and a texture classifier for lesion images."""
from .dataio import ImageSample, Manifest, ManifestRow, SplitPlan, load_manifest, load_sample, make_split_plan
from .evalharness import EvaluationReport, ExperimentConfig, auc, run_experiment
from .features import SampleFeatures, extract_features
from .linmodel import LinearModel, fit_classifier, fit_logistic
from .metalearn import Choice, MetaSelector, SelectorConfig, build_meta_labels, recommend, train_selector
from .morphology import MORPH_FEATURE_NAMES, morph_features
from .synthgen import GenConfig, generate
from .texture import TEXTURE_FEATURE_NAMES, compute_texture_features

__version__ = "0.1.0"

__all__ = [
    "Choice",
    "EvaluationReport",
    "ExperimentConfig",
    "GenConfig",
    "ImageSample",
    "LinearModel",
    "MORPH_FEATURE_NAMES",
    "Manifest",
    "ManifestRow",
    "MetaSelector",
    "SampleFeatures",
    "SelectorConfig",
    "SplitPlan",
    "TEXTURE_FEATURE_NAMES",
    "auc",
    "build_meta_labels",
    "compute_texture_features",
    "extract_features",
    "fit_classifier",
    "fit_logistic",
    "generate",
    "load_manifest",
    "load_sample",
    "make_split_plan",
    "morph_features",
    "recommend",
    "run_experiment",
    "train_selector",
]
