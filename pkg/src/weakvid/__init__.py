"""Weakly labelled video to classification datasets, with handcrafted and
neural classifiers evaluated under frame-level and video-level splits."""

__version__ = "0.1.0"

from .classic_ml import ClassifierSpec, TrainedModel, cross_validate, fit, predict
from .datasetgen import DatasetVariant, Sample, build_dataset, load_dataset, save_dataset
from .errors import WeakVidError
from .eval_report import ConfusionMatrix, confusion_matrix, metrics, render_report
from .features import FeatureConfig, extract_features, image_feature_vector
from .ingest import DetectionRecord, VideoMeta, best_detections, parse_detections, read_manifest
from .splitting import kfold_frame_split, video_level_split
from .synth import SynthConfig, generate_corpus

__all__ = [
    "ClassifierSpec", "TrainedModel", "cross_validate", "fit", "predict",
    "DatasetVariant", "Sample", "build_dataset", "load_dataset", "save_dataset",
    "WeakVidError",
    "ConfusionMatrix", "confusion_matrix", "metrics", "render_report",
    "FeatureConfig", "extract_features", "image_feature_vector",
    "DetectionRecord", "VideoMeta", "best_detections", "parse_detections", "read_manifest",
    "kfold_frame_split", "video_level_split",
    "SynthConfig", "generate_corpus",
]
