"""One-class human action anomaly detection with DCT + GCN features and an invertible flow."""
from .dct import DctBasis, dct_forward, dct_inverse, make_basis
from .encoder import Encoder, EncoderConfig, MultiLevelFeatures
from .flow import FlowError, FlowNetwork, FlowOutput, nll
from .motion import (BodyPartition, ClipDescriptor, DataError, DatasetManifest, MotionClip, load_manifest,
                     preprocess, read_clip, save_manifest, write_clip)
from .scoring import (FeatureBank, ScoreReport, ScoringError, evaluate, knn_score, nll_score, roc_auc,
                      score_dataset)
from .synth import synth_dataset
from .trainer import (ModelFileError, TrainConfig, TrainedModel, TrainError, load_model, save_model,
                      train)

__version__ = "0.1.0"

__all__ = [
    "BodyPartition", "ClipDescriptor", "DataError", "DatasetManifest", "DctBasis", "Encoder",
    "EncoderConfig", "FeatureBank", "FlowError", "FlowNetwork", "FlowOutput", "ModelFileError",
    "MotionClip", "MultiLevelFeatures", "ScoreReport", "ScoringError", "TrainConfig", "TrainError",
    "TrainedModel", "dct_forward", "dct_inverse", "evaluate", "knn_score", "load_manifest", "load_model",
    "make_basis", "nll", "nll_score", "preprocess", "read_clip", "roc_auc", "save_manifest", "save_model",
    "score_dataset", "synth_dataset", "train", "write_clip",
]
