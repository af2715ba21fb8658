"""Streaming driver-fatigue recognition from facial landmark sequences.

Per-frame landmarks and head pose become 4-component fatigue vectors
(eye states, mouth opening, normalised pitch), a sliding window turns them
into short sequences, and a small LSTM scores each sequence. A synthetic
scenario generator supplies labelled streams to train and test on.
"""
from .errors import InputError, StateError
from .features import FatigueFeatureVector, LandmarkFrame, build_feature_vector, extract_features
from .kernels import BACKEND
from .lstm import LstmModel, TrainConfig, evaluate, load_checkpoint, save_checkpoint, stream_infer, train
from .sequence import FeatureWindow, SequenceDataset, label_window, skip_sample, slide_dataset
from .synthetic import ScenarioConfig, generate_corpus, generate_dataset, generate_stream

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "FatigueFeatureVector", "FeatureWindow", "InputError", "LandmarkFrame", "LstmModel",
    "ScenarioConfig", "SequenceDataset", "StateError", "TrainConfig", "build_feature_vector", "evaluate",
    "extract_features", "generate_corpus", "generate_dataset", "generate_stream", "label_window",
    "load_checkpoint", "save_checkpoint", "skip_sample", "slide_dataset", "stream_infer", "train",
]
