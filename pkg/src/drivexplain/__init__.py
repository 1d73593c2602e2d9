"""drivexplain: multimodal driving-action prediction with natural-language
explanations, built from three modality encoders (video, sensor, text), a
concatenation-projection fusion layer, a classification head, and a
fused-feature-conditioned explanation decoder with beam search."""

__version__ = "0.1.0"

from .actions import ACTION_NAMES, action_code, action_name
from .config import ModelConfig, RenderConfig, TrainConfig, paper_model_config, toy_model_config
from .dataset import DEFAULT_DISTRIBUTION, generate_dataset, load_dataset
from .encoders import export_attention, sensor_encode, text_encode, video_encode
from .estimator import DrivingExplainer
from .fusion import (
    ActionDistribution,
    BeamHypothesis,
    FusedFeature,
    action_loss,
    beam_search,
    decode_teacher_forced,
    explanation_loss,
    fuse,
    predict_action,
    total_loss,
)
from .metrics import accuracy, action_distribution, bleu4, confusion
from .params import init_params
from .preprocess import (
    SensorStats,
    SplitAssignment,
    Vocabulary,
    apply_sensor_norm,
    build_vocab,
    detokenize,
    fit_sensor_stats,
    normalize_clip,
    split_dataset,
    tokenize,
)
from .scenarios import Sample, ScenarioSpec, SensorReading, generate_scenario
from .training import (
    Checkpoint,
    TrainLog,
    adam_step,
    grad_check,
    load_checkpoint,
    save_checkpoint,
    train,
)

__all__ = [
    "ACTION_NAMES",
    "ActionDistribution",
    "BeamHypothesis",
    "Checkpoint",
    "DEFAULT_DISTRIBUTION",
    "DrivingExplainer",
    "FusedFeature",
    "ModelConfig",
    "RenderConfig",
    "Sample",
    "ScenarioSpec",
    "SensorReading",
    "SensorStats",
    "SplitAssignment",
    "TrainConfig",
    "TrainLog",
    "Vocabulary",
    "accuracy",
    "action_code",
    "action_distribution",
    "action_loss",
    "action_name",
    "adam_step",
    "apply_sensor_norm",
    "beam_search",
    "bleu4",
    "build_vocab",
    "confusion",
    "decode_teacher_forced",
    "detokenize",
    "explanation_loss",
    "export_attention",
    "fit_sensor_stats",
    "fuse",
    "generate_dataset",
    "generate_scenario",
    "grad_check",
    "init_params",
    "load_checkpoint",
    "load_dataset",
    "normalize_clip",
    "paper_model_config",
    "predict_action",
    "save_checkpoint",
    "sensor_encode",
    "split_dataset",
    "text_encode",
    "tokenize",
    "total_loss",
    "toy_model_config",
    "train",
    "video_encode",
]
