"""Model, training, and rendering configuration.

Two model presets are provided: ``toy`` (64-dim features, 64x64 clips,
2-layer encoders) trains on a CPU in minutes; ``paper`` reproduces the
published interface dimensions (768-dim video/text features, 128-dim sensor
features, 224x224 clips) and is used for shape-contract checks.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .errors import ConfigError

PAD, BOS, EOS, UNK, CLS = 0, 1, 2, 3, 4

SENSOR_HIDDEN_DIM = 64
SENSOR_FEATURE_DIM = 128

FUSION_FULL = "full"
FUSION_SIMPLE_CONCAT = "simple_concat"


@dataclass
class RenderConfig:
    """Rasterizer settings for the synthetic scenario generator."""

    resolution: int = 64
    frames: int = 16

    def validate(self):
        if self.resolution < 16:
            raise ConfigError(f"resolution {self.resolution} < 16: patching becomes degenerate")
        if self.frames != 16:
            raise ConfigError(f"clips must have exactly 16 frames, got {self.frames}")
        return self

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass
class ModelConfig:
    """Dimensions and structural hyperparameters for the full network."""

    # modality feature widths
    d_v: int = 64
    d_t: int = 64
    d_fused: int = 64
    d_s_hidden: int = SENSOR_HIDDEN_DIM
    d_s: int = SENSOR_FEATURE_DIM

    # video encoder
    resolution: int = 64
    patch: int = 8
    tubelet_frames: int = 2
    frames: int = 16
    video_layers: int = 2
    video_heads: int = 4

    # text encoder
    text_layers: int = 2
    text_heads: int = 4

    # explanation decoder
    d_dec: int = 64
    dec_layers: int = 2
    dec_heads: int = 4

    mlp_ratio: float = 4.0

    vocab_size: int = 0  # filled in once a vocabulary is built
    num_actions: int = 5
    max_len: int = 50
    beams: int = 5

    fusion_mode: str = FUSION_FULL
    dtype: str = "float32"
    seed: int = 0

    def validate(self):
        dims = {"d_v": self.d_v, "d_t": self.d_t, "d_fused": self.d_fused, "d_dec": self.d_dec}
        for name, dim in dims.items():
            if dim <= 0:
                raise ConfigError(f"{name} must be positive, got {dim}")
        if self.d_s != SENSOR_FEATURE_DIM:
            raise ConfigError(f"sensor feature width is fixed at {SENSOR_FEATURE_DIM}, got {self.d_s}")
        if self.num_actions != 5:
            raise ConfigError(f"action count is fixed at 5, got {self.num_actions}")
        for name, dim, heads in (
            ("video", self.d_v, self.video_heads),
            ("text", self.d_t, self.text_heads),
            ("decoder", self.d_dec, self.dec_heads),
        ):
            if heads <= 0 or dim % heads != 0:
                raise ConfigError(f"{name} width {dim} not divisible by {heads} heads")
        if self.frames % self.tubelet_frames != 0:
            raise ConfigError(f"{self.frames} frames not divisible by tubelet of {self.tubelet_frames}")
        if self.resolution % self.patch != 0:
            raise ConfigError(f"resolution {self.resolution} not divisible by patch {self.patch}")
        if self.fusion_mode not in (FUSION_FULL, FUSION_SIMPLE_CONCAT):
            raise ConfigError(f"unknown fusion mode {self.fusion_mode!r}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")
        if self.max_len < 4:
            raise ConfigError("max_len must leave room for BOS/EOS framing")
        return self

    # ---- derived shapes -------------------------------------------------

    @property
    def grid(self) -> int:
        """Patches per clip side."""
        return self.resolution // self.patch

    @property
    def temporal_tokens(self) -> int:
        return self.frames // self.tubelet_frames

    @property
    def video_tokens(self) -> int:
        return self.temporal_tokens * self.grid * self.grid

    @property
    def token_dim(self) -> int:
        """Flattened tubelet size feeding the patch embedding."""
        return self.tubelet_frames * self.patch * self.patch * 3

    @property
    def concat_dim(self) -> int:
        return self.d_v + self.d_s + self.d_t

    @property
    def fused_dim(self) -> int:
        """Width of the vector both heads consume."""
        if self.fusion_mode == FUSION_SIMPLE_CONCAT:
            return self.concat_dim
        return self.d_fused

    def np_dtype(self):
        import numpy as np

        return np.float32 if self.dtype == "float32" else np.float64

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        data = dict(data)
        preset = data.pop("preset", "toy")
        base = paper_model_config() if preset == "paper" else toy_model_config()
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return dataclasses.replace(base, **data).validate()


def toy_model_config(**overrides) -> ModelConfig:
    return dataclasses.replace(ModelConfig(), **overrides).validate()


def paper_model_config(**overrides) -> ModelConfig:
    base = ModelConfig(
        d_v=768,
        d_t=768,
        d_fused=768,
        d_dec=768,
        resolution=224,
        patch=16,
        video_layers=12,
        video_heads=12,
        text_layers=12,
        text_heads=12,
        dec_layers=6,
        dec_heads=12,
    )
    return dataclasses.replace(base, **overrides).validate()


@dataclass
class TrainConfig:
    """Optimization schedule; defaults follow the published recipe."""

    learning_rate: float = 1e-4
    weight_decay: float = 1e-5
    batch_size: int = 4
    epochs: int = 5
    shuffle_seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    eval_every: int = 1
    checkpoint_dir: str | None = None

    def validate(self):
        if self.learning_rate <= 0 or self.batch_size <= 0:
            raise ConfigError("learning rate and batch size must be positive")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("Adam betas must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ConfigError("weight decay must be non-negative")
        return self

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**data).validate()
