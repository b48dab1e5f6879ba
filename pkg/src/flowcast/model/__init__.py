from .config import ModelConfig, VARIANTS
from .blocks import ConvDecoder, ConvEncoder, MaskNet, SqueezeExcite
from .recurrent import GaussianHead, Predictor, StackedLSTM, reparameterize
from .network import (
    SkipRunningAverage,
    VideoPredictor,
    parameter_count,
    skip_running_average,
)
from .checkpoint import (
    FORMAT_VERSION,
    CheckpointError,
    load_checkpoint,
    save_checkpoint,
)

__all__ = [
    "ModelConfig",
    "VARIANTS",
    "ConvDecoder",
    "ConvEncoder",
    "MaskNet",
    "SqueezeExcite",
    "GaussianHead",
    "Predictor",
    "StackedLSTM",
    "reparameterize",
    "SkipRunningAverage",
    "VideoPredictor",
    "parameter_count",
    "skip_running_average",
    "FORMAT_VERSION",
    "CheckpointError",
    "load_checkpoint",
    "save_checkpoint",
]
