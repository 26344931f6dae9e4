from .config import DecoderConfig, EncoderConfig, ModelConfig, param_shapes, full_scale_config
from .model import ToyModel
from .schedule import WarmupSchedule, active_layers, lr_at
from .train import TrainConfig, Utterance, synthetic_utterances, train, train_step

__all__ = [
    "DecoderConfig", "EncoderConfig", "ModelConfig", "param_shapes", "full_scale_config",
    "ToyModel", "WarmupSchedule", "active_layers", "lr_at",
    "TrainConfig", "Utterance", "synthetic_utterances", "train", "train_step",
]
