from .checkpoint import load_checkpoint, read_header, save_checkpoint
from .net import NetConfig, VelocityNet, parameter_summary, time_embedding
from .sampler import DEFAULT_STEPS, euler_sample
from .train import TrainConfig, TrainState, backward_and_step, fm_loss, learning_rate, sample_times

__all__ = [
    "DEFAULT_STEPS", "NetConfig", "TrainConfig", "TrainState", "VelocityNet", "backward_and_step",
    "euler_sample", "fm_loss", "learning_rate", "load_checkpoint", "parameter_summary",
    "read_header", "sample_times", "save_checkpoint", "time_embedding",
]
