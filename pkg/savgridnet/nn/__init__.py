from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import grad_check
from .layers import (
    BLSTM,
    LSTM,
    Conv1d,
    Conv2d,
    Conv3d,
    ConvTranspose1d,
    ConvTranspose2d,
    LayerNorm,
    Linear,
    Module,
    MultiHeadSelfAttention,
    Parameter,
    PReLU,
)
from .optim import Adam, AdamState, LrAction, PlateauScheduler, adam_step
from .tensor import Tensor, no_grad, set_default_dtype, set_detect_anomaly

__all__ = [
    "Adam",
    "AdamState",
    "BLSTM",
    "Conv1d",
    "Conv2d",
    "Conv3d",
    "ConvTranspose1d",
    "ConvTranspose2d",
    "LSTM",
    "LayerNorm",
    "Linear",
    "LrAction",
    "Module",
    "MultiHeadSelfAttention",
    "PReLU",
    "Parameter",
    "PlateauScheduler",
    "Tensor",
    "adam_step",
    "grad_check",
    "load_checkpoint",
    "no_grad",
    "save_checkpoint",
    "set_default_dtype",
    "set_detect_anomaly",
]
