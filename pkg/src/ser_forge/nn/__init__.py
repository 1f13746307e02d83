from .gradcheck import grad_check
from .layers import (
    conv1d,
    conv2d,
    dropout,
    layer_norm,
    linear,
    lstm,
    lstm_layer,
    max_pool2d,
    multi_head_self_attention,
    relu,
    tanh,
    transformer_block,
)
from .loss import cross_entropy
from .optim import AdamState, adam_step, clip_grad_norm, cosine_lr
from .params import ParamStore, trunc_normal
from .tensor import Tensor, log_softmax, softmax

__all__ = [
    "AdamState",
    "ParamStore",
    "Tensor",
    "adam_step",
    "clip_grad_norm",
    "conv1d",
    "conv2d",
    "cosine_lr",
    "cross_entropy",
    "dropout",
    "grad_check",
    "layer_norm",
    "linear",
    "log_softmax",
    "lstm",
    "lstm_layer",
    "max_pool2d",
    "multi_head_self_attention",
    "relu",
    "softmax",
    "tanh",
    "transformer_block",
    "trunc_normal",
]
