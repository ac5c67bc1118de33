"""Minimal reverse-mode autodiff with the layers the navigation policies use."""
from .checkpoint import load as load_checkpoint, save as save_checkpoint
from .nn import (
    Categorical,
    attend,
    categorical,
    embedding,
    init_attention,
    init_embedding,
    init_layer_norm,
    init_linear,
    init_lstm,
    init_transformer_block,
    layer_norm,
    linear,
    lstm_cell,
    multi_head_attention,
    transformer_block,
)
from .optim import AdamState, adam_step, clip_grad_norm
from .params import ParameterSet
from .tensor import (
    Tape,
    Tensor,
    backward,
    concat,
    matmul,
    relu,
    softmax,
)

__all__ = [
    "AdamState", "Categorical", "ParameterSet", "Tape", "Tensor", "adam_step", "attend",
    "backward", "categorical", "clip_grad_norm", "concat", "embedding", "init_attention",
    "init_embedding", "init_layer_norm", "init_linear", "init_lstm", "init_transformer_block",
    "layer_norm", "linear", "load_checkpoint", "lstm_cell", "matmul", "multi_head_attention",
    "relu", "save_checkpoint", "softmax", "transformer_block",
]
