from deskrl.autodiff.engine import Tape, Tensor, backward, backward_calls, reset_backward_calls
from deskrl.autodiff.nn import MLP, LayerNormBlock, Linear, Params
from deskrl.autodiff.optim import Adam, clip_grad_norm

__all__ = [
    "Adam",
    "LayerNormBlock",
    "Linear",
    "MLP",
    "Params",
    "Tape",
    "Tensor",
    "backward",
    "backward_calls",
    "clip_grad_norm",
    "reset_backward_calls",
]
