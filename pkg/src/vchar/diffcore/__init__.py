"""Minimal numpy differentiable core: ops, LSTM, AdamW and gradient checking."""
from .gradcheck import analytic_grad, grad_check, numeric_grad
from .ops import (PROB_FLOOR, add, concat, conv1d_forward, cross_entropy, flip, linear_forward,
                  mean_kl, mse, relu, reshape, scale, sigmoid, softmax, sum_axis, take, tanh, total,
                  transpose, weighted_mean)
from .optim import AdamWState, adamw_step
from .params import ParamStore, as_dense, uniform_init
from .recurrent import lstm_forward, recurrent_forward
from .tape import GradientTape, Var, value_of

__all__ = [
    "PROB_FLOOR", "AdamWState", "GradientTape", "ParamStore", "Var", "adamw_step", "add",
    "analytic_grad", "as_dense", "concat", "conv1d_forward", "cross_entropy", "flip",
    "grad_check", "linear_forward", "lstm_forward", "mean_kl", "mse", "numeric_grad",
    "recurrent_forward", "relu", "reshape", "scale", "sigmoid", "softmax", "sum_axis", "take", "tanh",
    "total", "transpose", "uniform_init", "value_of", "weighted_mean",
]
