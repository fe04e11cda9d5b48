"""AdamW with decoupled weight decay and bias-corrected moments."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError, NumericError
from .params import ParamStore


@dataclass
class AdamWState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: ParamStore, **hyper) -> "AdamWState":
        state = cls(**hyper)
        state.m = {k: np.zeros_like(a) for k, a in params.items()}
        state.v = {k: np.zeros_like(a) for k, a in params.items()}
        return state


def adamw_step(params: ParamStore, grads, state: AdamWState) -> tuple[ParamStore, AdamWState]:
    """One AdamW update; returns new params and state, inputs are left untouched.

    Raises NumericError (and changes nothing) if any gradient is not finite.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name!r}")
    step = state.step + 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** step
    corr2 = 1.0 - b2 ** step
    new_params, new_m, new_v = {}, {}, {}
    for name, theta in params.items():
        g = grads.get(name)
        m = state.m.get(name, np.zeros_like(theta))
        v = state.v.get(name, np.zeros_like(theta))
        if g is None:
            g = np.zeros_like(theta)
        if g.shape != theta.shape or m.shape != theta.shape:
            raise DimensionError(f"{name}: gradient/state shape mismatch")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        decayed = theta - state.lr * state.weight_decay * theta
        new_params[name] = decayed - state.lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps)
        new_m[name] = m
        new_v[name] = v
    new_state = AdamWState(state.lr, b1, b2, state.eps, state.weight_decay, step, new_m, new_v)
    return params.replace(new_params), new_state
