"""Sensor encoder: per-channel convolution, sensor fusion, biLSTM and two heads.

Data flow for a batch ``x`` of shape ``(B, C, T)``::

    conv (groups=C, F filters per channel) + ReLU   -> channel features (B, C*F, T')
    fusion linear C*F -> D + ReLU, per step         -> fused sequence   (B, T', D)
    bidirectional LSTM                              -> (B, T', 2H)
    atomic head: per-step ReLU layer 2H -> H        -> time-series layer (B, T', H)
                 linear H -> n per step, sum over steps,
                 softmax                            -> atomic distribution p
    complex head: LSTM 2H -> H, last state,
                  linear H -> M, softmax            -> complex probabilities
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .diffcore import (ParamStore, conv1d_forward, linear_forward, recurrent_forward,
                       relu, softmax, sum_axis, take, transpose, uniform_init, value_of)
from .errors import ConfigError, DimensionError

# gate block order inside packed LSTM matrices: input, forget, cell, output
_FORGET = 1


@dataclass(frozen=True)
class EncoderConfig:
    n_channels: int
    n_steps: int
    n_atomic: int
    n_complex: int
    kernel: int = 5
    features: int = 4
    fusion: int = 32
    hidden: int = 32
    stride: int = 1
    seed: int = 0

    def __post_init__(self):
        for name in ("n_channels", "n_steps", "n_atomic", "n_complex", "kernel", "features",
                     "fusion", "hidden", "stride"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.kernel > self.n_steps:
            raise ConfigError(f"kernel {self.kernel} longer than window {self.n_steps}")

    @property
    def conv_steps(self) -> int:
        return (self.n_steps - self.kernel) // self.stride + 1

    def to_dict(self) -> dict:
        return asdict(self)


class EncoderParams(ParamStore):
    """Parameter store that also remembers its :class:`EncoderConfig`."""

    def __init__(self, arrays, config: EncoderConfig, seed=None):
        super().__init__(arrays, config.seed if seed is None else seed)
        self.config = config


@dataclass
class PredictionRecord:
    atomic_probs: np.ndarray
    complex_probs: np.ndarray
    complex_argmax: int
    atomic_logits: np.ndarray = None
    complex_logits: np.ndarray = None
    cache: dict = field(default_factory=dict)


def layer_shapes(cfg: EncoderConfig) -> dict[str, tuple]:
    c, f, k, d, h = cfg.n_channels, cfg.features, cfg.kernel, cfg.fusion, cfg.hidden
    shapes = {
        "conv.w": (c * f, 1, k),
        "conv.b": (c * f,),
        "fusion.w": (c * f, d),
        "fusion.b": (d,),
    }
    for tag in ("fwd", "bwd"):
        shapes[f"bilstm.{tag}.w_ih"] = (d, 4 * h)
        shapes[f"bilstm.{tag}.w_hh"] = (h, 4 * h)
        shapes[f"bilstm.{tag}.b"] = (4 * h,)
    shapes.update({
        "atomic.hidden.w": (2 * h, h),
        "atomic.hidden.b": (h,),
        "atomic.out.w": (h, cfg.n_atomic),
        "atomic.out.b": (cfg.n_atomic,),
        "complex.fwd.w_ih": (2 * h, 4 * h),
        "complex.fwd.w_hh": (h, 4 * h),
        "complex.fwd.b": (4 * h,),
        "complex.out.w": (h, cfg.n_complex),
        "complex.out.b": (cfg.n_complex,),
    })
    return shapes


def _fan_in(name: str, shapes: dict, cfg: EncoderConfig) -> int:
    if name.startswith("conv."):
        return cfg.kernel
    if name.endswith(".b"):
        stem_ = name[:-2]
        name = stem_ + ".w_ih" if stem_ + ".w_ih" in shapes else stem_ + ".w"
    return shapes[name][0]


def build_encoder(cfg: EncoderConfig) -> EncoderParams:
    """Seeded uniform(+-1/sqrt(fan_in)) initialisation; LSTM forget biases start at 1."""
    if not isinstance(cfg, EncoderConfig):
        raise ConfigError("build_encoder expects an EncoderConfig")
    rng = np.random.default_rng(cfg.seed)
    h = cfg.hidden
    arrays = {}
    shapes = layer_shapes(cfg)
    for name, shape in shapes.items():
        arr = uniform_init(rng, shape, _fan_in(name, shapes, cfg))
        if name.endswith(".b") and name[:-2] + ".w_hh" in shapes:
            arr[_FORGET * h:(_FORGET + 1) * h] = 1.0
        arrays[name] = arr
    return EncoderParams(arrays, cfg)


def stem(p, cfg: EncoderConfig, x):
    """Per-channel convolution + ReLU; returns channel features ``(B, C*F, T')``."""
    return relu(conv1d_forward(x, p["conv.w"], stride=cfg.stride, groups=cfg.n_channels, bias=p["conv.b"]))


def trunk(p, cfg: EncoderConfig, feats) -> dict:
    fused = relu(linear_forward(transpose(feats, (0, 2, 1)), p["fusion.w"], p["fusion.b"]))
    seq = recurrent_forward(fused, p, "bidirectional", prefix="bilstm.")
    ts = relu(linear_forward(seq, p["atomic.hidden.w"], p["atomic.hidden.b"]))
    # dense map from the whole time-series layer to each output neuron, with the
    # weight vector shared across steps: logits = sum_t (W^T ts_t + b)
    a_logits = sum_axis(linear_forward(ts, p["atomic.out.w"], p["atomic.out.b"]), axis=1)
    c_seq = recurrent_forward(seq, p, "forward", prefix="complex.")
    c_logits = linear_forward(take(c_seq, -1, axis=1), p["complex.out.w"], p["complex.out.b"])
    return {
        "fusion": fused,
        "timeseries": ts,
        "atomic_logits": a_logits,
        "atomic_probs": softmax(a_logits),
        "complex_logits": c_logits,
        "complex_probs": softmax(c_logits),
    }


def forward_batch(p, cfg: EncoderConfig, x) -> dict:
    """Full forward pass on ``(B, C, T)``; ``p`` may hold arrays or tape variables."""
    xv = value_of(x)
    if xv.ndim != 3 or xv.shape[1:] != (cfg.n_channels, cfg.n_steps):
        raise DimensionError(f"expected (B, {cfg.n_channels}, {cfg.n_steps}) input, got {xv.shape}")
    feats = stem(p, cfg, x)
    out = trunk(p, cfg, feats)
    out["channel_features"] = feats
    return out


def _window_values(window):
    return window.values if hasattr(window, "values") else np.asarray(window, dtype=np.float64)


def predict_batch(params: EncoderParams, windows, batch_size: int = 64) -> list[PredictionRecord]:
    cfg = params.config
    records = []
    for lo in range(0, len(windows), batch_size):
        x = np.stack([_window_values(w) for w in windows[lo:lo + batch_size]])
        out = forward_batch(params, cfg, x)
        for i in range(x.shape[0]):
            cp = out["complex_probs"][i]
            records.append(PredictionRecord(
                atomic_probs=out["atomic_probs"][i],
                complex_probs=cp,
                complex_argmax=int(np.argmax(cp)),
                atomic_logits=out["atomic_logits"][i],
                complex_logits=out["complex_logits"][i],
                cache={k: out[k][i] for k in ("channel_features", "fusion", "timeseries")},
            ))
    return records


def encoder_forward(params: EncoderParams, window) -> PredictionRecord:
    """Predict one window (a :class:`SensorWindow` or a ``(C, T)`` array)."""
    values = _window_values(window)
    cfg = params.config
    if values.shape != (cfg.n_channels, cfg.n_steps):
        raise DimensionError(f"window shape {values.shape} != ({cfg.n_channels}, {cfg.n_steps})")
    return predict_batch(params, [values])[0]

