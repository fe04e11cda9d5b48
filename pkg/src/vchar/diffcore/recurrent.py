"""LSTM layers with a fused, batch-vectorised backward pass.

Gate blocks in the packed matrices are ordered ``[input, forget, cell, output]``:
``w_ih`` is ``(D, 4H)``, ``w_hh`` is ``(H, 4H)`` and ``bias`` is ``(4H,)``.
"""
from __future__ import annotations

from typing import Mapping

import numpy as np

from ..errors import DimensionError, LengthError
from .ops import _sigmoid, _wrap, concat, flip
from .tape import value_of

DIRECTIONS = ("forward", "backward", "bidirectional")


def lstm_forward(seq, w_ih, w_hh, bias):
    """Run one LSTM over ``seq`` (``(T, D)`` or ``(B, T, D)``) from a zero state.

    Returns the hidden state at every step, ``(T, H)`` or ``(B, T, H)``.
    """
    xv = value_of(seq)
    wi, wh, bv = value_of(w_ih), value_of(w_hh), value_of(bias)
    squeeze = xv.ndim == 2
    if squeeze:
        xv = xv[None]
    if xv.ndim != 3:
        raise DimensionError("lstm expects (T, D) or (B, T, D)")
    b, t, d = xv.shape
    if t < 1:
        raise LengthError("lstm: empty sequence")
    h = wh.shape[0]
    if wi.shape != (d, 4 * h) or wh.shape != (h, 4 * h) or bv.shape != (4 * h,):
        raise DimensionError(
            f"lstm: gate shapes w_ih{wi.shape} w_hh{wh.shape} b{bv.shape} for D={d}, H={h}")

    xw = xv @ wi + bv  # (B, T, 4H)
    gates = np.empty((t, b, 4 * h))
    cells = np.empty((t + 1, b, h))
    hs = np.empty((t + 1, b, h))
    cells[0] = 0.0
    hs[0] = 0.0
    for s in range(t):
        z = xw[:, s] + hs[s] @ wh
        a = gates[s]
        a[:, :2 * h] = _sigmoid(z[:, :2 * h])
        a[:, 2 * h:3 * h] = np.tanh(z[:, 2 * h:3 * h])
        a[:, 3 * h:] = _sigmoid(z[:, 3 * h:])
        cells[s + 1] = a[:, h:2 * h] * cells[s] + a[:, :h] * a[:, 2 * h:3 * h]
        hs[s + 1] = a[:, 3 * h:] * np.tanh(cells[s + 1])
    out = np.ascontiguousarray(hs[1:].transpose(1, 0, 2))
    if squeeze:
        out = out[0]

    def vjp(g):
        if squeeze:
            g = g[None]
        dz_all = np.empty((b, t, 4 * h))
        dwh = np.zeros_like(wh)
        dh_next = np.zeros((b, h))
        dc_next = np.zeros((b, h))
        for s in range(t - 1, -1, -1):
            a = gates[s]
            i, f, gg, o = a[:, :h], a[:, h:2 * h], a[:, 2 * h:3 * h], a[:, 3 * h:]
            tc = np.tanh(cells[s + 1])
            dh = g[:, s] + dh_next
            dc = dc_next + dh * o * (1.0 - tc * tc)
            dz = dz_all[:, s]
            dz[:, :h] = dc * gg * i * (1.0 - i)
            dz[:, h:2 * h] = dc * cells[s] * f * (1.0 - f)
            dz[:, 2 * h:3 * h] = dc * i * (1.0 - gg * gg)
            dz[:, 3 * h:] = dh * tc * o * (1.0 - o)
            dwh += hs[s].T @ dz
            dh_next = dz @ wh.T
            dc_next = dc * f
        dx = dz_all @ wi.T
        dwi = xv.reshape(-1, d).T @ dz_all.reshape(-1, 4 * h)
        db = dz_all.sum(axis=(0, 1))
        if squeeze:
            dx = dx[0]
        return dx, dwi, dwh, db

    return _wrap(out, (seq, w_ih, w_hh, bias), vjp)


def recurrent_forward(seq, params: Mapping, direction: str = "forward", prefix: str = ""):
    """LSTM over ``seq`` using parameters named ``{prefix}{fwd|bwd}.{w_ih,w_hh,b}``.

    ``bidirectional`` concatenates the forward pass with the time-reversed
    backward pass, giving width ``2H``.
    """
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}")
    t_axis = value_of(seq).ndim - 2

    def run(tag, s):
        return lstm_forward(s, params[f"{prefix}{tag}.w_ih"], params[f"{prefix}{tag}.w_hh"],
                            params[f"{prefix}{tag}.b"])

    if direction == "forward":
        return run("fwd", seq)
    back = flip(run("bwd", flip(seq, t_axis)), t_axis)
    if direction == "backward":
        return back
    return concat([run("fwd", seq), back], axis=-1)
