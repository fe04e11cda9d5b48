"""Differentiable array ops used by the encoder and its losses.

Shapes follow numpy broadcasting only where documented; everything else is
checked and raises :class:`~vchar.errors.DimensionError`.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided

from ..errors import DimensionError, DomainError, LabelError, WindowError
from .tape import tape_of, value_of

PROB_FLOOR = 1e-12


def _wrap(out, inputs, vjp):
    tape = tape_of(*inputs)
    if tape is None:
        return out
    return tape.record(out, tuple(inputs), vjp)


# ---------------------------------------------------------------------------
# dense layers


def linear_forward(x, weights, bias=None):
    """``x @ W + b`` over the last axis of ``x`` (any number of leading axes)."""
    xv, wv = value_of(x), value_of(weights)
    if wv.ndim != 2 or xv.shape[-1] != wv.shape[0]:
        raise DimensionError(f"linear: x{xv.shape} incompatible with W{wv.shape}")
    out = xv @ wv
    if bias is not None:
        bv = value_of(bias)
        if bv.shape != (wv.shape[1],):
            raise DimensionError(f"linear: bias {bv.shape} != ({wv.shape[1]},)")
        out = out + bv

    def vjp(g):
        g2 = g.reshape(-1, wv.shape[1])
        gx = g @ wv.T
        gw = xv.reshape(-1, wv.shape[0]).T @ g2
        gb = g2.sum(axis=0) if bias is not None else None
        return gx, gw, gb

    inputs = (x, weights) if bias is None else (x, weights, bias)
    return _wrap(out, inputs, vjp)


def _windows(x: np.ndarray, k: int, stride: int) -> np.ndarray:
    # (..., T) -> (..., T', K), read-only view
    t_out = (x.shape[-1] - k) // stride + 1
    s = x.strides
    return as_strided(x, shape=x.shape[:-1] + (t_out, k),
                      strides=s[:-1] + (s[-1] * stride, s[-1]), writeable=False)


def conv1d_forward(x, kernels, stride: int = 1, groups: int = 1, bias=None):
    """Valid (unpadded) grouped 1-D cross-correlation.

    ``x`` is ``(C, T)`` or ``(B, C, T)``; ``kernels`` is ``(F, C // groups, K)``.
    Output length is ``(T - K) // stride + 1``.
    """
    xv, kv = value_of(x), value_of(kernels)
    squeeze = xv.ndim == 2
    if squeeze:
        xv = xv[None]
    if xv.ndim != 3 or kv.ndim != 3:
        raise DimensionError("conv1d expects x (C,T)/(B,C,T) and kernels (F,Cg,K)")
    if stride < 1 or groups < 1:
        raise DimensionError("stride and groups must be >= 1")
    b, c, t = xv.shape
    f, cg, k = kv.shape
    if c % groups or f % groups or cg != c // groups:
        raise DimensionError(f"conv1d: channels {c}, filters {f}, groups {groups}, kernel in-channels {cg}")
    if k > t:
        raise WindowError(f"kernel size {k} exceeds sequence length {t}")
    fg = f // groups
    patches = _windows(np.ascontiguousarray(xv), k, stride)  # (B, C, T', K)
    t_out = patches.shape[2]
    pg = patches.reshape(b, groups, cg, t_out, k)
    kg = kv.reshape(groups, fg, cg, k)
    out = np.einsum("bgctk,gfck->bgft", pg, kg, optimize=True).reshape(b, f, t_out)
    if bias is not None:
        bv = value_of(bias)
        if bv.shape != (f,):
            raise DimensionError(f"conv1d: bias {bv.shape} != ({f},)")
        out = out + bv[:, None]

    def vjp(g):
        if squeeze:
            g = g[None]
        gg = g.reshape(b, groups, fg, t_out)
        gk = np.einsum("bgft,bgctk->gfck", gg, pg, optimize=True).reshape(f, cg, k)
        gp = np.einsum("bgft,gfck->bgctk", gg, kg, optimize=True).reshape(b, c, t_out, k)
        gx = np.zeros((b, c, t))
        span = stride * (t_out - 1) + 1
        for j in range(k):
            gx[:, :, j:j + span:stride] += gp[:, :, :, j]
        if squeeze:
            gx = gx[0]
        gb = g.sum(axis=(0, 2)) if bias is not None else None
        return gx, gk, gb

    if squeeze:
        out = out[0]
    inputs = (x, kernels) if bias is None else (x, kernels, bias)
    return _wrap(out, inputs, vjp)


# ---------------------------------------------------------------------------
# elementwise


def relu(x):
    xv = value_of(x)
    mask = xv > 0
    return _wrap(xv * mask, (x,), lambda g: (g * mask,))


def tanh(x):
    y = np.tanh(value_of(x))
    return _wrap(y, (x,), lambda g: (g * (1.0 - y * y),))


def sigmoid(x):
    y = _sigmoid(value_of(x))
    return _wrap(y, (x,), lambda g: (g * y * (1.0 - y),))


def _sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(v, axis: int = -1):
    """Shift-stabilised softmax along ``axis``."""
    vv = value_of(v)
    z = vv - vv.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _wrap(y, (v,), vjp)


# ---------------------------------------------------------------------------
# shape plumbing


def reshape(x, shape):
    xv = value_of(x)
    return _wrap(xv.reshape(shape), (x,), lambda g: (g.reshape(xv.shape),))


def transpose(x, axes):
    xv = value_of(x)
    inv = np.argsort(axes)
    return _wrap(np.transpose(xv, axes), (x,), lambda g: (np.transpose(g, inv),))


def flip(x, axis):
    return _wrap(np.flip(value_of(x), axis), (x,), lambda g: (np.flip(g, axis),))


def concat(xs, axis=-1):
    vals = [value_of(x) for x in xs]
    out = np.concatenate(vals, axis=axis)
    cuts = np.cumsum([v.shape[axis] for v in vals])[:-1]

    def vjp(g):
        return np.split(g, cuts, axis=axis)

    return _wrap(out, tuple(xs), vjp)


def take(x, index, axis):
    """Select one position along ``axis`` (the axis is dropped)."""
    xv = value_of(x)
    out = np.take(xv, index, axis=axis)

    def vjp(g):
        gx = np.zeros_like(xv)
        sl = [slice(None)] * xv.ndim
        sl[axis] = index
        gx[tuple(sl)] = g
        return (gx,)

    return _wrap(out, (x,), vjp)


def add(a, b):
    av, bv = value_of(a), value_of(b)
    if av.shape != bv.shape:
        raise DimensionError(f"add: {av.shape} vs {bv.shape}")
    return _wrap(av + bv, (a, b), lambda g: (g, g))


def scale(x, c: float):
    return _wrap(value_of(x) * c, (x,), lambda g: (g * c,))


def weighted_mean(x, weights):
    """``sum(w * x) / len(x)`` for a 1-D ``x``; ``weights`` is a constant."""
    xv = value_of(x)
    w = np.asarray(weights, dtype=np.float64)
    if xv.ndim != 1 or w.shape != xv.shape:
        raise DimensionError("weighted_mean expects equal 1-D shapes")
    n = xv.shape[0]
    return _wrap(np.asarray((w * xv).sum() / n), (x,), lambda g: (g * w / n,))


def sum_axis(x, axis: int):
    xv = value_of(x)

    def vjp(g):
        return (np.broadcast_to(np.expand_dims(g, axis), xv.shape).copy(),)

    return _wrap(xv.sum(axis=axis), (x,), vjp)


def total(x):
    xv = value_of(x)
    return _wrap(np.asarray(xv.sum()), (x,), lambda g: (np.broadcast_to(g, xv.shape).copy(),))


# ---------------------------------------------------------------------------
# losses; each reduces the last axis per sample and returns per-sample values


def mean_kl(p_true, p_predict, reduce: bool = True):
    """Mean Kullback-Leibler divergence ``(1/N) sum p_true log(p_true / p_predict)``.

    Natural log; zero-probability target entries contribute exactly 0 and the
    prediction is clamped at ``PROB_FLOOR`` (or at the target entry, if that
    is smaller, so that ``mean_kl(p, p)`` is exactly 0). Leading axes are treated as a
    batch; with ``reduce`` the batch mean is returned, otherwise one value
    per sample.
    """
    pt, pp = value_of(p_true), value_of(p_predict)
    if pt.shape != pp.shape:
        raise DimensionError(f"mean_kl: {pt.shape} vs {pp.shape}")
    if np.any(pt < 0) or np.any(pp < 0):
        raise DomainError("mean_kl: probabilities must be non-negative")
    n = pt.shape[-1]
    support = pt > 0
    floor = np.minimum(np.where(support, pt, PROB_FLOOR), PROB_FLOOR)
    clamped = np.maximum(pp, floor)
    safe_t = np.where(support, pt, 1.0)
    terms = np.where(support, pt * (np.log(safe_t) - np.log(clamped)), 0.0)
    per = terms.sum(axis=-1) / n
    batch = per.size
    out = per.mean() if reduce else per

    def vjp(g):
        g = np.asarray(g)
        if reduce:
            g = np.broadcast_to(g / batch, per.shape)
        g = g[..., None]
        live = pp >= floor
        g_pred = np.where(live, -pt / clamped, 0.0) * g / n
        g_true = np.where(support, np.log(safe_t) + 1.0 - np.log(clamped), 0.0) * g / n
        return g_true, g_pred

    return _wrap(np.asarray(out), (p_true, p_predict), vjp)


def _check_one_hot(c):
    ok = np.all((c == 0) | (c == 1)) and np.all(c.sum(axis=-1) == 1)
    if not ok:
        raise LabelError("cross_entropy: target is not one-hot")


def cross_entropy(y_predict, c_true, reduce: bool = True):
    """``-sum c_true log y_predict`` on a probability simplex (floor-clamped)."""
    yp, ct = value_of(y_predict), value_of(c_true)
    if yp.shape != ct.shape:
        raise DimensionError(f"cross_entropy: {yp.shape} vs {ct.shape}")
    _check_one_hot(ct)
    clamped = np.maximum(yp, PROB_FLOOR)
    per = -(ct * np.log(clamped)).sum(axis=-1)
    batch = per.size
    out = per.mean() if reduce else per

    def vjp(g):
        g = np.asarray(g)
        if reduce:
            g = np.broadcast_to(g / batch, per.shape)
        g = g[..., None]
        live = yp > PROB_FLOOR
        return np.where(live, -ct / clamped, 0.0) * g, None

    return _wrap(np.asarray(out), (y_predict, c_true), vjp)


def mse(p_predict, p_true, reduce: bool = True):
    """Mean squared difference over the last axis."""
    pp, pt = value_of(p_predict), value_of(p_true)
    if pp.shape != pt.shape:
        raise DimensionError(f"mse: {pp.shape} vs {pt.shape}")
    n = pp.shape[-1]
    diff = pp - pt
    per = (diff * diff).sum(axis=-1) / n
    batch = per.size
    out = per.mean() if reduce else per

    def vjp(g):
        g = np.asarray(g)
        if reduce:
            g = np.broadcast_to(g / batch, per.shape)
        gp = 2.0 * diff / n * g[..., None]
        return gp, -gp

    return _wrap(np.asarray(out), (p_predict, p_true), vjp)
