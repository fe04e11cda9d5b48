from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .tape import GradientTape, Var, value_of


def analytic_grad(fn: Callable, point: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    tape = GradientTape()
    watched = tape.watch_params(point)
    out = fn(watched)
    if not isinstance(out, Var):
        # fn ignored every parameter
        return {k: np.zeros_like(np.asarray(v, dtype=float)) for k, v in point.items()}
    return tape.gradient(out, watched)


def numeric_grad(fn: Callable, point: Mapping[str, np.ndarray], h: float = 1e-5,
                 coords: dict | None = None) -> dict[str, np.ndarray]:
    """Central differences; ``coords`` optionally limits which flat indices are probed."""
    base = {k: np.array(v, dtype=np.float64) for k, v in point.items()}
    grads = {}
    for name, arr in base.items():
        g = np.full(arr.shape, np.nan)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        idx = range(flat.size) if coords is None else coords[name]
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            up = float(value_of(fn(base)))
            flat[i] = orig - h
            down = float(value_of(fn(base)))
            flat[i] = orig
            gflat[i] = (up - down) / (2 * h)
        grads[name] = g
    return grads


def grad_check(fn: Callable, point: Mapping[str, np.ndarray], h: float = 1e-5,
               max_coords: int | None = None, seed: int = 0) -> float:
    """Max over coordinates of ``|analytic - numeric| / max(1, |numeric|)``.

    ``fn`` maps a name -> array (or tape variable) mapping to a scalar built
    from :mod:`vchar.diffcore` ops. With ``max_coords`` only that many randomly
    chosen coordinates per parameter are finite-differenced.
    """
    ana = analytic_grad(fn, point)
    coords = None
    if max_coords is not None:
        rng = np.random.default_rng(seed)
        coords = {}
        for name, arr in point.items():
            n = np.size(arr)
            coords[name] = np.sort(rng.choice(n, size=min(n, max_coords), replace=False))
    num = numeric_grad(fn, point, h, coords)
    worst = 0.0
    for name in point:
        a = ana[name].reshape(-1)
        n = num[name].reshape(-1)
        probed = ~np.isnan(n)
        if not probed.any():
            continue
        err = np.abs(a[probed] - n[probed]) / np.maximum(1.0, np.abs(n[probed]))
        worst = max(worst, float(err.max()))
    return worst
