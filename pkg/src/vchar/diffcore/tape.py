"""Reverse-mode gradient recording over numpy arrays.

Every differentiable op in :mod:`vchar.diffcore` accepts either plain arrays or
:class:`Var` handles. When at least one input is a ``Var`` the op records a
vector-Jacobian product on that variable's tape and returns a new ``Var``;
with plain arrays it simply returns an array. The same function therefore
serves the analytic path (on a tape) and the finite-difference path (off it).
"""
from __future__ import annotations

from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from ..errors import NumericError


class Var:
    """Handle to an array recorded on a :class:`GradientTape`."""

    __slots__ = ("value", "tape", "index")

    def __init__(self, value: np.ndarray, tape: "GradientTape", index: int):
        self.value = value
        self.tape = tape
        self.index = index

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(shape={self.value.shape}, index={self.index})"


VJP = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class GradientTape:
    """Linear record of ops; ``gradient`` walks it backwards once."""

    def __init__(self):
        self._values: list[np.ndarray] = []
        self._inputs: list[tuple] = []
        self._vjps: list[VJP | None] = []

    def __len__(self):
        return len(self._values)

    def watch(self, value) -> Var:
        value = np.asarray(value, dtype=np.float64)
        return self._push(value, (), None)

    def watch_params(self, params: Mapping[str, np.ndarray]) -> dict[str, Var]:
        return {name: self.watch(arr) for name, arr in params.items()}

    def record(self, value: np.ndarray, inputs: tuple, vjp: VJP) -> Var:
        return self._push(value, inputs, vjp)

    def _push(self, value, inputs, vjp) -> Var:
        var = Var(value, self, len(self._values))
        self._values.append(value)
        self._inputs.append(inputs)
        self._vjps.append(vjp)
        return var

    def backward(self, out: Var, seed=None) -> list:
        """Return a list of gradients indexed by variable position (None if unreached)."""
        if out.tape is not self:
            raise ValueError("output was not recorded on this tape")
        grads: list = [None] * len(self._values)
        if seed is None:
            if out.value.size != 1:
                raise ValueError("seed gradient required for non-scalar output")
            seed = np.ones_like(out.value)
        grads[out.index] = np.asarray(seed, dtype=np.float64)
        for i in range(out.index, -1, -1):
            g = grads[i]
            vjp = self._vjps[i]
            if g is None or vjp is None:
                continue
            inputs = self._inputs[i]
            for inp, gi in zip(inputs, vjp(g)):
                if not isinstance(inp, Var) or gi is None:
                    continue
                j = inp.index
                if grads[j] is None:
                    grads[j] = gi
                else:
                    grads[j] = grads[j] + gi
        return grads

    def gradient(self, out: Var, watched: Mapping[str, Var], seed=None) -> dict[str, np.ndarray]:
        grads = self.backward(out, seed)
        result = {}
        for name, var in watched.items():
            g = grads[var.index]
            result[name] = np.zeros_like(var.value) if g is None else g
        return result


def tape_of(*xs) -> GradientTape | None:
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    return None


def value_of(x) -> np.ndarray:
    if isinstance(x, Var):
        return x.value
    return np.asarray(x, dtype=np.float64)


def check_finite(arrays: Iterable[np.ndarray], what: str = "array") -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericError(f"non-finite values in {what}")
