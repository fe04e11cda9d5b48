from __future__ import annotations

from collections.abc import Mapping
from typing import Iterator

import numpy as np

from ..errors import DimensionError, NumericError


def as_dense(x, name: str = "array") -> np.ndarray:
    """Validate ``x`` as a finite float64 array (the package's dense array type)."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim and 0 in a.shape:
        raise DimensionError(f"{name} has an empty dimension {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericError(f"{name} contains non-finite values")
    return a


class ParamStore(Mapping):
    """Ordered, read-only mapping of parameter name to float64 array.

    Stores are treated as immutable snapshots: updates produce a new store via
    :meth:`replace`. ``seed`` records the generator seed used at initialisation.
    """

    def __init__(self, arrays: Mapping[str, np.ndarray], seed: int | None = None):
        self._arrays = {}
        for name, arr in arrays.items():
            a = as_dense(arr, name).copy()
            a.setflags(write=False)
            self._arrays[name] = a
        self.seed = seed

    def __getitem__(self, name):
        return self._arrays[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._arrays)

    def __len__(self):
        return len(self._arrays)

    def __repr__(self):
        return f"{type(self).__name__}({len(self)} arrays, {self.size} values, seed={self.seed})"

    @property
    def size(self) -> int:
        return int(sum(a.size for a in self._arrays.values()))

    def replace(self, arrays: Mapping[str, np.ndarray]) -> "ParamStore":
        """Copy of this store with the given arrays swapped in (same names and shapes)."""
        merged = dict(self._arrays)
        for name, arr in arrays.items():
            if name not in merged:
                raise KeyError(name)
            if np.shape(arr) != merged[name].shape:
                raise DimensionError(f"{name}: shape {np.shape(arr)} != {merged[name].shape}")
            merged[name] = arr
        new = type(self).__new__(type(self))
        new.__dict__.update(self.__dict__)
        ParamStore.__init__(new, merged, self.seed)
        return new

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self._arrays.values()])

    def equals(self, other: "ParamStore") -> bool:
        """Bit-exact comparison of names, shapes and values."""
        if list(self) != list(other):
            return False
        return all(self[k].shape == other[k].shape and self[k].tobytes() == other[k].tobytes()
                   for k in self)


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)
