"""Named parameter store with freeze flags and init helpers."""

from __future__ import annotations

import fnmatch

import numpy as np

from ..errors import ShapeError, TrainingError
from .tensor import Tensor


class ParamStore:
    """Ordered name -> Tensor map; each entry carries a trainable flag."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._trainable: dict[str, bool] = {}

    def add(self, name: str, values: np.ndarray, trainable: bool = True) -> Tensor:
        if name in self._params:
            raise TrainingError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(values, dtype=np.float32), requires_grad=True)
        self._params[name] = t
        self._trainable[name] = trainable
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def is_trainable(self, name: str) -> bool:
        return self._trainable[name]

    def set_trainable(self, name: str, flag: bool):
        self._trainable[name] = flag

    def trainable_items(self):
        return [(n, t) for n, t in self._params.items() if self._trainable[n]]

    def n_scalars(self) -> int:
        return sum(t.data.size for t in self._params.values())

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def freeze(self, patterns: list[str]) -> int:
        """Mark params matching any glob pattern non-trainable; returns count."""
        count = 0
        for name in self._params:
            if any(fnmatch.fnmatchcase(name, p) for p in patterns):
                if self._trainable[name]:
                    count += 1
                self._trainable[name] = False
        return count

    def astype(self, dtype) -> "ParamStore":
        """Copy with a different dtype (float64 for gradient checking)."""
        out = ParamStore()
        for name, t in self._params.items():
            copy = Tensor(t.data.astype(dtype), requires_grad=True)
            out._params[name] = copy
            out._trainable[name] = self._trainable[name]
        return out

    def load_values(self, values: dict[str, np.ndarray]):
        """Overwrite parameter data in place; shapes must match."""
        for name, arr in values.items():
            if name not in self._params:
                raise ShapeError(f"unknown parameter {name!r}")
            if self._params[name].data.shape != arr.shape:
                raise ShapeError(
                    f"parameter {name!r}: stored shape {arr.shape} vs expected {self._params[name].data.shape}"
                )
            self._params[name].data = arr.astype(self._params[name].data.dtype)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self._params.items()}


def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    """Normal(0, std) truncated at +-2 std by redraw."""
    out = rng.standard_normal(shape) * std
    bad = np.abs(out) > 2 * std
    while np.any(bad):
        out[bad] = rng.standard_normal(int(bad.sum())) * std
        bad = np.abs(out) > 2 * std
    return out
