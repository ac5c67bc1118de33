"""Named, ordered collections of trainable tensors."""
from __future__ import annotations

from typing import Iterator

import numpy as np

from ..errors import ContractError, DimensionError
from .tensor import Tensor


class ParameterSet:
    """Insertion-ordered mapping of dotted names to trainable tensors.

    ``scope("enc")`` returns a view that reads and writes names under the
    ``enc.`` prefix of the same underlying store, which lets layer
    constructors stay ignorant of where they live in a model.
    """

    def __init__(self, _store: dict | None = None, _prefix: str = ""):
        self._store: dict[str, Tensor] = {} if _store is None else _store
        self._prefix = _prefix

    def _full(self, name: str) -> str:
        return self._prefix + name

    def add(self, name: str, value) -> Tensor:
        full = self._full(name)
        if full in self._store:
            raise ContractError(f"duplicate parameter name {full!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True)
        self._store[full] = t
        return t

    def scope(self, prefix: str) -> "ParameterSet":
        return ParameterSet(self._store, self._full(prefix) + ".")

    def __getitem__(self, name: str) -> Tensor:
        return self._store[self._full(name)]

    def __contains__(self, name: str) -> bool:
        return self._full(name) in self._store

    def named(self) -> Iterator[tuple[str, Tensor]]:
        for name, t in self._store.items():
            if name.startswith(self._prefix):
                yield name, t

    def names(self) -> list[str]:
        return [n for n, _ in self.named()]

    def __iter__(self) -> Iterator[Tensor]:
        return (t for _, t in self.named())

    def __len__(self) -> int:
        return sum(1 for _ in self.named())

    def size(self) -> int:
        return sum(t.data.size for t in self)

    def zero_grad(self) -> None:
        for t in self:
            t.grad = np.zeros_like(t.data)

    def state(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.named()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        names = self.names()
        missing = [n for n in names if n not in state]
        extra = [n for n in state if n not in self._store]
        if missing or extra:
            raise ContractError(f"parameter mismatch: missing={missing[:3]} unexpected={extra[:3]}")
        for name in names:
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != self._store[name].shape:
                raise DimensionError(f"{name}: checkpoint shape {value.shape} "
                                     f"!= model shape {self._store[name].shape}")
            self._store[name].data = value.copy()
