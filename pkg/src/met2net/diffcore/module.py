"""Minimal module container: attribute-discovered parameters with dotted paths."""

from __future__ import annotations

import copy
from typing import Iterator

import numpy as np

from .tensor import Parameter


class Module:
    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, value in vars(self).items():
            yield from _walk(value, f"{prefix}{name}")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def assign_paths(self, prefix: str = "") -> None:
        for path, p in self.named_parameters(prefix):
            p.path = path

    def set_trainable(self, flag: bool) -> None:
        for p in self.parameters():
            p.set_trainable(flag)

    def clone(self) -> "Module":
        twin = copy.deepcopy(self)
        for p in twin.parameters():
            p.data = p.data.copy()
            p.zero_grad()
        return twin

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _walk(value, path: str):
    if isinstance(value, Parameter):
        yield path, value
    elif isinstance(value, Module):
        yield from value.named_parameters(path + ".")
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _walk(item, f"{path}.{i}")


def kaiming_normal(rng: np.random.Generator, shape, fan_in: int, dtype, gain: float = 2.0) -> np.ndarray:
    std = np.sqrt(gain / max(fan_in, 1))
    return (rng.standard_normal(shape) * std).astype(dtype)
