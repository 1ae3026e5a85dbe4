"""Parameter containers and the pinned initialisation scheme."""

from __future__ import annotations

from collections import OrderedDict
from typing import Iterator

import numpy as np

from .core import Tensor


class Parameter(Tensor):
    """A trainable leaf tensor. ``kind`` selects its initialiser."""

    __slots__ = ("kind", "fan_in")

    def __init__(self, shape, kind: str = "weight", fan_in: int | None = None, dtype=np.float32):
        super().__init__(np.zeros(shape, dtype=dtype), requires_grad=True)
        self.kind = kind  # "weight" | "bias" | "ones"
        self.fan_in = fan_in if fan_in is not None else int(np.prod(shape[1:])) if len(shape) > 1 else shape[0]


class Module:
    """Attribute-registered tree of parameters and sub-modules.

    Registration order (assignment order in ``__init__``) fixes both the
    parameter naming and the order in which initial values are drawn.
    """

    def __init__(self):
        object.__setattr__(self, "_params", OrderedDict())
        object.__setattr__(self, "_children", OrderedDict())

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        elif isinstance(value, (list, tuple)) and value and all(isinstance(v, Module) for v in value):
            for i, v in enumerate(value):
                self._children[f"{name}.{i}"] = v
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, p in self._params.items():
            yield prefix + name, p
        for name, child in self._children.items():
            yield from child.named_parameters(prefix + name + ".")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((n, p.data) for n, p in self.named_parameters())

    def load_state_dict(self, state) -> None:
        from ..errors import ConfigurationError

        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise ConfigurationError(
                f"parameter set mismatch: missing {sorted(missing)[:5]}, unexpected {sorted(extra)[:5]}"
            )
        for name, p in own.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise ConfigurationError(f"parameter {name}: checkpoint shape {arr.shape} != model shape {p.shape}")
            p.data = np.ascontiguousarray(arr.astype(p.dtype))

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def to_dtype(self, dtype) -> "Module":
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        return self

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


def init_parameters(module: Module, rng: np.random.Generator) -> None:
    """Weights ~ U(-s, s), s = sqrt(6 / fan_in); biases zero; norm gains one."""
    for _, p in module.named_parameters():
        if p.kind == "weight":
            s = np.sqrt(6.0 / p.fan_in)
            p.data = rng.uniform(-s, s, size=p.shape).astype(p.dtype)
        elif p.kind == "ones":
            p.data = np.ones(p.shape, dtype=p.dtype)
        else:
            p.data = np.zeros(p.shape, dtype=p.dtype)
        p.grad = None
