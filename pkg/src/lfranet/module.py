"""Minimal module tree: parameter/buffer registries for composite layers."""

from __future__ import annotations

from typing import Iterator, Tuple

import numpy as np

from .autodiff import Parameter


class Module:
    """Base class tracking parameters, buffers and child modules by attribute."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "_children", {})

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name: str, array: np.ndarray) -> None:
        """Track a non-trainable state array (e.g. batch-norm running stats)."""
        self._buffers[name] = array
        object.__setattr__(self, name, array)

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for name, p in self._params.items():
            yield (f"{prefix}{name}", p)
        for name, child in self._children.items():
            yield from child.named_parameters(prefix=f"{prefix}{name}.")

    def parameters(self) -> Iterator[Parameter]:
        for _, p in self.named_parameters():
            yield p

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        for name, buf in self._buffers.items():
            yield (f"{prefix}{name}", buf)
        for name, child in self._children.items():
            yield from child.named_buffers(prefix=f"{prefix}{name}.")

    def assign_parameter_names(self, prefix: str = "") -> None:
        """Stamp each parameter with its dotted registry path."""
        for name, p in self.named_parameters(prefix):
            p.name = name

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def param_count(self) -> int:
        """Trainable scalar count; buffers (running stats) are excluded."""
        return int(sum(p.size for p in self.parameters() if p.trainable))
