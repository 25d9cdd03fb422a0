"""Parameterised building blocks shared by the kernel, attention and head."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, relu, tanh

ACTIVATIONS = ("relu", "tanh", "none")


def activate(x: Tensor, kind: str) -> Tensor:
    if kind == "relu":
        return relu(x)
    if kind == "tanh":
        return tanh(x)
    if kind == "none":
        return x
    raise ValueError(f"unknown activation {kind!r}")


def uniform_fan_in(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class Linear:
    weight: Tensor  # [in, out]
    bias: Tensor  # [1, out]
    activation: str = "none"

    @classmethod
    def create(cls, rng, n_in: int, n_out: int, activation: str = "none",
               name: str = "linear", zero: bool = False) -> "Linear":
        if zero:
            w = np.zeros((n_in, n_out))
            b = np.zeros((1, n_out))
        else:
            w = uniform_fan_in(rng, (n_in, n_out), n_in)
            b = uniform_fan_in(rng, (1, n_out), n_in)
        return cls(Tensor(w, True, f"{name}.weight"), Tensor(b, True, f"{name}.bias"), activation)

    @property
    def n_in(self) -> int:
        return self.weight.shape[0]

    @property
    def n_out(self) -> int:
        return self.weight.shape[1]

    def __call__(self, x: Tensor) -> Tensor:
        return activate(x @ self.weight + self.bias, self.activation)

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]


@dataclass
class MLP:
    """Row-wise (shared) multilayer perceptron over a ``[rows, features]`` input."""

    layers: list[Linear] = field(default_factory=list)

    @classmethod
    def create(cls, rng, widths: list[int], activation: str, final_activation: str,
               name: str = "mlp", zero: bool = False) -> "MLP":
        layers = []
        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            act = final_activation if i == len(widths) - 2 else activation
            layers.append(Linear.create(rng, a, b, act, f"{name}.{i}", zero=zero))
        return cls(layers)

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x

    @property
    def n_out(self) -> int:
        return self.layers[-1].n_out

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]
