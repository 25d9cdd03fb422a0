"""Cubic kernel function: relative position -> ``v**3`` weights, plus weight normalisation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import MLP
from .tensor import Tensor, reduce_mean, reduce_sum, sqrt

NORMALIZATIONS = ("none", "l2", "st")
GUARD = 1e-12


@dataclass
class CubicKernel:
    """Shared front MLP (3 -> h1 -> h2) followed by a linear head (h2 -> v**3).

    The front output doubles as the intermediate feature consumed by local
    set attention.
    """

    front: MLP
    head: MLP
    v: int

    @classmethod
    def create(cls, rng, v: int = 4, hidden=(32, 32), activation: str = "relu",
               name: str = "kernel") -> "CubicKernel":
        if v < 1:
            raise ValueError("kernel unit size v must be >= 1")
        front = MLP.create(rng, [3, *hidden], activation, activation, f"{name}.front")
        head = MLP.create(rng, [hidden[-1], v ** 3], "none", "none", f"{name}.head")
        return cls(front, head, v)

    @property
    def hidden(self) -> int:
        return self.front.n_out

    def parameters(self) -> list[Tensor]:
        return self.front.parameters() + self.head.parameters()

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())


def kernel_forward(kernel: CubicKernel, relative) -> tuple[Tensor, Tensor]:
    """Apply the kernel row-wise to relative positions of shape ``[..., 3]``.

    Returns ``(weights [..., v**3], intermediate [..., h2])``.
    """
    rel = relative if isinstance(relative, Tensor) else Tensor(relative)
    lead = rel.shape[:-1]
    flat = rel.reshape(-1, 3)
    inter = kernel.front(flat)
    weights = kernel.head(inter)
    return weights.reshape(*lead, kernel.v ** 3), inter.reshape(*lead, kernel.hidden)


def norm_l2(w: Tensor) -> Tensor:
    """Divide each row (last axis) by its Euclidean norm.

    Rows whose norm is below ``GUARD`` pass through unchanged.
    """
    sumsq = reduce_sum(w * w, axis=-1, keepdims=True)
    ok = (np.sqrt(sumsq.data) >= GUARD).astype(np.float64)
    norm = sqrt(sumsq * ok + (1.0 - ok))
    return w / norm


def norm_st(w: Tensor) -> Tensor:
    """Standardise each row to zero mean and unit population std.

    Rows whose std is below ``GUARD`` become all zeros.
    """
    centered = w - reduce_mean(w, axis=-1, keepdims=True)
    var = reduce_mean(centered * centered, axis=-1, keepdims=True)
    ok = (np.sqrt(var.data) >= GUARD).astype(np.float64)
    sigma = sqrt(var * ok + (1.0 - ok))
    return centered / sigma * ok


def normalize(w: Tensor, kind: str) -> Tensor:
    if kind == "none":
        return w
    if kind == "l2":
        return norm_l2(w)
    if kind == "st":
        return norm_st(w)
    raise ValueError(f"unknown normalization {kind!r}; expected one of {NORMALIZATIONS}")
