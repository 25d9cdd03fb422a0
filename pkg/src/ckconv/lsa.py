"""Local set attention.

One attention cube per local point set, computed from the max-pooled
intermediate kernel features and applied as ``(1 + A) * voxel`` with the
cube repeated over channels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import MLP
from .tensor import DimensionError, Tensor, reduce_max


@dataclass
class LsaHead:
    head: MLP
    v: int

    @classmethod
    def create(cls, rng, hidden: int, v: int, depth: int = 1, activation: str = "relu",
               zero_init: bool = True, name: str = "lsa") -> "LsaHead":
        """Build the attention head; with ``zero_init`` the layer starts at ``A = 0``.

        Only the last layer is zeroed when ``depth > 1`` so the earlier
        layers still receive gradient.
        """
        widths = [hidden] * depth + [v ** 3]
        head = MLP.create(rng, widths, activation, "none", f"{name}.head")
        if zero_init:
            last = head.layers[-1]
            last.weight.data = np.zeros_like(last.weight.data)
            last.bias.data = np.zeros_like(last.bias.data)
        return cls(head, v)

    def parameters(self) -> list[Tensor]:
        return self.head.parameters()


def lsa_forward(params: LsaHead, intermediate: Tensor) -> Tensor:
    """Max-pool ``[..., N, h]`` over the neighbour axis and map to a cube ``[..., v, v, v]``."""
    pooled = reduce_max(intermediate, axis=-2)
    lead = pooled.shape[:-1]
    flat = pooled.reshape(-1, pooled.shape[-1])
    v = params.v
    return params.head(flat).reshape(*lead, v, v, v)


def apply_attention(voxel: Tensor, attention: Tensor) -> Tensor:
    """``out[..., i, j, k, c] = (1 + A[..., i, j, k]) * voxel[..., i, j, k, c]``."""
    if voxel.shape[:-1] != attention.shape:
        raise DimensionError(f"attention {attention.shape} does not match voxel grid {voxel.shape[:-1]}")
    gate = attention.reshape(*attention.shape, 1) + 1.0
    return gate * voxel
