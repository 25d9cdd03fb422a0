"""CKConv layer: cubic point convolution, attention, and the 3D convolution head.

Voxel features are stored as ``[..., v, v, v, C]`` in row-major order, so
voxel ``(i, j, k)`` sits at flat row ``(i * v + j) * v + k`` of the
``[v**3, C]`` view.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .kernel import NORMALIZATIONS, CubicKernel, kernel_forward, normalize
from .layers import activate, uniform_fan_in
from .lsa import LsaHead, apply_attention, lsa_forward
from .pointcloud import group_neighbors
from .tensor import DimensionError, Tensor, matmul, take, transpose

# kernel sizes of the valid convolutions that collapse v -> 1
CONV_PLANS = {1: (1,), 2: (2,), 3: (3,), 4: (3, 2), 5: (3, 3)}


def conv_plan(v: int) -> tuple[int, ...]:
    if v in CONV_PLANS:
        return CONV_PLANS[v]
    # generic fallback: as many k=3 steps as fit, then one closing kernel
    plan, size = [], v
    while size > 3:
        plan.append(3)
        size -= 2
    plan.append(size)
    return tuple(plan)


def point_conv(weights: Tensor, feats: Tensor, v: int | None = None) -> Tensor:
    """``voxels[..., i, j, k, c] = sum_n weights[..., n, flat(i, j, k)] * feats[..., n, c]``."""
    if weights.shape[:-1] != feats.shape[:-1]:
        raise DimensionError(f"weights {weights.shape} and features {feats.shape} disagree on neighbours")
    v3 = weights.shape[-1]
    if v is None:
        v = round(v3 ** (1.0 / 3.0))
    if v ** 3 != v3:
        raise DimensionError(f"weight rows of length {v3} are not a v**3 cube")
    axes = tuple(range(weights.ndim - 2)) + (weights.ndim - 1, weights.ndim - 2)
    out = matmul(transpose(weights, axes), feats)
    return out.reshape(*out.shape[:-2], v, v, v, feats.shape[-1])


@lru_cache(maxsize=None)
def _im2col_index(v_in: int, k: int) -> np.ndarray:
    """``[P, k**3]`` flat input voxel for every (output position, kernel offset)."""
    v_out = v_in - k + 1
    s = np.arange(v_out)
    d = np.arange(k)
    a, b, c = np.meshgrid(s, s, s, indexing="ij")
    da, db, dc = np.meshgrid(d, d, d, indexing="ij")
    rows = ((a.reshape(-1, 1) + da.reshape(1, -1)) * v_in
            + (b.reshape(-1, 1) + db.reshape(1, -1))) * v_in + (c.reshape(-1, 1) + dc.reshape(1, -1))
    rows.setflags(write=False)
    return rows


@dataclass
class Conv3dLayer:
    """Valid 3D cross-correlation; ``kernel`` is ``(k, k, k, C_in, C_out)`` flattened to rows."""

    kernel: Tensor  # [k**3 * C_in, C_out]
    bias: Tensor  # [1, C_out]
    k: int
    c_in: int
    c_out: int
    activation: str = "none"

    def kernel5d(self) -> np.ndarray:
        return self.kernel.data.reshape(self.k, self.k, self.k, self.c_in, self.c_out)

    def __call__(self, x: Tensor) -> Tensor:
        # x: [B, v, v, v, C_in]
        bsz, v_in = x.shape[0], x.shape[1]
        if v_in < self.k:
            raise DimensionError(f"kernel size {self.k} exceeds spatial size {v_in}")
        if x.shape[-1] != self.c_in:
            raise DimensionError(f"expected {self.c_in} input channels, got {x.shape[-1]}")
        v_out = v_in - self.k + 1
        cols = take(x.reshape(bsz, v_in ** 3, self.c_in), _im2col_index(v_in, self.k), axis=1)
        y = cols.reshape(bsz * v_out ** 3, self.k ** 3 * self.c_in) @ self.kernel + self.bias
        y = activate(y, self.activation)
        return y.reshape(bsz, v_out, v_out, v_out, self.c_out)

    def parameters(self) -> list[Tensor]:
        return [self.kernel, self.bias]


@dataclass
class Conv3dStack:
    layers: list[Conv3dLayer] = field(default_factory=list)
    v: int = 4

    @classmethod
    def create(cls, rng, v: int, c_in: int, c_out: int, activation: str = "relu",
               name: str = "conv3d") -> "Conv3dStack":
        """Channels go ``c_in -> max(c_in, c_out // 2) -> ... -> c_out``."""
        plan = conv_plan(v)
        mid = max(c_in, c_out // 2)
        chans = [c_in] + [mid] * (len(plan) - 1) + [c_out]
        layers = []
        for i, k in enumerate(plan):
            a, b = chans[i], chans[i + 1]
            fan_in = k ** 3 * a
            last = i == len(plan) - 1
            layers.append(Conv3dLayer(
                Tensor(uniform_fan_in(rng, (fan_in, b), fan_in), True, f"{name}.{i}.kernel"),
                Tensor(uniform_fan_in(rng, (1, b), fan_in), True, f"{name}.{i}.bias"),
                k, a, b, "none" if last else activation,
            ))
        return cls(layers, v)

    @property
    def c_out(self) -> int:
        return self.layers[-1].c_out

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())


def conv3d_forward(stack: Conv3dStack, voxel: Tensor) -> Tensor:
    """Map ``[..., v, v, v, C_in]`` to ``[..., C_out]``."""
    if voxel.ndim < 4:
        raise DimensionError(f"voxel feature must be [..., v, v, v, C], got {voxel.shape}")
    lead = voxel.shape[:-4]
    x = voxel.reshape(-1, *voxel.shape[-4:])
    for layer in stack.layers:
        x = layer(x)
    if x.shape[1:4] != (1, 1, 1):
        raise DimensionError(f"conv stack ended at spatial size {x.shape[1:4]}, not 1x1x1")
    return x.reshape(*lead, stack.c_out)


@dataclass
class CKConvLayer:
    kernel: CubicKernel
    conv: Conv3dStack
    lsa: LsaHead | None = None
    norm: str = "st"
    # kernel input is relative / radius when set, so the MLP sees offsets in the unit ball
    radius: float | None = None

    @classmethod
    def create(cls, rng, c_in: int, c_out: int, v: int = 4, norm: str = "st", lsa: bool = True,
               hidden=(32, 32), activation: str = "relu", lsa_depth: int = 1,
               lsa_zero_init: bool = True, radius: float | None = None,
               name: str = "ckconv") -> "CKConvLayer":
        if norm not in NORMALIZATIONS:
            raise ValueError(f"unknown normalization {norm!r}")
        # independent streams: toggling LSA must not shift the other draws
        k_rng, l_rng, c_rng = rng.spawn(3)
        kernel = CubicKernel.create(k_rng, v, hidden, activation, f"{name}.kernel")
        head = (LsaHead.create(l_rng, hidden[-1], v, lsa_depth, activation, lsa_zero_init, f"{name}.lsa")
                if lsa else None)
        conv = Conv3dStack.create(c_rng, v, c_in, c_out, activation, f"{name}.conv3d")
        return cls(kernel, conv, head, norm, radius)

    @property
    def v(self) -> int:
        return self.kernel.v

    @property
    def c_in(self) -> int:
        return self.conv.layers[0].c_in

    @property
    def c_out(self) -> int:
        return self.conv.c_out

    def parameters(self) -> list[Tensor]:
        params = self.kernel.parameters()
        if self.lsa is not None:
            params += self.lsa.parameters()
        return params + self.conv.parameters()

    def voxelize(self, relative: np.ndarray, neighbor_feats: Tensor) -> Tensor:
        """Kernel, normalisation, point convolution and attention for ``[Mc, N, .]`` inputs."""
        if self.radius is not None:
            relative = relative / self.radius
        weights, inter = kernel_forward(self.kernel, relative)
        weights = normalize(weights, self.norm)
        voxel = point_conv(weights, neighbor_feats, self.v)
        if self.lsa is not None:
            voxel = apply_attention(voxel, lsa_forward(self.lsa, inter))
        return voxel

    def forward_grouped(self, relative: np.ndarray, neighbor_idx: np.ndarray, feats: Tensor) -> Tensor:
        """Apply the layer to pre-grouped local point sets.

        ``relative`` is ``[Mc, N, 3]`` and ``neighbor_idx`` ``[Mc, N]`` rows
        into ``feats [M, C_in]``.  Neighbours are put in a canonical order
        (lexicographic on relative position) first: the layer is
        mathematically order-free, and fixing the summation order makes it
        bitwise order-free too.
        """
        relative = np.asarray(relative, dtype=np.float64)
        neighbor_idx = np.asarray(neighbor_idx, dtype=np.intp)
        if feats.shape[-1] != self.c_in:
            raise DimensionError(f"layer expects {self.c_in} input channels, got {feats.shape[-1]}")
        order = np.lexsort((neighbor_idx, relative[..., 2], relative[..., 1], relative[..., 0]), axis=-1)
        neighbor_idx = np.take_along_axis(neighbor_idx, order, axis=-1)
        relative = np.take_along_axis(relative, order[..., None], axis=-2)
        neighbor_feats = take(feats, neighbor_idx, axis=0)
        return conv3d_forward(self.conv, self.voxelize(relative, neighbor_feats))


def ckconv_forward(layer: CKConvLayer, positions: np.ndarray, feats: Tensor, centers,
                   r: float, n: int, rng: np.random.Generator) -> Tensor:
    """Group ``n`` neighbours within ``r`` of each centre and apply ``layer``.

    Returns ``[len(centers), C_out]`` in centre order.
    """
    positions = np.asarray(positions, dtype=np.float64)
    feats = feats if isinstance(feats, Tensor) else Tensor(feats)
    idx, rel = group_neighbors(positions, np.asarray(centers, dtype=np.intp), r, n, rng)
    return layer.forward_grouped(rel, idx, feats)
