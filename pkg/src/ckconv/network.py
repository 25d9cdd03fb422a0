"""Two-stage hierarchical CKConv classifier."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conv import CKConvLayer
from .layers import Linear, activate
from .pointcloud import PointCloud, farthest_point_sampling, group_neighbors
from .tensor import Tensor, exp, log, reduce_max, reduce_sum


@dataclass
class StageConfig:
    centers: int
    radius: float
    neighbors: int
    c_in: int
    c_out: int
    v: int = 4
    norm: str = "st"
    lsa: bool = True


@dataclass
class ClassifierConfig:
    stages: list[StageConfig] = field(default_factory=lambda: [
        StageConfig(128, 0.25, 16, 1, 32),
        StageConfig(32, 0.5, 16, 32, 64),
    ])
    head: list[int] = field(default_factory=lambda: [32])
    dropout: float = 0.5
    classes: int = 4
    activation: str = "relu"
    kernel_hidden: tuple[int, int] = (32, 32)
    lsa_depth: int = 1
    lsa_zero_init: bool = True
    # the output layer starts small so an untrained model predicts near-uniform
    head_init_scale: float = 0.01

    def validate(self) -> None:
        if not self.stages:
            raise ValueError("at least one stage is required")
        for a, b in zip(self.stages[:-1], self.stages[1:]):
            if a.c_out != b.c_in:
                raise ValueError(f"stage channels do not chain: {a.c_out} -> {b.c_in}")
            if b.centers > a.centers:
                raise ValueError("a later stage cannot have more centres than the one before")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must be in [0, 1)")
        if self.classes < 2:
            raise ValueError("need at least two classes")


@dataclass
class StagePlan:
    """Sampled structure of one stage: centre rows, neighbour rows, relative offsets."""

    centers: np.ndarray  # [Mc] rows of the previous level
    neighbors: np.ndarray  # [Mc, N]
    relative: np.ndarray  # [Mc, N, 3]


class Classifier:
    def __init__(self, config: ClassifierConfig, rng: np.random.Generator):
        config.validate()
        self.config = config
        *stage_rngs, head_rng = rng.spawn(len(config.stages) + 1)
        self.stages = [
            CKConvLayer.create(
                stage_rngs[i], s.c_in, s.c_out, s.v, s.norm, s.lsa, config.kernel_hidden, config.activation,
                config.lsa_depth, config.lsa_zero_init, s.radius, name=f"stage{i + 1}",
            )
            for i, s in enumerate(config.stages)
        ]
        widths = [config.stages[-1].c_out, *config.head, config.classes]
        self.head = [
            Linear.create(head_rng, a, b, config.activation if i < len(widths) - 2 else "none", f"head.{i}")
            for i, (a, b) in enumerate(zip(widths[:-1], widths[1:]))
        ]
        last = self.head[-1]
        last.weight.data = last.weight.data * config.head_init_scale
        last.bias.data = last.bias.data * config.head_init_scale

    def named_parameters(self) -> dict[str, Tensor]:
        params = [p for st in self.stages for p in st.parameters()]
        params += [p for layer in self.head for p in layer.parameters()]
        return {p.name: p for p in params}

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


def initial_features(cloud: PointCloud) -> np.ndarray:
    """Per-point input features: the cloud's own channels, else a single ones channel."""
    if cloud.features is not None and cloud.features.shape[1] > 0:
        return cloud.features
    return np.ones((len(cloud), 1))


def plan_sampling(config: ClassifierConfig, cloud: PointCloud, rng: np.random.Generator) -> list[StagePlan]:
    plans = []
    positions = cloud.positions
    for s in config.stages:
        centers = farthest_point_sampling(positions, s.centers, rng)
        idx, rel = group_neighbors(positions, centers, s.radius, s.neighbors, rng)
        plans.append(StagePlan(centers, idx, rel))
        positions = positions[centers]
    return plans


def classify_batch(model: Classifier, clouds: list[PointCloud], rng: np.random.Generator,
                   train_mode: bool = False, plans: list[list[StagePlan]] | None = None) -> Tensor:
    """Logits ``[B, classes]``.

    Sampling for each cloud is drawn from ``rng`` in cloud order (all stages
    of one cloud before the next); the dropout mask is drawn last.
    """
    cfg = model.config
    if plans is None:
        plans = [plan_sampling(cfg, c, rng) for c in clouds]
    feats = Tensor(np.concatenate([initial_features(c) for c in clouds]))
    sizes = [len(c) for c in clouds]
    for si, layer in enumerate(model.stages):
        offsets = np.cumsum([0] + sizes[:-1])
        idx = np.concatenate([p[si].neighbors + off for p, off in zip(plans, offsets)])
        rel = np.concatenate([p[si].relative for p in plans])
        feats = activate(layer.forward_grouped(rel, idx, feats), cfg.activation)
        sizes = [len(p[si].centers) for p in plans]
    bsz = len(clouds)
    pooled = reduce_max(feats.reshape(bsz, sizes[0], feats.shape[-1]), axis=1)
    x = pooled
    for i, layer in enumerate(model.head):
        x = layer(x)
        if train_mode and cfg.dropout > 0 and i < len(model.head) - 1:
            keep = 1.0 - cfg.dropout
            mask = (rng.random(x.shape) < keep) / keep
            x = x * mask
    return x


def classify_forward(model: Classifier, cloud: PointCloud, rng: np.random.Generator,
                     train_mode: bool = False, plan: list[StagePlan] | None = None) -> Tensor:
    logits = classify_batch(model, [cloud], rng, train_mode, None if plan is None else [plan])
    return logits.reshape(model.config.classes)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean of ``-log softmax(logits)[label]`` over the batch; accepts ``[K]`` or ``[B, K]``."""
    if logits.ndim == 1:
        logits = logits.reshape(1, -1)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.intp))
    k = logits.shape[-1]
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels must lie in [0, {k})")
    shift = logits - logits.data.max(axis=1, keepdims=True)
    lse = log(reduce_sum(exp(shift), axis=1, keepdims=True))
    onehot = np.zeros(logits.shape)
    onehot[np.arange(len(labels)), labels] = 1.0
    picked = reduce_sum((shift - lse) * onehot)
    return picked * (-1.0 / len(labels))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)
