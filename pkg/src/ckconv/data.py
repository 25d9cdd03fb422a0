"""Procedural labelled shapes: sphere, cube, cylinder, torus.

Points are drawn uniformly over the surface area of each primitive, jittered
with isotropic Gaussian noise, then centred on their mean and scaled so the
farthest point sits at radius 1.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .pointcloud import PointCloud, read_cloud, write_cloud

CLASSES = ("sphere", "cube", "cylinder", "torus")
TORUS_MAJOR = 1.0
TORUS_MINOR = 0.4


@dataclass
class ShapeSpec:
    shape: str
    points: int = 512
    noise: float = 0.01
    seed: int = 0
    normals: bool = False

    def __post_init__(self):
        if self.shape not in CLASSES:
            raise ValueError(f"unknown shape {self.shape!r}; expected one of {CLASSES}")
        if self.points < 32:
            raise ValueError("need at least 32 points per cloud")
        if self.noise < 0:
            raise ValueError("noise must be non-negative")

    @property
    def label(self) -> int:
        return CLASSES.index(self.shape)


def sample_sphere(rng, m):
    p = rng.normal(size=(m, 3))
    p /= np.linalg.norm(p, axis=1, keepdims=True)
    return p, p.copy()


def sample_cube(rng, m, half=1.0):
    # all six faces have equal area
    face = rng.integers(6, size=m)
    axis, sign = face // 2, np.where(face % 2 == 0, 1.0, -1.0)
    p = rng.uniform(-half, half, size=(m, 3))
    rows = np.arange(m)
    p[rows, axis] = sign * half
    n = np.zeros((m, 3))
    n[rows, axis] = sign
    return p, n


def sample_cylinder(rng, m, radius=1.0, half_height=1.0):
    lateral = 2 * np.pi * radius * 2 * half_height
    caps = 2 * np.pi * radius ** 2
    on_side = rng.random(m) < lateral / (lateral + caps)
    theta = rng.uniform(0, 2 * np.pi, size=m)
    rad = np.where(on_side, radius, radius * np.sqrt(rng.random(m)))
    top = rng.random(m) < 0.5
    z = np.where(on_side, rng.uniform(-half_height, half_height, size=m),
                 np.where(top, half_height, -half_height))
    p = np.stack([rad * np.cos(theta), rad * np.sin(theta), z], axis=1)
    n = np.where(on_side[:, None],
                 np.stack([np.cos(theta), np.sin(theta), np.zeros(m)], axis=1),
                 np.stack([np.zeros(m), np.zeros(m), np.where(top, 1.0, -1.0)], axis=1))
    return p, n


def sample_torus(rng, m, major=TORUS_MAJOR, minor=TORUS_MINOR):
    # area element is proportional to (major + minor * cos(theta)); accept-reject on theta
    thetas = []
    need = m
    while need > 0:
        t = rng.uniform(0, 2 * np.pi, size=2 * need)
        u = rng.random(2 * need)
        t = t[u < (major + minor * np.cos(t)) / (major + minor)]
        thetas.append(t[:need])
        need -= len(thetas[-1])
    theta = np.concatenate(thetas)
    phi = rng.uniform(0, 2 * np.pi, size=m)
    ring = major + minor * np.cos(theta)
    p = np.stack([ring * np.cos(phi), ring * np.sin(phi), minor * np.sin(theta)], axis=1)
    n = np.stack([np.cos(theta) * np.cos(phi), np.cos(theta) * np.sin(phi), np.sin(theta)], axis=1)
    return p, n


SAMPLERS = {"sphere": sample_sphere, "cube": sample_cube, "cylinder": sample_cylinder, "torus": sample_torus}


def normalize_unit_sphere(points: np.ndarray) -> np.ndarray:
    centered = points - points.mean(axis=0)
    radius = np.linalg.norm(centered, axis=1).max()
    return centered / radius if radius > 0 else centered


def generate_cloud(spec: ShapeSpec, normalize: bool = True) -> PointCloud:
    rng = np.random.default_rng(spec.seed)
    points, normals = SAMPLERS[spec.shape](rng, spec.points)
    if spec.noise > 0:
        points = points + rng.normal(scale=spec.noise, size=points.shape)
    if normalize:
        points = normalize_unit_sphere(points)
    return PointCloud(points, normals if spec.normals else None, spec.label)


@dataclass
class Dataset:
    train: list[PointCloud] = field(default_factory=list)
    test: list[PointCloud] = field(default_factory=list)
    classes: int = len(CLASSES)


def generate_dataset(classes=CLASSES, train_per_class: int = 50, test_per_class: int = 20,
                     points: int = 512, noise: float = 0.01, seed: int = 0,
                     normals: bool = False) -> Dataset:
    """Balanced train/test splits; each split and each cloud has its own seed stream."""
    if train_per_class < 1 or test_per_class < 1:
        raise ValueError("per-class counts must be >= 1")
    classes = tuple(classes)
    train_ss, test_ss = np.random.SeedSequence(seed).spawn(2)
    splits = []
    for ss, count in ((train_ss, train_per_class), (test_ss, test_per_class)):
        children = ss.spawn(count * len(classes))
        clouds = []
        for i, child in enumerate(children):
            shape = classes[i % len(classes)]
            cloud_seed = int(child.generate_state(2, np.uint64)[0])
            cloud = generate_cloud(ShapeSpec(shape, points, noise, cloud_seed, normals))
            cloud.label = classes.index(shape)
            clouds.append(cloud)
        splits.append(clouds)
    return Dataset(splits[0], splits[1], len(classes))


def cloud_digest(cloud: PointCloud) -> str:
    return hashlib.sha256(np.ascontiguousarray(cloud.positions).tobytes()).hexdigest()


def write_dataset(root: str | Path, dataset: Dataset) -> Path:
    """Write one text file per cloud plus ``manifest.txt`` (``split filename label`` rows)."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    lines = [f"# classes {dataset.classes}"]
    for split, clouds in (("train", dataset.train), ("test", dataset.test)):
        for i, cloud in enumerate(clouds):
            name = f"{split}_{i:05d}.txt"
            write_cloud(root / name, cloud)
            lines.append(f"{split} {name} {cloud.label}")
    manifest = root / "manifest.txt"
    manifest.write_text("\n".join(lines) + "\n")
    return manifest


def read_dataset(root: str | Path) -> Dataset:
    root = Path(root)
    ds = Dataset()
    for line in (root / "manifest.txt").read_text().splitlines():
        if line.startswith("# classes"):
            ds.classes = int(line.split()[2])
            continue
        if not line.strip() or line.startswith("#"):
            continue
        split, name, _ = line.split()
        if split not in ("train", "test"):
            raise ValueError(f"unknown split {split!r} in manifest")
        getattr(ds, split).append(read_cloud(root / name))
    return ds
