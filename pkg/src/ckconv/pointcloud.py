"""Point-cloud container, neighbourhood queries, subsampling and augmentation.

All queries are brute-force linear scans; clouds at this scale stay below
a few thousand points.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tensor import DomainError


@dataclass
class PointCloud:
    positions: np.ndarray  # [M, 3]
    features: np.ndarray | None = None  # [M, C]
    label: int | None = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise ValueError(f"positions must be [M, 3], got {self.positions.shape}")
        if not np.isfinite(self.positions).all():
            raise ValueError("positions contain NaN or Inf")
        if self.features is not None:
            self.features = np.asarray(self.features, dtype=np.float64)
            if self.features.ndim != 2 or self.features.shape[0] != len(self.positions):
                raise ValueError("features must have one row per point")

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def channels(self) -> int:
        return 0 if self.features is None else self.features.shape[1]

    def permuted(self, perm: np.ndarray) -> "PointCloud":
        feats = None if self.features is None else self.features[perm]
        return PointCloud(self.positions[perm], feats, self.label)


@dataclass
class LocalPointSet:
    """A centre and ``N`` sampled neighbours; ``relative[i] = positions[idx[i]] - center``."""

    center: np.ndarray
    neighbor_indices: np.ndarray
    relative: np.ndarray

    def permuted(self, perm: np.ndarray) -> "LocalPointSet":
        return LocalPointSet(self.center, self.neighbor_indices[perm], self.relative[perm])


def _sq_dist(positions: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Squared distances ``[..., M]``; explicit sum of squares so every caller rounds alike."""
    diff = positions - centers[..., None, :]
    return diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1] + diff[..., 2] * diff[..., 2]


def _select(d2: np.ndarray, r: float, n: int, rng: np.random.Generator) -> np.ndarray:
    cands = np.flatnonzero(d2 < r * r)
    k = cands.size
    if k >= n:
        return rng.choice(cands, n, replace=False)
    if k > 0:
        return np.concatenate([rng.permutation(cands), rng.choice(cands, n - k, replace=True)])
    return np.full(n, int(np.argmin(d2)))


def radius_neighbors(cloud: PointCloud | np.ndarray, center, r: float, n: int,
                     rng: np.random.Generator) -> LocalPointSet:
    """Sample ``n`` neighbours of ``center`` strictly within radius ``r``.

    With at least ``n`` candidates the draw is without replacement.  With
    fewer, every candidate is kept once and the shortfall is filled by
    drawing candidates with replacement.  With none, all ``n`` slots hold
    the nearest point.
    """
    positions = cloud.positions if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    if len(positions) == 0:
        raise DomainError("radius query on an empty cloud")
    if r <= 0 or n < 1:
        raise ValueError("need r > 0 and n >= 1")
    center = np.asarray(center, dtype=np.float64)
    idx = _select(_sq_dist(positions, center), r, n, rng)
    return LocalPointSet(center, idx, positions[idx] - center)


def group_neighbors(positions: np.ndarray, center_indices, r: float, n: int,
                    rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """:func:`radius_neighbors` for each centre in order, with the same ``rng`` draws.

    Returns ``idx [Mc, n]`` and ``relative [Mc, n, 3]``.
    """
    positions = np.asarray(positions, dtype=np.float64)
    if len(positions) == 0:
        raise DomainError("radius query on an empty cloud")
    if r <= 0 or n < 1:
        raise ValueError("need r > 0 and n >= 1")
    center_indices = np.asarray(center_indices, dtype=np.intp)
    centers = positions[center_indices]
    d2 = _sq_dist(positions, centers)
    idx = np.empty((len(center_indices), n), dtype=np.intp)
    for row in range(len(center_indices)):
        idx[row] = _select(d2[row], r, n, rng)
    rel = positions[idx] - centers[:, None, :]
    return idx, rel


def farthest_point_sampling(cloud: PointCloud | np.ndarray, m_out: int, rng: np.random.Generator,
                            first: int | None = None) -> np.ndarray:
    """Greedy max-min subsampling; the first index comes from ``rng`` unless given.

    Ties go to the lowest index.  Already selected points are never picked
    again, so the result has no duplicates.
    """
    positions = cloud.positions if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    m = len(positions)
    if not 1 <= m_out <= m:
        raise DomainError(f"cannot select {m_out} of {m} points")
    start = int(rng.integers(m)) if first is None else int(first)
    selected = np.empty(m_out, dtype=np.intp)
    selected[0] = start
    dist = np.full(m, np.inf)
    last = start
    for i in range(1, m_out):
        dist = np.minimum(dist, _sq_dist(positions, positions[last]))
        dist[selected[:i]] = -1.0
        last = int(np.argmax(dist))
        selected[i] = last
    return selected


def augment(cloud: PointCloud, scale_range=(2.0 / 3.0, 1.5), shift_range=0.2,
            rng: np.random.Generator | None = None) -> PointCloud:
    """Scale positions by one uniform factor, then shift by one uniform 3-vector."""
    lo, hi = scale_range
    if not 0 < lo <= hi:
        raise ValueError("scale range must satisfy 0 < lo <= hi")
    rng = rng if rng is not None else np.random.default_rng(0)
    s = rng.uniform(lo, hi)
    shift = rng.uniform(-shift_range, shift_range, size=3)
    return scale_shift(cloud, s, shift)


def scale_shift(cloud: PointCloud, scale: float, shift) -> PointCloud:
    return PointCloud(cloud.positions * scale + np.asarray(shift, dtype=np.float64), cloud.features, cloud.label)


def write_cloud(path: str | Path, cloud: PointCloud) -> None:
    c = cloud.channels
    label = -1 if cloud.label is None else int(cloud.label)
    rows = cloud.positions if cloud.features is None else np.hstack([cloud.positions, cloud.features])
    lines = [f"{len(cloud)} {c} {label}"]
    lines.extend(" ".join(repr(float(v)) for v in row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n")


def read_cloud(path: str | Path) -> PointCloud:
    """Parse the ``M C label`` header plus ``M`` rows of ``x y z f1..fC``."""
    text = Path(path).read_text().split("\n")
    header = text[0].split()
    if len(header) != 3:
        raise ValueError(f"{path}: header must be 'M C_in label'")
    m, c, label = (int(v) for v in header)
    rows = [line.split() for line in text[1:] if line.strip()]
    if len(rows) != m:
        raise ValueError(f"{path}: header declares {m} points, found {len(rows)}")
    data = np.array(rows, dtype=np.float64).reshape(m, 3 + c)
    feats = data[:, 3:] if c else None
    return PointCloud(data[:, :3], feats, None if label < 0 else label)
