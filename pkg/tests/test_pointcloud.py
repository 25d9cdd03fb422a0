import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ckconv.pointcloud import (
    PointCloud,
    augment,
    farthest_point_sampling,
    group_neighbors,
    radius_neighbors,
    read_cloud,
    scale_shift,
    write_cloud,
)
from ckconv.tensor import DomainError


def unit_ball(rng, m):
    d = rng.normal(size=(m, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * rng.uniform(size=(m, 1)) ** (1 / 3)


class TestPointCloud:
    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            PointCloud([[0.0, np.nan, 0.0]])

    def test_rejects_feature_rows(self):
        with pytest.raises(ValueError):
            PointCloud(np.zeros((3, 3)), np.zeros((2, 1)))

    def test_rejects_wrong_width(self):
        with pytest.raises(ValueError):
            PointCloud(np.zeros((3, 2)))

    def test_file_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        cloud = PointCloud(rng.normal(size=(7, 3)), rng.normal(size=(7, 2)), 3)
        write_cloud(tmp_path / "c.txt", cloud)
        back = read_cloud(tmp_path / "c.txt")
        assert back.label == 3
        assert back.positions.tobytes() == cloud.positions.tobytes()
        assert back.features.tobytes() == cloud.features.tobytes()

    def test_file_without_features_or_label(self, tmp_path):
        write_cloud(tmp_path / "c.txt", PointCloud(np.eye(3)))
        back = read_cloud(tmp_path / "c.txt")
        assert back.features is None and back.label is None
        assert (tmp_path / "c.txt").read_text().splitlines()[0] == "3 0 -1"

    def test_file_row_count_mismatch(self, tmp_path):
        (tmp_path / "c.txt").write_text("3 0 1\n0 0 0\n")
        with pytest.raises(ValueError):
            read_cloud(tmp_path / "c.txt")


class TestRadiusNeighbors:
    def test_forced_coverage(self):
        pts = np.array([[0.0, 0, 0], [0.1, 0, 0], [0, 0.1, 0], [5, 5, 5]])
        for seed in range(10):
            s = radius_neighbors(PointCloud(pts), pts[0], 0.5, 3, np.random.default_rng(seed))
            assert sorted(s.neighbor_indices.tolist()) == [0, 1, 2]
            assert np.all(np.linalg.norm(s.relative, axis=1) < 0.5)

    def test_shortfall_keeps_every_candidate(self):
        pts = np.array([[0.0, 0, 0], [0.1, 0, 0], [5, 5, 5]])
        s = radius_neighbors(pts, pts[0], 0.5, 7, np.random.default_rng(1))
        assert len(s.neighbor_indices) == 7
        assert set(s.neighbor_indices.tolist()) == {0, 1}

    def test_empty_neighbourhood_uses_nearest(self):
        pts = np.array([[1.0, 0, 0], [2.0, 0, 0], [3.0, 0, 0]])
        s = radius_neighbors(pts, [0.0, 0, 0], 0.5, 4, np.random.default_rng(0))
        assert s.neighbor_indices.tolist() == [0, 0, 0, 0]

    def test_linear_scan_oracle(self):
        rng = np.random.default_rng(2)
        pts = unit_ball(rng, 1000)
        center = pts[17]
        s = radius_neighbors(pts, center, 0.3, 32, rng)
        assert np.all(np.linalg.norm(s.relative, axis=1) < 0.3)
        brute = {i for i in range(len(pts)) if sum((pts[i] - center) ** 2) < 0.09}
        got = set(s.neighbor_indices.tolist())
        assert got <= brute
        if len(brute) >= 32:
            assert len(got) == 32
        else:
            assert got == brute
        full = radius_neighbors(pts, center, 0.3, len(brute), rng)
        assert sorted(full.neighbor_indices.tolist()) == sorted(brute)

    def test_relative_is_exact_difference(self):
        rng = np.random.default_rng(3)
        pts = rng.normal(size=(50, 3))
        s = radius_neighbors(pts, pts[4], 1.0, 8, rng)
        assert np.array_equal(s.relative, pts[s.neighbor_indices] - pts[4])

    def test_deterministic_under_seed(self):
        pts = np.random.default_rng(4).normal(size=(80, 3))
        a = radius_neighbors(pts, pts[0], 1.0, 10, np.random.default_rng(9))
        b = radius_neighbors(pts, pts[0], 1.0, 10, np.random.default_rng(9))
        assert np.array_equal(a.neighbor_indices, b.neighbor_indices)

    def test_grouped_matches_per_centre(self):
        pts = np.random.default_rng(5).normal(size=(60, 3))
        centers = np.array([3, 10, 10, 59])
        idx, rel = group_neighbors(pts, centers, 0.8, 6, np.random.default_rng(11))
        rng = np.random.default_rng(11)
        for row, c in enumerate(centers):
            s = radius_neighbors(pts, pts[c], 0.8, 6, rng)
            assert np.array_equal(idx[row], s.neighbor_indices)
            assert np.array_equal(rel[row], s.relative)

    def test_empty_cloud(self):
        with pytest.raises(DomainError):
            radius_neighbors(np.zeros((0, 3)), [0, 0, 0], 1.0, 2, np.random.default_rng(0))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 60), st.floats(0.05, 2.0), st.integers(1, 20), st.integers(0, 2**32 - 1))
    def test_row_count_and_radius(self, m, r, n, seed):
        rng = np.random.default_rng(seed)
        pts = rng.uniform(-1, 1, size=(m, 3))
        s = radius_neighbors(pts, pts[0], r, n, rng)
        assert s.relative.shape == (n, 3)
        # the centre is always in range, so no nearest-point fallback happens
        assert np.all(np.sum(s.relative ** 2, axis=1) < r * r)


class TestFarthestPointSampling:
    def test_full_selection_is_permutation(self):
        pts = np.random.default_rng(0).normal(size=(30, 3))
        sel = farthest_point_sampling(pts, 30, np.random.default_rng(1))
        assert sorted(sel.tolist()) == list(range(30))

    def test_collinear_max_min(self):
        pts = np.array([[0.0, 0, 0], [0.1, 0, 0], [1.0, 0, 0]])
        assert sorted(farthest_point_sampling(pts, 2, np.random.default_rng(0), first=0).tolist()) == [0, 2]

    def test_beats_random_baseline(self):
        def min_pair(x):
            d = np.sqrt(((x[:, None] - x[None]) ** 2).sum(-1))
            return d[np.triu_indices(len(x), 1)].min()

        for trial in range(20):
            rng = np.random.default_rng(trial)
            pts = rng.uniform(size=(256, 3))
            fps = pts[farthest_point_sampling(pts, 64, rng)]
            rand = pts[rng.choice(256, 64, replace=False)]
            assert min_pair(fps) >= min_pair(rand)

    def test_no_duplicates_with_repeated_points(self):
        pts = np.vstack([np.zeros((5, 3)), np.ones((5, 3))])
        sel = farthest_point_sampling(pts, 10, np.random.default_rng(2))
        assert len(set(sel.tolist())) == 10

    def test_deterministic(self):
        pts = np.random.default_rng(3).normal(size=(100, 3))
        a = farthest_point_sampling(pts, 20, np.random.default_rng(5))
        b = farthest_point_sampling(pts, 20, np.random.default_rng(5))
        assert np.array_equal(a, b)

    def test_too_many(self):
        with pytest.raises(DomainError):
            farthest_point_sampling(np.zeros((3, 3)), 4, np.random.default_rng(0))


class TestAugment:
    def test_identity(self):
        cloud = PointCloud(np.random.default_rng(0).normal(size=(10, 3)))
        out = augment(cloud, (1.0, 1.0), 0.0, np.random.default_rng(1))
        assert np.array_equal(out.positions, cloud.positions)

    def test_scale_then_shift(self):
        cloud = PointCloud([[1.0, 1.0, 1.0]])
        assert scale_shift(cloud, 2.0, [1.0, 0, 0]).positions.tolist() == [[3.0, 2.0, 2.0]]
        out = augment(cloud, (2.0, 2.0), 0.0, np.random.default_rng(0))
        assert out.positions.tolist() == [[2.0, 2.0, 2.0]]

    def test_distance_ratios_preserved(self):
        rng = np.random.default_rng(2)
        cloud = PointCloud(rng.normal(size=(20, 3)))
        out = augment(cloud, rng=rng)
        d0 = np.linalg.norm(cloud.positions[:, None] - cloud.positions[None], axis=-1)
        d1 = np.linalg.norm(out.positions[:, None] - out.positions[None], axis=-1)
        mask = ~np.eye(20, dtype=bool)
        ratio = d1[mask] / d0[mask]
        np.testing.assert_allclose(ratio, ratio[0], rtol=1e-12)

    def test_bad_range(self):
        with pytest.raises(ValueError):
            augment(PointCloud(np.zeros((1, 3))), (0.0, 1.0), 0.0)
