import numpy as np
import pytest

from ckconv.data import generate_dataset
from ckconv.network import (
    Classifier,
    ClassifierConfig,
    StageConfig,
    StagePlan,
    classify_batch,
    classify_forward,
    cross_entropy,
    initial_features,
    plan_sampling,
    softmax,
)
from ckconv.pointcloud import PointCloud
from ckconv.tensor import Tensor, finite_difference_grad


def small_config(**kw):
    base = dict(
        stages=[StageConfig(16, 0.5, 8, 3, 8), StageConfig(4, 1.0, 8, 8, 12)],
        head=[8], dropout=0.5, classes=4, kernel_hidden=(8, 8),
    )
    base.update(kw)
    return ClassifierConfig(**base)


def cloud(seed=0, m=64, c=3):
    rng = np.random.default_rng(seed)
    return PointCloud(rng.uniform(-1, 1, size=(m, 3)), rng.normal(size=(m, c)) if c else None, seed % 4)


class TestInitialFeatures:
    def test_featureless_gets_ones(self):
        out = initial_features(PointCloud(np.zeros((10, 3))))
        assert out.shape == (10, 1) and np.all(out == 1)

    def test_passthrough(self):
        c = cloud(c=3)
        assert initial_features(c) is c.features

    def test_ones_unaffected_by_scale(self):
        pts = np.random.default_rng(1).normal(size=(12, 3))
        a = initial_features(PointCloud(pts))
        b = initial_features(PointCloud(pts * 7.5))
        assert np.array_equal(a, b)


class TestConfig:
    def test_default_hierarchy(self):
        cfg = ClassifierConfig()
        s1, s2 = cfg.stages
        assert (s1.centers, s1.radius, s1.neighbors, s1.c_in, s1.c_out, s1.v) == (128, 0.25, 16, 1, 32, 4)
        assert (s2.centers, s2.radius, s2.neighbors, s2.c_in, s2.c_out, s2.v) == (32, 0.5, 16, 32, 64, 4)
        assert cfg.head == [32] and cfg.dropout == 0.5

    def test_channels_must_chain(self):
        with pytest.raises(ValueError):
            small_config(stages=[StageConfig(16, 0.5, 8, 3, 8), StageConfig(4, 1.0, 8, 7, 12)]).validate()

    @pytest.mark.parametrize("p", [-0.1, 1.0])
    def test_dropout_range(self, p):
        with pytest.raises(ValueError):
            small_config(dropout=p).validate()

    def test_head_shapes(self):
        model = Classifier(small_config(), np.random.default_rng(0))
        assert [l.weight.shape for l in model.head] == [(12, 8), (8, 4)]
        assert len(set(model.named_parameters())) == len(model.parameters())


class TestForward:
    def test_logit_shape(self):
        model = Classifier(small_config(), np.random.default_rng(0))
        for m in (16, 64, 200):
            assert classify_forward(model, cloud(m=m), np.random.default_rng(1)).shape == (4,)

    def test_eval_deterministic(self):
        model = Classifier(small_config(), np.random.default_rng(0))
        a = classify_forward(model, cloud(), np.random.default_rng(5)).data
        b = classify_forward(model, cloud(), np.random.default_rng(5)).data
        assert a.tobytes() == b.tobytes()

    def test_train_mode_draws_dropout_mask(self):
        model = Classifier(small_config(), np.random.default_rng(0))
        c = cloud()
        plan = plan_sampling(model.config, c, np.random.default_rng(2))
        ev = classify_forward(model, c, None, False, plan).data
        tr = classify_forward(model, c, np.random.default_rng(3), True, plan).data
        assert not np.array_equal(ev, tr)
        nodrop = Classifier(small_config(dropout=0.0), np.random.default_rng(0))
        assert np.array_equal(classify_forward(nodrop, c, np.random.default_rng(3), True, plan).data, ev)

    def test_batch_equals_single(self):
        model = Classifier(small_config(), np.random.default_rng(0))
        clouds = [cloud(s) for s in range(3)]
        plans = [plan_sampling(model.config, c, np.random.default_rng(10 + i)) for i, c in enumerate(clouds)]
        batch = classify_batch(model, clouds, None, False, plans).data
        for i, c in enumerate(clouds):
            single = classify_forward(model, c, None, False, plans[i]).data
            np.testing.assert_allclose(batch[i], single, rtol=0, atol=1e-12)

    def test_storage_order_permutation(self):
        model = Classifier(small_config(), np.random.default_rng(0))
        c = cloud(3)
        plan = plan_sampling(model.config, c, np.random.default_rng(4))
        perm = np.random.default_rng(5).permutation(len(c))
        inv = np.argsort(perm)  # old row -> new row
        moved = c.permuted(perm)
        first = plan[0]
        plan_p = [StagePlan(inv[first.centers], inv[first.neighbors], first.relative), plan[1]]
        a = classify_forward(model, c, None, False, plan).data
        b = classify_forward(model, moved, None, False, plan_p).data
        assert a.tobytes() == b.tobytes()

    def test_lsa_zero_init_matches_disabled(self):
        on = small_config()
        off = small_config(stages=[StageConfig(16, 0.5, 8, 3, 8, lsa=False), StageConfig(4, 1.0, 8, 8, 12, lsa=False)])
        a = Classifier(on, np.random.default_rng(7))
        b = Classifier(off, np.random.default_rng(7))
        c = cloud(1)
        la = classify_forward(a, c, np.random.default_rng(8)).data
        lb = classify_forward(b, c, np.random.default_rng(8)).data
        assert la.tobytes() == lb.tobytes()

    @pytest.mark.parametrize("normals", [False, True])
    def test_initial_loss_near_chance(self, normals):
        ds = generate_dataset(train_per_class=1, test_per_class=16, points=256, seed=3, normals=normals)
        cfg = ClassifierConfig()
        cfg.stages[0].c_in = 3 if normals else 1
        model = Classifier(cfg, np.random.default_rng(0))
        logits = classify_batch(model, ds.test, np.random.default_rng(1))
        loss = cross_entropy(logits, [c.label for c in ds.test]).item()
        assert abs(loss - np.log(4)) < 0.2 * np.log(4)


class TestCrossEntropy:
    def test_uniform(self):
        assert abs(cross_entropy(Tensor([0.0, 0, 0, 0]), 2).item() - np.log(4)) < 1e-15
        assert abs(np.log(4) - 1.386294) < 1e-6

    def test_confident(self):
        assert cross_entropy(Tensor([100.0, 0, 0, 0]), 0).item() < 1e-40

    def test_no_overflow(self):
        assert np.isfinite(cross_entropy(Tensor([1000.0, -1000.0]), 1).item())

    def test_gradient(self):
        z = np.random.default_rng(0).normal(size=5)
        x = Tensor(z, requires_grad=True)
        cross_entropy(x, 3).backward()
        expected = softmax(z) - np.eye(5)[3]
        np.testing.assert_allclose(x.grad[0] if x.grad.ndim == 2 else x.grad, expected, atol=1e-15)
        fd = finite_difference_grad(lambda t: cross_entropy(t, 3), x, 1e-5)
        assert np.abs(fd - expected).max() < 1e-6

    def test_batch_mean(self):
        z = np.random.default_rng(1).normal(size=(3, 4))
        total = cross_entropy(Tensor(z), [0, 1, 2]).item()
        parts = [cross_entropy(Tensor(z[i]), i).item() for i in range(3)]
        assert abs(total - np.mean(parts)) < 1e-14

    def test_label_range(self):
        with pytest.raises(ValueError):
            cross_entropy(Tensor([0.0, 0.0]), 2)

    def test_softmax_sums_to_one(self):
        z = np.random.default_rng(2).normal(scale=30, size=(50, 7))
        np.testing.assert_allclose(softmax(z).sum(axis=1), 1.0, atol=1e-12)
