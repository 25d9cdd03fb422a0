"""Acceptance criteria 1-11.  Each test records one PASS/FAIL line, which is
also printed in the terminal summary.

Criteria 9 and 10 train full models and take over an hour together on
one core; they share a single ablation run (variant E, seed 0 is the
default configuration).
"""

import time

import numpy as np
import pytest

from ckconv import checks, cli
from ckconv.config import RunConfig
from ckconv.conv import CKConvLayer, ckconv_forward, point_conv
from ckconv.kernel import norm_l2, norm_st
from ckconv.network import Classifier, ClassifierConfig, StageConfig, classify_forward
from ckconv.pointcloud import PointCloud, group_neighbors
from ckconv.tensor import Tensor
from ckconv.train import load_data, train


def rel_dev(a, b):
    scale = max(np.abs(a).max(), np.abs(b).max())
    return 0.0 if scale == 0 else float(np.abs(a - b).max() / scale)


def test_01_shape_contract(criterion):
    rng = np.random.default_rng(0)
    bad = []
    for v in range(1, 6):
        for n in (1, 4, 16):
            for c in (1, 4, 8):
                out = point_conv(Tensor(rng.normal(size=(n, v ** 3))), Tensor(rng.normal(size=(n, c))), v)
                if out.shape != (v, v, v, c):
                    bad.append((v, n, c, out.shape))
    assert criterion(1, "point_conv shape contract", not bad, f"45 grid points, mismatches={bad}")


def test_02_normalization_invariants(criterion):
    rng = np.random.default_rng(1)
    rows = rng.normal(size=(1000, 64)) * rng.uniform(0.01, 100, size=(1000, 1)) + rng.normal(size=(1000, 1))
    l2 = norm_l2(Tensor(rows)).data
    st = norm_st(Tensor(rows)).data
    e_norm = np.abs(np.linalg.norm(l2, axis=1) - 1).max()
    e_mean = np.abs(st.mean(axis=1)).max()
    e_std = np.abs(st.std(axis=1) - 1).max()
    alpha = rng.uniform(0.01, 100, size=(1000, 1))
    beta = rng.uniform(-100, 100, size=(1000, 1))
    e_scale = np.abs(norm_l2(Tensor(alpha * rows)).data - l2).max()
    e_affine = np.abs(norm_st(Tensor(alpha * rows + beta)).data - st).max()
    ok = e_norm < 1e-9 and e_mean < 1e-9 and e_std < 1e-9 and e_scale < 1e-10 and e_affine < 1e-10
    assert criterion(2, "normalization invariants", ok,
                     f"|norm-1|={e_norm:.1e} |mean|={e_mean:.1e} |std-1|={e_std:.1e} "
                     f"scale={e_scale:.1e} affine={e_affine:.1e}")


def test_03_permutation_invariance(criterion):
    rng = np.random.default_rng(2)
    layers = {norm: CKConvLayer.create(np.random.default_rng(10 + i), 4, 8, 4, norm, True, lsa_zero_init=False)
              for i, norm in enumerate(("l2", "st"))}
    mismatches = 0
    for _ in range(100):
        n = int(rng.integers(2, 17))
        pos = rng.uniform(-1, 1, size=(n + 5, 3))
        feats = Tensor(rng.normal(size=(n + 5, 4)))
        idx, rel = group_neighbors(pos, [0], 1.0, n, rng)
        for layer in layers.values():
            ref = layer.forward_grouped(rel, idx, feats).data.tobytes()
            for _ in range(10):
                p = rng.permutation(n)
                mismatches += layer.forward_grouped(rel[:, p], idx[:, p], feats).data.tobytes() != ref
    assert criterion(3, "neighbour permutation invariance (bit-identical)", mismatches == 0,
                     f"2000 comparisons, mismatches={mismatches}")


def test_04_translation_invariance(criterion):
    rng = np.random.default_rng(3)
    layer = CKConvLayer.create(np.random.default_rng(4), 3, 16, 4, "st", True, lsa_zero_init=False)
    worst = 0.0
    for _ in range(100):
        pos = rng.uniform(-1, 1, size=(64, 3))
        feats = Tensor(rng.normal(size=(64, 3)))
        centers = rng.choice(64, 4, replace=False)
        offset = rng.uniform(-10, 10, size=3)
        seed = int(rng.integers(2**32))
        a = ckconv_forward(layer, pos, feats, centers, 0.5, 16, np.random.default_rng(seed)).data
        b = ckconv_forward(layer, pos + offset, feats, centers, 0.5, 16, np.random.default_rng(seed)).data
        worst = max(worst, rel_dev(a, b))
    assert criterion(4, "translation invariance", worst < 1e-10, f"max relative deviation {worst:.2e}")


def test_05_oracle_equivalence(criterion, capsys):
    t0 = time.perf_counter()
    code = cli.main(["oracle", "--trials", "50"])
    out = capsys.readouterr().out.strip().splitlines()[-1]
    report = checks.oracle_check(0, 50)
    ok = code == 0 and report.passed and report.max_deviation < 1e-10
    assert criterion(5, "oracle equivalence, 50 configs", ok,
                     f"{out} ({time.perf_counter() - t0:.1f}s)")


def test_06_gradient_correctness(criterion, capsys):
    t0 = time.perf_counter()
    code = cli.main(["gradcheck"])
    capsys.readouterr()
    report = checks.gradcheck(0, eps=1e-3, tol=1e-4)
    groups = {}
    for r in report.rows:
        key = r.name.split(".")[1] if r.name.startswith("stage") else "head"
        groups.setdefault(key, []).append(r.error)
    covered = set(groups) == {"kernel", "lsa", "conv3d", "head"}
    worst = max(r.error for r in report.rows)
    detail = " ".join(f"{k}={max(v):.1e}" for k, v in sorted(groups.items()))
    ok = code == 0 and report.passed and covered
    assert criterion(6, "finite-difference gradients", ok,
                     f"{len(report.rows)} tensors, max rel err {worst:.1e} ({detail}), {time.perf_counter() - t0:.1f}s")


def test_07_lsa_skip(criterion):
    on = ClassifierConfig()
    off = ClassifierConfig()
    for s in off.stages:
        s.lsa = False
    rng = np.random.default_rng(5)
    cloud = PointCloud(rng.normal(size=(512, 3)))
    a = classify_forward(Classifier(on, np.random.default_rng(6)), cloud, np.random.default_rng(7)).data
    b = classify_forward(Classifier(off, np.random.default_rng(6)), cloud, np.random.default_rng(7)).data
    assert criterion(7, "zero-init LSA equals LSA disabled (bit-identical)", a.tobytes() == b.tobytes())


def test_08_parameter_count(criterion):
    lines, ok = [], True
    for v in range(1, 6):
        layers = [CKConvLayer.create(np.random.default_rng(0), c, 32, v) for c in (1, 8, 64)]
        kern = [l.kernel.parameter_count() for l in layers]
        conv = [l.conv.parameter_count() for l in layers]
        ok &= len(set(kern)) == 1 and conv[0] < conv[1] < conv[2]
        lines.append(f"v={v} kernel={kern[0]} conv={conv}")
    assert criterion(8, "kernel size independent of C_in", ok, "; ".join(lines))


@pytest.fixture(scope="session")
def ablation():
    base = RunConfig().replace(ablate__sweep_v="")
    rows = checks.ablate(base, load_data(base), seeds=[0, 1, 2])
    return {r.label: r for r in rows}, checks.format_ablation(rows)


def test_09_toy_benchmark(criterion, ablation):
    rows, _ = ablation
    e = rows["E"]
    cfg = RunConfig()
    assert (cfg["model.norm"], cfg["model.lsa"]) == ("st", True)
    oa, wall = e.best_oa[0], e.wall_time[0]
    assert criterion(9, "toy benchmark, default st+LSA, >= 90% test OA in 60 epochs", oa >= 0.9,
                     f"best test OA {oa:.4f}, final {e.final_oa[0]:.4f}, wall {wall / 60:.1f} min (soft budget 15)")


def test_10_ablation_direction(criterion, ablation):
    rows, table = ablation
    a, e = rows["A"].mean_best_oa, rows["E"].mean_best_oa
    print(table)
    ok = e >= a and rows["C"].initial_loss == rows["B"].initial_loss
    summary = " ".join(f"{k}={r.mean_best_oa:.4f}" for k, r in rows.items())
    assert criterion(10, "mean OA(st+LSA) >= mean OA(none)", ok, f"3 seeds: {summary}")


def test_11_overfit(criterion):
    cfg = RunConfig().replace(
        data__train_per_class=2, data__test_per_class=2, train__epochs=200,
        train__augment=False, model__dropout=0.0, train__eval_train=True,
    )
    t0 = time.perf_counter()
    res = train(cfg)
    wall = time.perf_counter() - t0
    hits = [h["epoch"] for h in res.history if h["train_oa"] == 1.0]
    first = hits[0] if hits else None
    assert criterion(11, "8-cloud overfit reaches 100% train accuracy", first is not None,
                     f"first epoch at 100%: {first}, wall {wall:.0f}s")
