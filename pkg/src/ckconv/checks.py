"""Self-checks run from the command line: finite-difference gradients,
oracle equivalence and the normalisation / attention ablation grid."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .config import RunConfig
from .conv import CKConvLayer, ckconv_forward
from .data import Dataset
from .network import Classifier, ClassifierConfig, StageConfig, classify_batch, cross_entropy, plan_sampling
from .oracle import ckconv_oracle
from .pointcloud import PointCloud, group_neighbors
from .tensor import Tensor


# ---------------------------------------------------------------- gradcheck

@dataclass
class GradRow:
    name: str
    size: int
    error: float
    skipped: int
    passed: bool


@dataclass
class GradReport:
    rows: list[GradRow]
    tol: float

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def format(self) -> str:
        lines = ["param\tsize\tmax_rel_err\tskipped\tstatus"]
        for r in self.rows:
            lines.append(f"{r.name}\t{r.size}\t{r.error:.3e}\t{r.skipped}\t{'pass' if r.passed else 'FAIL'}")
        lines.append(f"gradcheck {'PASS' if self.passed else 'FAIL'} tol={self.tol:g}")
        return "\n".join(lines)


def tiny_config() -> ClassifierConfig:
    return ClassifierConfig(
        stages=[StageConfig(8, 0.6, 4, 2, 4, v=3, norm="st", lsa=True),
                StageConfig(4, 1.2, 4, 4, 5, v=3, norm="l2", lsa=True)],
        head=[6], dropout=0.0, classes=3, activation="tanh",
        kernel_hidden=(6, 6), lsa_depth=1, lsa_zero_init=False,
    )


def _tiny_problem(seed: int):
    rng = np.random.default_rng(seed)
    cfg = tiny_config()
    model = Classifier(cfg, rng)
    clouds = []
    for label in range(2):
        pos = rng.uniform(-1, 1, size=(32, 3))
        clouds.append(PointCloud(pos, rng.normal(size=(32, 2)), label))
    plans = [plan_sampling(cfg, c, rng) for c in clouds]
    labels = np.array([c.label for c in clouds])
    return model, lambda: cross_entropy(classify_batch(model, clouds, None, False, plans), labels)


def _max_signature(out: Tensor) -> bytes:
    """Argmax pattern of every max node under ``out``, in a fixed traversal order."""
    parts, stack, seen = [], [out], set()
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        if node.op == "max":
            parts.append(node.meta["argmax"].tobytes())
        stack.extend(node._parents)
    return b"".join(parts)


def gradcheck(seed: int = 0, eps: float = 1e-3, tol: float = 1e-4,
              loss_fn: Callable[[], Tensor] | None = None, params: dict[str, Tensor] | None = None) -> GradReport:
    """Compare backprop against central differences for every parameter.

    Error per tensor is ``max|a - n| / max(max|a|, max|n|)``.  A coordinate
    whose perturbation changes any max-pool selection is skipped, since
    the difference quotient then straddles a kink.
    """
    if loss_fn is None:
        model, loss_fn = _tiny_problem(seed)
        params = model.named_parameters()
    base = loss_fn()
    sig0 = _max_signature(base)
    for p in params.values():
        p.grad = None
    base.backward()
    rows = []
    for name, p in params.items():
        analytic = np.zeros(p.shape) if p.grad is None else p.grad.copy()
        numeric = np.zeros(p.shape)
        valid = np.ones(p.shape, dtype=bool)
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            up = loss_fn()
            flat[i] = old - eps
            down = loss_fn()
            flat[i] = old
            if _max_signature(up) != sig0 or _max_signature(down) != sig0:
                valid.flat[i] = False
                continue
            numeric.flat[i] = (float(up.data) - float(down.data)) / (2 * eps)
        a, n = analytic[valid], numeric[valid]
        scale = max(np.abs(a).max(initial=0.0), np.abs(n).max(initial=0.0))
        err = 0.0 if scale == 0 else float(np.abs(a - n).max() / scale)
        skipped = int((~valid).sum())
        rows.append(GradRow(name, p.size, err, skipped, err < tol and skipped < p.size))
    return GradReport(rows, tol)


# ------------------------------------------------------------------ oracle

@dataclass
class OracleTrial:
    v: int
    n: int
    c_in: int
    c_out: int
    norm: str
    lsa: bool
    deviation: float
    note: str = ""


@dataclass
class OracleReport:
    trials: list[OracleTrial] = field(default_factory=list)
    tol: float = 1e-10

    @property
    def max_deviation(self) -> float:
        return max((t.deviation for t in self.trials), default=0.0)

    @property
    def passed(self) -> bool:
        return bool(self.trials) and all(not t.note for t in self.trials) and self.max_deviation < self.tol

    def format(self) -> str:
        lines = ["trial\tv\tN\tC_in\tC_out\tnorm\tlsa\tdeviation"]
        for i, t in enumerate(self.trials):
            lines.append(f"{i}\t{t.v}\t{t.n}\t{t.c_in}\t{t.c_out}\t{t.norm}\t{int(t.lsa)}\t{t.deviation:.3e}"
                         + (f"\t{t.note}" if t.note else ""))
        lines.append(f"oracle {'PASS' if self.passed else 'FAIL'} max_deviation={self.max_deviation:.3e} "
                     f"tol={self.tol:g}")
        return "\n".join(lines)


def oracle_check(seed: int = 0, trials: int = 50, tol: float = 1e-10) -> OracleReport:
    """Fast path against the scalar-loop reference on random layer configurations.

    ``v`` cycles through 1..5 so every kernel size, including the
    degenerate ``v = 1``, is covered.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    report = OracleReport(tol=tol)
    root = np.random.SeedSequence(seed)
    for t, child in enumerate(root.spawn(trials)):
        rng = np.random.default_rng(child)
        v = 1 + t % 5
        n = int(rng.choice([1, 4, 16]))
        c_in = int(rng.choice([1, 4, 8]))
        c_out = int(rng.integers(1, 9))
        norm = str(rng.choice(["none", "l2", "st"]))
        lsa = bool(rng.integers(2))
        act = str(rng.choice(["relu", "tanh"]))
        r = float(rng.uniform(0.3, 0.8))
        layer = CKConvLayer.create(rng, c_in, c_out, v, norm, lsa, (8, 8), act, 1, False,
                                   r if rng.integers(2) else None)
        m = int(rng.integers(20, 60))
        pos = rng.uniform(-1, 1, size=(m, 3))
        feats = rng.normal(size=(m, c_in))
        centers = rng.choice(m, size=int(rng.integers(1, 6)), replace=False)
        draw_seed = int(rng.integers(2**63))

        idx, _ = group_neighbors(pos, centers, r, n, np.random.default_rng(draw_seed))
        fast = ckconv_forward(layer, pos, Tensor(feats), centers, r, n, np.random.default_rng(draw_seed)).data
        ref, ref_idx = ckconv_oracle(layer, pos, feats, centers, r, n, np.random.default_rng(draw_seed),
                                     return_neighbors=True)
        note = ""
        # both paths must have sampled the same neighbours before outputs are compared
        if not np.array_equal(np.sort(idx, axis=1), np.sort(ref_idx, axis=1)):
            note, dev = "neighbour sets differ", float("inf")
        else:
            scale = max(np.abs(ref).max(), np.abs(fast).max())
            dev = 0.0 if scale == 0 else float(np.abs(fast - ref).max() / scale)
        report.trials.append(OracleTrial(v, n, c_in, c_out, norm, lsa, dev, note))
    return report


# ------------------------------------------------------------------ ablation

VARIANTS = {
    "A": ("none", False),
    "B": ("l2", False),
    "C": ("l2", True),
    "D": ("st", False),
    "E": ("st", True),
}


@dataclass
class AblationRow:
    label: str
    norm: str
    lsa: bool
    v: int
    best_oa: list[float]
    final_oa: list[float]
    initial_loss: list[float]
    wall_time: list[float] = field(default_factory=list)

    @property
    def mean_best_oa(self) -> float:
        return float(np.mean(self.best_oa))


def ablation_configs(base: RunConfig) -> list[tuple[str, RunConfig]]:
    runs = []
    for label in (s.strip() for s in base["ablate.variants"].split(",") if s.strip()):
        if label not in VARIANTS:
            raise ValueError(f"unknown ablation variant {label!r}")
        norm, lsa = VARIANTS[label]
        runs.append((label, base.replace(model__norm=norm, model__lsa=lsa)))
    for v in (int(s) for s in base["ablate.sweep_v"].split(",") if s.strip()):
        runs.append((f"v={v}", base.replace(model__v=v)))
    return runs


def ablate(base: RunConfig, dataset: Dataset, seeds: list[int] | None = None,
           log: Callable[[str], None] | None = None) -> list[AblationRow]:
    """Train every variant on the same data with the same seeds."""
    from .train import train

    seeds = list(range(base["ablate.seeds"])) if seeds is None else seeds
    rows = []
    for label, cfg in ablation_configs(base):
        row = AblationRow(label, cfg["model.norm"], cfg["model.lsa"], cfg["model.v"], [], [], [])
        for s in seeds:
            res = train(cfg.replace(train__seed=s), dataset)
            row.best_oa.append(res.best_oa)
            row.final_oa.append(res.final["test_oa"])
            row.initial_loss.append(res.initial_loss)
            row.wall_time.append(res.wall_time)
            if log is not None:
                log(f"{label} seed={s} best_oa={res.best_oa!r} init_loss={res.initial_loss!r}")
        rows.append(row)
    return rows


def format_ablation(rows: list[AblationRow]) -> str:
    lines = ["variant\tnorm\tlsa\tv\tmean_best_oa\tmean_final_oa\tinit_loss\tbest_oa_per_seed"]
    for r in rows:
        lines.append("\t".join([
            r.label, r.norm, str(int(r.lsa)), str(r.v), f"{r.mean_best_oa:.4f}",
            f"{np.mean(r.final_oa):.4f}", repr(r.initial_loss[0]),
            ",".join(f"{x:.4f}" for x in r.best_oa),
        ]))
    return "\n".join(lines) + "\n"
