"""Training loop, evaluation metrics and model persistence."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import RunConfig
from .data import Dataset, generate_dataset, read_dataset
from .network import Classifier, classify_batch, cross_entropy, plan_sampling
from .pointcloud import PointCloud, augment
from .tensor import NumericError, Tensor, no_grad


class TrainingError(RuntimeError):
    pass


class Adam:
    def __init__(self, params: list[Tensor], lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.params = params
        self.lr, self.eps, self.weight_decay = lr, eps, weight_decay
        self.b1, self.b2 = betas
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.t = 0

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad + self.weight_decay * p.data if self.weight_decay else p.grad
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class EvalResult:
    oa: float
    macc: float
    loss: float
    predictions: np.ndarray
    labels: np.ndarray


def class_accuracies(pred: np.ndarray, labels: np.ndarray) -> dict[int, float]:
    return {int(c): float(np.mean(pred[labels == c] == c)) for c in np.unique(labels)}


def mean_class_accuracy(pred: np.ndarray, labels: np.ndarray) -> float:
    """Unweighted mean over the classes that actually occur in ``labels``."""
    accs = class_accuracies(pred, labels)
    return float(np.mean(list(accs.values()))) if accs else 0.0


def evaluate(model: Classifier, clouds: list[PointCloud], seed: int = 12345,
             batch_size: int = 16) -> EvalResult:
    """Eval-mode metrics; cloud ``i`` is sampled with ``default_rng([seed, i])``."""
    logits = []
    with no_grad():
        for start in range(0, len(clouds), batch_size):
            batch = clouds[start:start + batch_size]
            plans = [plan_sampling(model.config, c, np.random.default_rng([seed, start + i]))
                     for i, c in enumerate(batch)]
            logits.append(classify_batch(model, batch, None, False, plans).data)
    logits = np.concatenate(logits) if logits else np.zeros((0, model.config.classes))
    labels = np.array([c.label for c in clouds], dtype=np.intp)
    pred = np.argmax(logits, axis=1)
    loss = float(cross_entropy(Tensor(logits), labels).data) if len(labels) else 0.0
    oa = float(np.mean(pred == labels)) if len(labels) else 0.0
    return EvalResult(oa, mean_class_accuracy(pred, labels), loss, pred, labels)


def format_record(fields: dict) -> str:
    parts = []
    for k, v in fields.items():
        parts.append(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}")
    return " ".join(parts)


def parse_record(line: str) -> dict:
    out = {}
    for part in line.split():
        k, v = part.split("=", 1)
        try:
            out[k] = int(v)
        except ValueError:
            out[k] = float(v)
    return out


def load_data(cfg: RunConfig) -> Dataset:
    if cfg["data.path"]:
        return read_dataset(cfg["data.path"])
    return generate_dataset(
        train_per_class=cfg["data.train_per_class"], test_per_class=cfg["data.test_per_class"],
        points=cfg["data.points"], noise=cfg["data.noise"], seed=cfg["data.seed"],
        normals=cfg["data.normals"],
    )


def build_model(cfg: RunConfig, classes: int, seed: int | None = None) -> Classifier:
    seed = cfg["train.seed"] if seed is None else seed
    init_ss = np.random.SeedSequence(seed).spawn(2)[0]
    return Classifier(cfg.classifier_config(classes), np.random.default_rng(init_ss))


def save_model(path: str | Path, cfg: RunConfig, model: Classifier, meta: dict | None = None) -> None:
    text = cfg.echo() + f"# classes = {model.config.classes}\n"
    for k, v in (meta or {}).items():
        text += f"# {k} = {v}\n"
    save_checkpoint(path, text, {name: p.data for name, p in model.named_parameters().items()})


def load_model(path: str | Path) -> tuple[RunConfig, Classifier, dict]:
    text, tensors = load_checkpoint(path)
    meta = {}
    for line in text.splitlines():
        if line.startswith("#") and "=" in line:
            k, v = (s.strip() for s in line[1:].split("=", 1))
            meta[k] = v
    cfg = RunConfig.from_text(text)
    model = build_model(cfg, int(meta.get("classes", 4)))
    params = model.named_parameters()
    if set(params) != set(tensors):
        missing = sorted(set(params) ^ set(tensors))
        raise CheckpointError(f"{path}: parameter names differ from config: {missing[:5]}")
    for name, p in params.items():
        if p.shape != tensors[name].shape:
            raise CheckpointError(f"{path}: {name} has shape {tensors[name].shape}, config expects {p.shape}")
        p.data = tensors[name].copy()
    return cfg, model, meta


@dataclass
class TrainResult:
    model: Classifier
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_oa: float = 0.0
    initial_loss: float = 0.0
    wall_time: float = 0.0

    @property
    def final(self) -> dict:
        return self.history[-1]


def _check_finite_grads(model: Classifier) -> None:
    params = model.named_parameters()
    # a corrupted value poisons every gradient upstream of it, so report values first
    for name, p in params.items():
        if not np.isfinite(p.data).all():
            raise TrainingError(f"non-finite value in parameter {name}")
    for name, p in params.items():
        if p.grad is not None and not np.isfinite(p.grad).all():
            raise TrainingError(f"non-finite gradient in parameter {name}")


def train(cfg: RunConfig, dataset: Dataset | None = None, out_dir: str | Path | None = None,
          log: Callable[[str], None] | None = None) -> TrainResult:
    """Adam on mean cross-entropy; keeps the parameters of the best-test-OA epoch.

    Epoch 0 is the untrained model.  With ``out_dir`` the best checkpoint is
    written to ``checkpoint.ckpt``, metric records to ``metrics.log`` and
    wall-clock times to ``timing.log``.
    """
    dataset = load_data(cfg) if dataset is None else dataset
    model = build_model(cfg, dataset.classes)
    _, loop_ss = np.random.SeedSequence(cfg["train.seed"]).spawn(2)
    rng = np.random.default_rng(loop_ss)
    opt = Adam(model.parameters(), cfg["optim.lr"], (cfg["optim.beta1"], cfg["optim.beta2"]),
               cfg["optim.eps"], cfg["optim.weight_decay"])
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        metrics_f = (out / "metrics.log").open("w")
        timing_f = (out / "timing.log").open("w")
    eval_seed = cfg["train.eval_seed"]
    bsz = cfg["train.batch_size"]
    result = TrainResult(model)
    best_params = None
    t0 = time.perf_counter()

    def record(epoch: int, train_loss: float, train_acc: float) -> None:
        nonlocal best_params
        ev = evaluate(model, dataset.test, eval_seed)
        rec = {"epoch": epoch, "train_loss": train_loss, "train_acc": train_acc,
               "test_loss": ev.loss, "test_oa": ev.oa, "test_macc": ev.macc}
        if cfg["train.eval_train"]:
            tr = evaluate(model, dataset.train, eval_seed)
            rec["train_oa"] = tr.oa
        result.history.append(rec)
        line = format_record(rec)
        if epoch == 0:
            result.initial_loss = ev.loss
        if best_params is None or ev.oa > result.best_oa:
            result.best_oa, result.best_epoch = ev.oa, epoch
            best_params = {k: p.data.copy() for k, p in model.named_parameters().items()}
            if out is not None:
                save_model(out / "checkpoint.ckpt", cfg, model, {"epoch": epoch, "test_oa": ev.oa})
        if out is not None:
            metrics_f.write(line + "\n")
            metrics_f.flush()
            timing_f.write(f"epoch={epoch} wall={time.perf_counter() - t0:.3f}\n")
            timing_f.flush()
        if log is not None:
            log(line)

    try:
        record(0, float("nan"), float("nan"))
        for epoch in range(1, cfg["train.epochs"] + 1):
            order = rng.permutation(len(dataset.train))
            loss_sum, correct = 0.0, 0
            for start in range(0, len(order), bsz):
                batch = [dataset.train[i] for i in order[start:start + bsz]]
                if cfg["train.augment"]:
                    batch = [augment(c, (cfg["train.scale_lo"], cfg["train.scale_hi"]), cfg["train.shift"], rng)
                             for c in batch]
                labels = np.array([c.label for c in batch])
                try:
                    logits = classify_batch(model, batch, rng, train_mode=True)
                    loss = cross_entropy(logits, labels)
                except NumericError as exc:
                    bad = [k for k, p in model.named_parameters().items() if not np.isfinite(p.data).all()]
                    where = f"; non-finite parameters: {', '.join(bad)}" if bad else ""
                    raise TrainingError(f"epoch {epoch}: non-finite forward value: {exc}{where}") from exc
                model.zero_grad()
                loss.backward()
                _check_finite_grads(model)
                opt.step()
                loss_sum += float(loss.data) * len(batch)
                correct += int(np.sum(np.argmax(logits.data, axis=1) == labels))
            n = len(dataset.train)
            record(epoch, loss_sum / n, correct / n)
    finally:
        if out is not None:
            metrics_f.close()
            timing_f.close()
    for k, p in model.named_parameters().items():
        p.data = best_params[k]
    result.wall_time = time.perf_counter() - t0
    return result
