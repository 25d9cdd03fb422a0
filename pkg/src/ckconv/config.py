"""Flat ``section.key = value`` run configuration.

Every key has a typed default; unknown keys and unparsable values raise
:class:`ConfigError`.  :meth:`RunConfig.echo` renders the full resolved
configuration, which checkpoints embed verbatim.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .kernel import NORMALIZATIONS
from .layers import ACTIVATIONS
from .network import ClassifierConfig, StageConfig


class ConfigError(ValueError):
    pass


# key -> (type, default, help)
SCHEMA: dict[str, tuple[type, Any, str]] = {
    "data.path": (str, "", "dataset directory written by gen-data; empty = generate in memory"),
    "data.seed": (int, 0, "dataset generation seed"),
    "data.train_per_class": (int, 50, "training clouds per class"),
    "data.test_per_class": (int, 20, "test clouds per class"),
    "data.points": (int, 512, "points per cloud"),
    "data.noise": (float, 0.01, "Gaussian jitter, fraction of unit scale"),
    "data.normals": (bool, True, "attach analytic normals as 3 feature channels"),
    "model.v": (int, 4, "cubic kernel unit size"),
    "model.norm": (str, "st", "cubic weight normalisation: none | l2 | st"),
    "model.lsa": (bool, True, "enable local set attention"),
    "model.activation": (str, "relu", "hidden activation: relu | tanh"),
    "model.kernel_hidden": (int, 32, "width of both front MLP layers"),
    "model.lsa_depth": (int, 1, "layers in the attention head"),
    "model.head_hidden": (int, 32, "hidden width of the classifier head"),
    "model.dropout": (float, 0.5, "dropout probability in the head"),
    "stage1.centers": (int, 128, "stage-1 centres (farthest point sampling)"),
    "stage1.radius": (float, 0.25, "stage-1 neighbourhood radius"),
    "stage1.neighbors": (int, 16, "stage-1 neighbours per centre"),
    "stage1.channels": (int, 32, "stage-1 output channels"),
    "stage2.centers": (int, 32, "stage-2 centres"),
    "stage2.radius": (float, 0.5, "stage-2 neighbourhood radius"),
    "stage2.neighbors": (int, 16, "stage-2 neighbours per centre"),
    "stage2.channels": (int, 64, "stage-2 output channels"),
    "optim.lr": (float, 1e-3, "Adam learning rate"),
    "optim.beta1": (float, 0.9, "Adam first-moment decay"),
    "optim.beta2": (float, 0.999, "Adam second-moment decay"),
    "optim.eps": (float, 1e-8, "Adam denominator epsilon"),
    "optim.weight_decay": (float, 0.0, "L2 penalty added to gradients"),
    "train.seed": (int, 0, "initialisation / shuffling / augmentation seed"),
    "train.epochs": (int, 60, "training epochs"),
    "train.batch_size": (int, 8, "clouds per optimiser step"),
    "train.augment": (bool, True, "random scaling and translation"),
    "train.scale_lo": (float, 2.0 / 3.0, "lower bound of the random scale"),
    "train.scale_hi": (float, 1.5, "upper bound of the random scale"),
    "train.shift": (float, 0.2, "half-width of the random translation"),
    "train.eval_seed": (int, 12345, "sampling seed used for evaluation"),
    "train.eval_train": (bool, False, "also evaluate the train split every epoch"),
    "ablate.seeds": (int, 3, "training seeds per ablation row"),
    "ablate.sweep_v": (str, "3,4,5", "kernel sizes for the v sweep"),
    "ablate.variants": (str, "A,B,C,D,E", "normalisation / attention variants to run"),
    "gradcheck.eps": (float, 1e-3, "finite-difference step"),
    "gradcheck.tol": (float, 1e-4, "max relative error"),
    "oracle.trials": (int, 50, "random configurations compared"),
    "oracle.tol": (float, 1e-10, "max relative deviation"),
}

CHOICES = {"model.norm": NORMALIZATIONS, "model.activation": ACTIVATIONS[:2]}


def _parse(key: str, raw: str):
    typ = SCHEMA[key][0]
    raw = raw.strip()
    try:
        if typ is bool:
            low = raw.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
        return typ(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {typ.__name__}") from None


def _render(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class RunConfig:
    values: dict[str, Any] = field(default_factory=lambda: {k: v[1] for k, v in SCHEMA.items()})

    def __getitem__(self, key: str):
        return self.values[key]

    def set(self, key: str, value) -> "RunConfig":
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(value, str) and SCHEMA[key][0] is not str:
            value = _parse(key, value)
        else:
            value = SCHEMA[key][0](value)
        if key in CHOICES and value not in CHOICES[key]:
            raise ConfigError(f"{key} must be one of {CHOICES[key]}, got {value!r}")
        self.values[key] = value
        return self

    def replace(self, **overrides) -> "RunConfig":
        """Copy with overrides; keyword ``a__b`` addresses ``a.b``."""
        out = RunConfig(dict(self.values))
        for k, v in overrides.items():
            out.set(k.replace("__", "."), v)
        return out

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        cfg = cls()
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'section.key = value'")
            key, raw = (part.strip() for part in line.split("=", 1))
            if key not in SCHEMA:
                raise ConfigError(f"line {lineno}: unknown config key {key!r}")
            cfg.set(key, _parse(key, raw))
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            return cls.from_text(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None

    def echo(self) -> str:
        return "".join(f"{k} = {_render(self.values[k])}\n" for k in SCHEMA)

    def in_channels(self) -> int:
        return 3 if self["data.normals"] else 1

    def classifier_config(self, classes: int = 4, in_channels: int | None = None) -> ClassifierConfig:
        c_in = self.in_channels() if in_channels is None else in_channels
        v, norm, lsa = self["model.v"], self["model.norm"], self["model.lsa"]
        stages = [
            StageConfig(self["stage1.centers"], self["stage1.radius"], self["stage1.neighbors"],
                        c_in, self["stage1.channels"], v, norm, lsa),
            StageConfig(self["stage2.centers"], self["stage2.radius"], self["stage2.neighbors"],
                        self["stage1.channels"], self["stage2.channels"], v, norm, lsa),
        ]
        width = self["model.kernel_hidden"]
        return ClassifierConfig(
            stages=stages,
            head=[self["model.head_hidden"]],
            dropout=self["model.dropout"],
            classes=classes,
            activation=self["model.activation"],
            kernel_hidden=(width, width),
            lsa_depth=self["model.lsa_depth"],
        )


def describe() -> str:
    """All keys with defaults and help text, in config-file syntax."""
    return "".join(f"{k} = {_render(d)}  # {h}\n" for k, (_, d, h) in SCHEMA.items())
