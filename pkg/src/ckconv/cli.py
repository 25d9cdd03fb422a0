"""Command-line entry point.

Exit status: 0 on success, 1 when a check fails, 2 on usage or
configuration errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .checkpoint import CheckpointError
from .config import ConfigError, RunConfig, describe

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _common(p: argparse.ArgumentParser, out_default: str | None = None) -> None:
    p.add_argument("--config", help="config file (section.key = value lines)")
    p.add_argument("--seed", type=int, help="overrides the command's seed key")
    p.add_argument("--out", default=out_default, help="output directory")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ckconv", description="Cubic kernel point convolution toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _common(sub.add_parser("gen-data", help="write the synthetic dataset"), "data")
    _common(sub.add_parser("train", help="train a classifier"), "run")
    p = sub.add_parser("eval", help="evaluate a checkpoint")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("train", "test"), default="test")
    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    _common(p)
    p = sub.add_parser("oracle", help="fast path against scalar-loop reference")
    _common(p)
    p.add_argument("--trials", type=int)
    _common(sub.add_parser("ablate", help="normalisation / attention / v grid"), "ablate")
    sub.add_parser("config", help="print every config key with its default")
    return parser


def _load_config(args, seed_key: str | None) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        cfg.set(key.strip(), value.strip())
    if args.seed is not None and seed_key is not None:
        cfg.set(seed_key, args.seed)
    return cfg


def cmd_gen_data(args) -> int:
    from .train import load_data
    from .data import write_dataset

    cfg = _load_config(args, "data.seed")
    cfg.set("data.path", "")
    manifest = write_dataset(args.out, load_data(cfg))
    print(f"wrote {manifest}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .train import train

    cfg = _load_config(args, "train.seed")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.echo())
    res = train(cfg, out_dir=out, log=print)
    print(f"best_epoch={res.best_epoch} best_test_oa={res.best_oa!r} checkpoint={out / 'checkpoint.ckpt'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .train import evaluate, format_record, load_data, load_model

    ckpt_cfg, model, _ = load_model(args.checkpoint)
    cfg = _load_config(args, "train.eval_seed") if (args.config or args.set or args.seed is not None) else ckpt_cfg
    data = load_data(cfg)
    clouds = data.train if args.split == "train" else data.test
    ev = evaluate(model, clouds, cfg["train.eval_seed"])
    line = format_record({"split": args.split, "clouds": len(clouds), "loss": ev.loss, "oa": ev.oa, "macc": ev.macc})
    print(line)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "eval.log").write_text(line + "\n")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .checks import gradcheck

    cfg = _load_config(args, None)
    report = gradcheck(0 if args.seed is None else args.seed, cfg["gradcheck.eps"], cfg["gradcheck.tol"])
    text = report.format()
    print(text)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "gradcheck.tsv").write_text(text + "\n")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_oracle(args) -> int:
    from .checks import oracle_check

    cfg = _load_config(args, None)
    trials = cfg["oracle.trials"] if args.trials is None else args.trials
    if trials < 1:
        raise ConfigError("--trials must be >= 1")
    report = oracle_check(0 if args.seed is None else args.seed, trials, cfg["oracle.tol"])
    text = report.format()
    print(text)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "oracle.tsv").write_text(text + "\n")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_ablate(args) -> int:
    from .checks import ablate, format_ablation
    from .train import load_data

    cfg = _load_config(args, None)
    seeds = None if args.seed is None else [args.seed + i for i in range(cfg["ablate.seeds"])]
    rows = ablate(cfg, load_data(cfg), seeds, log=print)
    table = format_ablation(rows)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.tsv").write_text(table)
    print(table, end="")
    return EXIT_OK


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "oracle": cmd_oracle,
    "ablate": cmd_ablate,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "config":
        print(describe(), end="")
        return EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
