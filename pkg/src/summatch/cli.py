"""Command-line entry point wiring validation, training, and the reports.

Exit codes: 0 on success, 1 for configuration or input-validation problems
(including usage errors and incompatible checkpoints), 2 for failures
arising while a run executes. Every invocation creates a run directory
named `<command>-<task>-<mode>-<seed>-<timestamp>` under the output root
and writes the resolved config snapshot next to its outputs.
"""

from __future__ import annotations

import argparse
import os
import re
import sys
from datetime import datetime
from pathlib import Path

import torch

from .analyze import emit_report, prediction_record
from .compose import InputMode
from .config import SNAPSHOT_NAME, RunConfig
from .data import expected_count_for, load_and_audit, load_dataset
from .errors import (
    CheckpointError,
    ConfigError,
    DatasetError,
    SummatchError,
    ValidationError,
)
from .evaluate import cross_evaluate, evaluate, run_ablation, write_metrics_csv
from .model import SummaryMatcher, load_checkpoint
from .train import Trainer

_MODE_CHOICES = [mode.value for mode in InputMode]


class _ArgumentParser(argparse.ArgumentParser):
    # usage errors must exit 1 per the CLI contract, not argparse's 2
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _add(parser: argparse.ArgumentParser, registry: dict, flag: str,
         section: str | None, key: str | None, help_text: str, **kwargs) -> None:
    action = parser.add_argument(flag, help=help_text, **kwargs)
    if section is not None:
        registry[action.dest] = (section, key)


def _add_common(parser: argparse.ArgumentParser, registry: dict) -> None:
    parser.add_argument("--config", help="INI config file (flags override it)")
    _add(parser, registry, "--out-root", "run", "out_root",
         "directory that receives run directories")
    _add(parser, registry, "--seed", "train", "seed",
         "seed for parameter init and shuffling")
    _add(parser, registry, "--placeholder", "data", "placeholder",
         "placeholder token expected in questions")


def _add_train_flags(parser: argparse.ArgumentParser, registry: dict) -> None:
    _add(parser, registry, "--mode", "train", "input_mode",
         "input composition mode", choices=_MODE_CHOICES)
    _add(parser, registry, "--epochs", "train", "epochs", "training epochs")
    _add(parser, registry, "--lr", "train", "learning_rate", "Adam learning rate")
    _add(parser, registry, "--batch-size", "train", "batch_size",
         "examples per optimizer step")
    _add(parser, registry, "--max-len", "train", "max_len",
         "composed sequence length budget")
    _add(parser, registry, "--clip-norm", "train", "clip_norm",
         "global gradient norm cap; 'none' disables")


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = _ArgumentParser(
        prog="summatch",
        description="Train and evaluate summary-matching readers on "
        "five-option cloze questions.",
    )
    # one flag can target different sections per subcommand (e.g. --data),
    # so the dest -> (section, key) registry is kept per command
    registries: dict[str, dict[str, tuple[str, str]]] = {}
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("validate", help="audit a JSONL dataset file")
    reg = registries["validate"] = {}
    _add_common(p, reg)
    _add(p, reg, "--data", "validate", "data", "JSONL file to audit")
    _add(p, reg, "--task", "run", "task",
         "task name for expected-count comparison")
    _add(p, reg, "--split", "validate", "split",
         "split name for expected-count comparison",
         choices=["train", "dev", "test"])

    p = sub.add_parser("train", help="train a model and keep the best epoch")
    reg = registries["train"] = {}
    _add_common(p, reg)
    _add(p, reg, "--task", "run", "task", "task name resolved via [data]")
    _add(p, reg, "--train-file", "train", "train_file",
         "explicit training JSONL (overrides task lookup)")
    _add(p, reg, "--dev-file", "train", "dev_file",
         "explicit dev JSONL (overrides task lookup)")
    _add_train_flags(p, reg)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    reg = registries["eval"] = {}
    _add_common(p, reg)
    _add(p, reg, "--ckpt", "eval", "checkpoint", "model checkpoint path")
    _add(p, reg, "--data", "eval", "data", "explicit JSONL to evaluate")
    _add(p, reg, "--task", "run", "task", "task name resolved via [data]")
    _add(p, reg, "--split", "eval", "split", "split to evaluate",
         choices=["train", "dev", "test"])
    _add(p, reg, "--mode", "train", "input_mode",
         "override the checkpoint's input mode", choices=_MODE_CHOICES)

    p = sub.add_parser("crosseval",
                       help="swap eval data between two trained checkpoints")
    reg = registries["crosseval"] = {}
    _add_common(p, reg)
    _add(p, reg, "--ckpt-i", "crosseval", "ckpt_i",
         "checkpoint trained on the first task")
    _add(p, reg, "--ckpt-n", "crosseval", "ckpt_n",
         "checkpoint trained on the second task")
    _add(p, reg, "--data-i", "crosseval", "data_i",
         "explicit JSONL for the first task")
    _add(p, reg, "--data-n", "crosseval", "data_n",
         "explicit JSONL for the second task")
    _add(p, reg, "--task-i", "crosseval", "task_i", "first task name")
    _add(p, reg, "--task-n", "crosseval", "task_n", "second task name")
    _add(p, reg, "--split", "crosseval", "split",
         "split evaluated on both sides", choices=["train", "dev", "test"])

    p = sub.add_parser("ablate", help="train one model per input mode and task")
    reg = registries["ablate"] = {}
    _add_common(p, reg)
    _add(p, reg, "--modes", "ablate", "modes", "comma-separated input modes")
    _add(p, reg, "--tasks", "ablate", "tasks", "comma-separated task names")
    _add(p, reg, "--task", "run", "task", "single task shorthand")
    _add_train_flags(p, reg)

    p = sub.add_parser("analyze",
                       help="emit per-option prediction records for inspection")
    reg = registries["analyze"] = {}
    _add_common(p, reg)
    _add(p, reg, "--ckpt", "analyze", "checkpoint", "model checkpoint path")
    _add(p, reg, "--data", "analyze", "data", "explicit JSONL to analyze")
    _add(p, reg, "--task", "run", "task", "task name resolved via [data]")
    _add(p, reg, "--split", "analyze", "split", "split to analyze",
         choices=["train", "dev", "test"])
    _add(p, reg, "--ids", "analyze", "ids",
         "comma-separated example ids to keep (default: all)")
    _add(p, reg, "--bias", "analyze", "bias",
         "constant added to logits in the display column")
    _add(p, reg, "--format", "analyze", "format", "output format",
         choices=["csv", "plot"])
    _add(p, reg, "--mode", "train", "input_mode",
         "override the checkpoint's input mode", choices=_MODE_CHOICES)

    return parser, registries


def _flag_overrides(args: argparse.Namespace,
                    registry: dict) -> dict[tuple[str, str], str]:
    overrides = {}
    for dest, target in registry.items():
        value = getattr(args, dest, None)
        if value is not None:
            overrides[target] = str(value)
    return overrides


def _sanitize(part: str) -> str:
    part = re.sub(r"[^A-Za-z0-9_.+]+", "_", part.strip())
    return part or "all"


def _file_stem(path_text: str) -> str:
    return Path(path_text).stem if path_text else ""


def _run_dir_parts(cfg: RunConfig, command: str) -> tuple[str, str]:
    task = cfg.get("run", "task")
    mode = cfg.get("train", "input_mode")
    if command == "validate":
        task = task or _file_stem(cfg.get("validate", "data"))
        mode = "na"
    elif command == "eval":
        task = task or _file_stem(cfg.get("eval", "data"))
    elif command == "analyze":
        task = task or _file_stem(cfg.get("analyze", "data"))
    elif command == "crosseval":
        task = f"{cfg.get('crosseval', 'task_i')}+{cfg.get('crosseval', 'task_n')}"
    elif command == "ablate":
        tasks = cfg.get_list("ablate", "tasks") or ([task] if task else [])
        task = "+".join(tasks)
        mode = "multi"
    elif command == "train":
        task = task or _file_stem(cfg.get("train", "train_file"))
    return _sanitize(task), _sanitize(mode)


def make_run_dir(cfg: RunConfig, command: str) -> Path:
    task, mode = _run_dir_parts(cfg, command)
    seed = cfg.get("train", "seed")
    stamp = datetime.now().strftime("%Y%m%dT%H%M%S.%f")
    root = Path(cfg.get("run", "out_root"))
    root.mkdir(parents=True, exist_ok=True)
    base = f"{command}-{task}-{mode}-{seed}-{stamp}"
    candidate = root / base
    suffix = 0
    while True:
        try:
            candidate.mkdir()
            return candidate
        except FileExistsError:
            suffix += 1
            candidate = root / f"{base}-{suffix}"


def _mode_override(cfg: RunConfig) -> InputMode | None:
    """The mode to evaluate under, or None to use the checkpoint's own."""
    if cfg.is_default("train", "input_mode"):
        return None
    return cfg.get_mode()


def _load_labeled(cfg: RunConfig, path: str, split: str) -> list:
    return load_dataset(path, split, placeholder=cfg.placeholder)


def _resolve_data(cfg: RunConfig, section: str) -> tuple[str, str]:
    """Explicit file if given, else the [data] lookup; returns (path, name)."""
    explicit = cfg.get(section, "data")
    task = cfg.get("run", "task")
    if explicit:
        return explicit, task or _file_stem(explicit)
    split = cfg.get(section, "split") or "dev"
    return cfg.data_path(task, split), task


def cmd_validate(cfg: RunConfig, run_dir: Path) -> None:
    data = cfg.get("validate", "data")
    if not data:
        raise ConfigError("validate requires --data (or [validate] data)")
    split = cfg.get("validate", "split")
    task = cfg.get("run", "task")
    expected = expected_count_for(task, split) if task and split else None
    examples, stats = load_and_audit(
        data,
        split or "all",
        placeholder=cfg.placeholder,
        expected_count=expected,
    )
    line = f"{data}: {stats.summary_line()}"
    print(line)
    (run_dir / "stats.txt").write_text(line + "\n", encoding="utf-8")
    if stats.matches_expected() is False:
        print(
            f"warning: expected {stats.expected_count} records for "
            f"{task}/{split}, found {stats.count}",
            file=sys.stderr,
        )
    bad = stats.count - len(examples)
    if bad:
        raise ValidationError(f"{bad} of {stats.count} records are invalid")


def cmd_train(cfg: RunConfig, run_dir: Path) -> None:
    task = cfg.get("run", "task")
    train_path = cfg.get("train", "train_file") or cfg.data_path(task, "train")
    dev_path = cfg.get("train", "dev_file") or cfg.data_path(task, "dev")
    train_set = _load_labeled(cfg, train_path, "train")
    dev_set = _load_labeled(cfg, dev_path, "dev")
    train_config = cfg.train_config(checkpoint_dir=str(run_dir))
    model = SummaryMatcher.build(
        encoder_config=cfg.encoder_config(),
        input_mode=train_config.input_mode,
        max_len=train_config.max_len,
        placeholder=cfg.placeholder,
    )
    result = Trainer(model, train_config, train_set, dev_set).run()
    print(
        f"best epoch {result.history.best_epoch} "
        f"dev accuracy {result.best_dev_acc:.4f} "
        f"checkpoint {result.checkpoint_path}"
    )


def cmd_eval(cfg: RunConfig, run_dir: Path) -> None:
    ckpt = cfg.get("eval", "checkpoint")
    if not ckpt:
        raise ConfigError("eval requires --ckpt (or [eval] checkpoint)")
    data_path, name = _resolve_data(cfg, "eval")
    dataset = _load_labeled(cfg, data_path, cfg.get("eval", "split"))
    model, payload = load_checkpoint(ckpt)
    mode = _mode_override(cfg) or InputMode(payload["input_mode"])
    metrics = evaluate(model, dataset, mode)
    out = write_metrics_csv(run_dir / "metrics.csv", [(name, mode, metrics)])
    print(
        f"{name} ({mode.value}): accuracy {metrics.accuracy:.4f} "
        f"on {metrics.n} examples -> {out}"
    )


def cmd_crosseval(cfg: RunConfig, run_dir: Path) -> None:
    ckpt_i = cfg.get("crosseval", "ckpt_i")
    ckpt_n = cfg.get("crosseval", "ckpt_n")
    if not ckpt_i or not ckpt_n:
        raise ConfigError("crosseval requires --ckpt-i and --ckpt-n")
    task_i = cfg.get("crosseval", "task_i")
    task_n = cfg.get("crosseval", "task_n")
    split = cfg.get("crosseval", "split")
    path_i = cfg.get("crosseval", "data_i") or cfg.data_path(task_i, split)
    path_n = cfg.get("crosseval", "data_n") or cfg.data_path(task_n, split)
    report = cross_evaluate(
        ckpt_i,
        ckpt_n,
        _load_labeled(cfg, path_i, split),
        _load_labeled(cfg, path_n, split),
        mode=_mode_override(cfg),
        labels=(task_i, task_n),
    )
    report.to_csv(run_dir / "generalization.csv")
    (run_dir / "generalization.txt").write_text(
        report.to_text() + "\n", encoding="utf-8"
    )
    print(report.to_text())


def cmd_ablate(cfg: RunConfig, run_dir: Path) -> None:
    modes = []
    for raw in cfg.get_list("ablate", "modes"):
        try:
            modes.append(InputMode(raw))
        except ValueError:
            raise ConfigError(f"unknown input mode {raw!r} in --modes")
    tasks = cfg.get_list("ablate", "tasks")
    if not tasks:
        single = cfg.get("run", "task")
        if not single:
            raise ConfigError("ablate requires --tasks or --task")
        tasks = [single]
    task_data = {}
    for task in tasks:
        task_data[task] = (
            _load_labeled(cfg, cfg.data_path(task, "train"), "train"),
            _load_labeled(cfg, cfg.data_path(task, "dev"), "dev"),
        )
    report = run_ablation(
        modes, task_data, cfg.train_config(), cfg.encoder_config()
    )
    report.to_csv(run_dir / "ablation.csv")
    (run_dir / "ablation.txt").write_text(report.to_text() + "\n", encoding="utf-8")
    print(report.to_text())


def cmd_analyze(cfg: RunConfig, run_dir: Path) -> None:
    ckpt = cfg.get("analyze", "checkpoint")
    if not ckpt:
        raise ConfigError("analyze requires --ckpt (or [analyze] checkpoint)")
    data_path, _ = _resolve_data(cfg, "analyze")
    dataset = load_dataset(
        data_path, cfg.get("analyze", "split"), placeholder=cfg.placeholder
    )
    wanted = cfg.get_list("analyze", "ids")
    if wanted:
        by_id = {ex.id: ex for ex in dataset}
        missing = [i for i in wanted if i not in by_id]
        if missing:
            raise ConfigError(f"ids not present in {data_path}: {missing}")
        dataset = [by_id[i] for i in wanted]
    model, _ = load_checkpoint(ckpt)
    bias = cfg.get_float("analyze", "bias")
    mode = _mode_override(cfg)
    records = [
        prediction_record(model, ex, mode=mode, display_bias=bias)
        for ex in dataset
    ]
    fmt = cfg.get("analyze", "format")
    if fmt not in ("csv", "plot"):
        raise ConfigError(f"unknown --format {fmt!r}; expected csv or plot")
    suffix = "csv" if fmt == "csv" else "png"
    out = emit_report(records, run_dir / f"analysis.{suffix}", format=fmt)
    print(f"wrote {len(records)} records to {out}")


_HANDLERS = {
    "validate": cmd_validate,
    "train": cmd_train,
    "eval": cmd_eval,
    "crosseval": cmd_crosseval,
    "ablate": cmd_ablate,
    "analyze": cmd_analyze,
}


def main(argv=None) -> int:
    parser, registries = build_parser()
    try:
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:
            # argparse exits directly only for --help (code 0)
            return 0 if not exc.code else 1
        cfg = RunConfig.load(
            args.config, os.environ, _flag_overrides(args, registries[args.command])
        )
        torch.set_num_threads(1)
        run_dir = make_run_dir(cfg, args.command)
        cfg.write_snapshot(run_dir / SNAPSHOT_NAME, args.command)
        _HANDLERS[args.command](cfg, run_dir)
        return 0
    except (ConfigError, DatasetError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SummatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
