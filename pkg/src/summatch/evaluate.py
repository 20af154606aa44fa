"""Accuracy, cross-dataset generalization, and input-mode ablation runners.

All reports serialize to both a machine-readable CSV and an aligned text
table. Floats are written with repr so the CSVs round-trip exactly and two
runs with one seed produce byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import torch

from .compose import InputMode
from .data import McqaExample
from .encoder import EncoderConfig
from .errors import CheckpointError, EvaluationError
from .model import SummaryMatcher, argmax_lowest, comparable_config, load_checkpoint
from .train import TrainConfig, TrainResult, train

METRICS_HEADER = "dataset,mode,n,accuracy"
GENERALIZATION_HEADER = "direction,in_domain,cross_domain,drop"
ABLATION_HEADER = "mode,task,accuracy"


@dataclass(frozen=True)
class Metrics:
    """Accuracy over one labeled dataset."""

    accuracy: float
    n: int
    bitmap: tuple[bool, ...]

    def __post_init__(self):
        if self.n <= 0:
            raise EvaluationError("metrics require at least one example")


def evaluate(
    model: SummaryMatcher,
    dataset: Sequence[McqaExample],
    mode: InputMode | None = None,
) -> Metrics:
    """Accuracy of the model on a labeled dataset, order-independent."""
    if not dataset:
        raise EvaluationError("cannot evaluate an empty dataset")
    unlabeled = [ex.id for ex in dataset if ex.gold is None]
    if unlabeled:
        raise EvaluationError(
            f"dataset has unlabeled examples (e.g. {unlabeled[:3]}); "
            "use the prediction path for unlabeled data"
        )
    bitmap = []
    with torch.no_grad():
        for ex in dataset:
            logits = model.option_logits(ex, mode).numpy()
            bitmap.append(argmax_lowest(logits) == ex.gold)
    return Metrics(
        accuracy=sum(bitmap) / len(bitmap), n=len(bitmap), bitmap=tuple(bitmap)
    )


def write_metrics_csv(
    path: str | Path, rows: Sequence[tuple[str, InputMode, Metrics]]
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [METRICS_HEADER]
    for dataset_name, mode, metrics in rows:
        lines.append(
            f"{dataset_name},{InputMode(mode).value},{metrics.n},{metrics.accuracy!r}"
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@dataclass(frozen=True)
class DirectionResult:
    """One train-on-A / test-on-B direction of the generalization study."""

    direction: str
    in_domain: float
    cross_domain: float
    drop: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "drop", self.in_domain - self.cross_domain)


@dataclass
class GeneralizationReport:
    directions: list[DirectionResult]

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [GENERALIZATION_HEADER]
        for d in self.directions:
            lines.append(f"{d.direction},{d.in_domain!r},{d.cross_domain!r},{d.drop!r}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    def to_text(self) -> str:
        rows = [("direction", "in_domain", "cross_domain", "drop")]
        for d in self.directions:
            rows.append(
                (d.direction, f"{d.in_domain:.4f}", f"{d.cross_domain:.4f}",
                 f"{d.drop:.4f}")
            )
        return render_table(rows)


def cross_evaluate(
    checkpoint_a: str | Path,
    checkpoint_b: str | Path,
    dataset_a: Sequence[McqaExample],
    dataset_b: Sequence[McqaExample],
    mode: InputMode | None = None,
    labels: tuple[str, str] = ("I", "N"),
) -> GeneralizationReport:
    """Swap the evaluation datasets between two comparably trained models.

    The drop of each direction is measured against that model's own
    in-domain accuracy. The two checkpoints must have been trained with
    identical configuration apart from the training data.
    """
    model_a, payload_a = load_checkpoint(checkpoint_a)
    model_b, payload_b = load_checkpoint(checkpoint_b)
    conf_a, conf_b = comparable_config(payload_a), comparable_config(payload_b)
    if conf_a != conf_b:
        diff = [
            key for key in conf_a
            if conf_a.get(key) != conf_b.get(key)
        ]
        raise CheckpointError(
            f"checkpoints differ beyond their training data (fields: {diff}); "
            "the generalization comparison would be invalid"
        )
    if mode is not None and InputMode(mode) != model_a.input_mode:
        raise CheckpointError(
            f"checkpoints were trained with mode {model_a.input_mode.value}, "
            f"not {InputMode(mode).value}"
        )
    a, b = labels
    return GeneralizationReport(
        directions=[
            DirectionResult(
                direction=f"{a}->{b}",
                in_domain=evaluate(model_a, dataset_a).accuracy,
                cross_domain=evaluate(model_a, dataset_b).accuracy,
            ),
            DirectionResult(
                direction=f"{b}->{a}",
                in_domain=evaluate(model_b, dataset_b).accuracy,
                cross_domain=evaluate(model_b, dataset_a).accuracy,
            ),
        ]
    )


@dataclass(frozen=True)
class AblationRow:
    mode: InputMode
    task: str
    accuracy: float


@dataclass
class AblationReport:
    rows: list[AblationRow]
    # Hash of the shared configuration with the input mode removed; equal
    # across rows by construction, so differences are attributable to the mode.
    base_config_hash: str

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [ABLATION_HEADER]
        for row in self.rows:
            lines.append(f"{row.mode.value},{row.task},{row.accuracy!r}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    def to_text(self) -> str:
        rows = [("mode", "task", "accuracy")]
        for row in self.rows:
            rows.append((row.mode.value, row.task, f"{row.accuracy:.4f}"))
        return render_table(rows)


def ablation_config_hash(config: TrainConfig, encoder_config: EncoderConfig) -> str:
    payload = {**config.as_dict(), "encoder": asdict(encoder_config)}
    payload.pop("input_mode")
    payload.pop("checkpoint_dir")
    blob = json.dumps(payload, sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def run_ablation(
    modes: Sequence[InputMode],
    tasks: dict[str, tuple[list[McqaExample], list[McqaExample]]],
    base_config: TrainConfig,
    encoder_config: EncoderConfig | None = None,
) -> AblationReport:
    """One full train + dev-evaluate cycle per (mode, task) cell.

    Every cell reuses the seed and configuration of base_config so the rows
    differ only in their input mode.
    """
    if not modes:
        raise EvaluationError("ablation requires at least one input mode")
    if not tasks:
        raise EvaluationError("ablation requires at least one task dataset")
    if encoder_config is None:
        encoder_config = EncoderConfig(seed=base_config.seed)
    rows = []
    for mode in modes:
        mode = InputMode(mode)
        config = replace(base_config, input_mode=mode, checkpoint_dir=None)
        for task, (train_set, dev_set) in tasks.items():
            model = SummaryMatcher.build(
                encoder_config, input_mode=mode, max_len=config.max_len
            )
            result: TrainResult = train(config, train_set, dev_set, model)
            rows.append(
                AblationRow(mode=mode, task=task, accuracy=result.best_dev_acc)
            )
    return AblationReport(
        rows=rows,
        base_config_hash=ablation_config_hash(base_config, encoder_config),
    )


def render_table(rows: Sequence[tuple[str, ...]]) -> str:
    """Align rows into a fixed-width text table (header + separator + body)."""
    widths = [max(len(r[c]) for r in rows) for c in range(len(rows[0]))]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)
