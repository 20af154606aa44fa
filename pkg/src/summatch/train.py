"""Fine-tuning loop: Adam over the joint encoder + head parameters.

Batches are whole examples, never individual options, so the five option
inputs of an example always share one softmax. Runs are bit-reproducible
given the seed under single-threaded execution.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .compose import InputMode
from .data import McqaExample
from .errors import ConfigError, TrainingError
from .head import batch_nll
from .model import SummaryMatcher, save_checkpoint

HISTORY_HEADER = "epoch,train_loss,dev_acc,seconds"


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    learning_rate: float = 3e-5
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 4
    max_len: int = 256
    input_mode: InputMode = InputMode.PASSAGE_SUMMARY
    seed: int = 0
    # Guards the from-scratch toy encoder; an artifact choice, not part of
    # the published recipe.
    clip_norm: float = 1.0
    checkpoint_dir: str | None = None

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_len < 8:
            raise ConfigError(f"max_len must be >= 8, got {self.max_len}")

    def as_dict(self) -> dict:
        d = asdict(self)
        d["input_mode"] = self.input_mode.value
        return d


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    dev_acc: float
    seconds: float


@dataclass
class TrainHistory:
    epochs: list[EpochStats] = field(default_factory=list)

    @property
    def best_epoch(self) -> int:
        """Index of the best dev accuracy; ties go to the earlier epoch."""
        if not self.epochs:
            raise ValueError("empty history")
        best = 0
        for i, stats in enumerate(self.epochs):
            if stats.dev_acc > self.epochs[best].dev_acc:
                best = i
        return best

    def to_csv(self, path: str | Path) -> Path:
        # seconds is wall-clock and the one column excluded from the
        # byte-identical reproducibility guarantee.
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [HISTORY_HEADER]
        for s in self.epochs:
            lines.append(f"{s.epoch},{s.train_loss!r},{s.dev_acc!r},{s.seconds:.3f}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path


@dataclass
class TrainResult:
    history: TrainHistory
    best_state: dict
    best_dev_acc: float
    checkpoint_path: Path | None = None


class Trainer:
    """Single-writer optimization loop over one model instance."""

    def __init__(
        self,
        model: SummaryMatcher,
        config: TrainConfig,
        train_set: list[McqaExample],
        dev_set: list[McqaExample],
    ):
        config.validate()
        if not train_set:
            raise ConfigError("train_set is empty")
        for name, dataset in (("train", train_set), ("dev", dev_set)):
            unlabeled = [ex.id for ex in dataset if ex.gold is None]
            if unlabeled:
                raise ConfigError(
                    f"{name} set must be fully labeled; missing labels on "
                    f"{unlabeled[:3]}"
                )
        self.model = model
        self.config = config
        self.train_set = train_set
        self.dev_set = dev_set
        # Composition is pure, so the per-option inputs are built once.
        self._inputs = [model.compose(ex, config.input_mode) for ex in train_set]
        self._gold = torch.tensor([ex.gold for ex in train_set], dtype=torch.long)
        self.optimizer = torch.optim.Adam(
            list(model.parameters()),
            lr=config.learning_rate,
            betas=(config.beta1, config.beta2),
            eps=config.adam_eps,
        )

    def epoch_order(self, epoch: int) -> np.ndarray:
        """Shuffled example order, a pure function of (seed, epoch)."""
        rng = np.random.default_rng([self.config.seed, epoch])
        return rng.permutation(len(self.train_set))

    def step(self, example_indices) -> float:
        """One optimizer update on a batch of examples; returns the pre-update loss."""
        flat = [ci for i in example_indices for ci in self._inputs[i]]
        logits = self.model.logits_from_inputs(flat).view(len(example_indices), -1)
        losses = batch_nll(logits, self._gold[list(example_indices)])
        loss = losses.mean()
        if not torch.isfinite(loss):
            raise TrainingError(
                "non-finite loss on batch of examples "
                f"{[self.train_set[i].id for i in example_indices]}"
            )
        self.optimizer.zero_grad()
        loss.backward()
        if self.config.clip_norm:
            torch.nn.utils.clip_grad_norm_(
                list(self.model.parameters()), self.config.clip_norm
            )
        self.optimizer.step()
        return float(loss.detach())

    def dev_accuracy(self) -> float:
        from .evaluate import evaluate  # local import to avoid a cycle

        if not self.dev_set:
            return 0.0
        return evaluate(self.model, self.dev_set, self.config.input_mode).accuracy

    def run(self) -> TrainResult:
        history = TrainHistory()
        best_state = self.model.clone_state()
        best_acc = -1.0
        n = len(self.train_set)
        bs = self.config.batch_size
        for epoch in range(self.config.epochs):
            started = time.perf_counter()
            order = self.epoch_order(epoch)
            losses = []
            for lo in range(0, n, bs):
                losses.append(self.step(order[lo : lo + bs]))
            dev_acc = self.dev_accuracy()
            history.epochs.append(
                EpochStats(
                    epoch=epoch,
                    train_loss=float(np.mean(losses)),
                    dev_acc=dev_acc,
                    seconds=time.perf_counter() - started,
                )
            )
            if dev_acc > best_acc:
                best_acc = dev_acc
                best_state = self.model.clone_state()
        result = TrainResult(history=history, best_state=best_state, best_dev_acc=best_acc)
        if self.config.checkpoint_dir is not None:
            result.checkpoint_path = self._persist(best_state, history)
        return result

    def _persist(self, best_state: dict, history: TrainHistory) -> Path:
        out_dir = Path(self.config.checkpoint_dir)
        snapshot = self.model.clone_state()
        try:
            self.model.load_state_dict(best_state)
            path = save_checkpoint(
                self.model, out_dir / "best.ckpt", train_config=self.config.as_dict()
            )
            history.to_csv(out_dir / "history.csv")
        except OSError as exc:
            raise TrainingError(f"failed to persist checkpoint: {exc}")
        finally:
            self.model.load_state_dict(snapshot)
        return path


def train(
    config: TrainConfig,
    train_set: list[McqaExample],
    dev_set: list[McqaExample],
    model: SummaryMatcher,
) -> TrainResult:
    """Train the model in place and return the history plus the best state."""
    return Trainer(model, config, train_set, dev_set).run()
