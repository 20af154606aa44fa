"""Full scoring model: compose -> encode -> pool -> head, plus checkpointing.

A model instance bundles the encoder, the scoring head, the tokenizer and
the composition settings so that every caller (trainer, evaluator, analyzer,
CLI) scores options through one code path.
"""

from __future__ import annotations

from dataclasses import asdict
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .compose import (
    CANDIDATE_SEGMENTS,
    SEG_PASSAGE,
    ComposedInput,
    InputMode,
    compose_all_options,
)
from .data import PLACEHOLDER, McqaExample
from .encoder import EncoderConfig, TinyTransformerEncoder, build_encoder
from .errors import CheckpointError
from .head import OptionScorerHead, OptionScores
from .tokenizer import PAD_ID, WhitespaceHashTokenizer

MODEL_CHECKPOINT_VERSION = 1


def collate_inputs(
    inputs: Sequence[ComposedInput],
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
    """Pad composed inputs to a (B, T) batch.

    Returns token ids, attention mask, and 0/1 pooling masks for the passage
    side and the candidate side (summary plus raw question/answer tokens).
    """
    max_t = max(len(ci.tokens) for ci in inputs)
    b = len(inputs)
    ids = torch.full((b, max_t), PAD_ID, dtype=torch.long)
    mask = torch.zeros(b, max_t, dtype=torch.float64)
    passage = torch.zeros(b, max_t, dtype=torch.float64)
    candidate = torch.zeros(b, max_t, dtype=torch.float64)
    for i, ci in enumerate(inputs):
        t = len(ci.tokens)
        ids[i, :t] = torch.tensor(ci.tokens, dtype=torch.long)
        mask[i, :t] = torch.tensor(ci.attention_mask, dtype=torch.float64)
        for j, seg in enumerate(ci.segment_map):
            if not ci.attention_mask[j]:
                continue
            if seg == SEG_PASSAGE:
                passage[i, j] = 1.0
            elif seg in CANDIDATE_SEGMENTS:
                candidate[i, j] = 1.0
    return ids, mask, passage, candidate


def masked_mean(states: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Mean over the time axis of (B, T, l) states where mask (B, T) is 1."""
    counts = mask.sum(dim=1, keepdim=True)
    if torch.any(counts == 0):
        raise ValueError("cannot pool an empty segment")
    return (states * mask.unsqueeze(-1)).sum(dim=1) / counts


class SummaryMatcher:
    """Scores the five options of an example against its passage."""

    def __init__(
        self,
        encoder: TinyTransformerEncoder,
        head: OptionScorerHead,
        tokenizer: WhitespaceHashTokenizer,
        input_mode: InputMode = InputMode.PASSAGE_SUMMARY,
        max_len: int = 256,
        placeholder: str = PLACEHOLDER,
    ):
        if encoder.config.hidden_dim != head.hidden_dim:
            raise ValueError(
                f"encoder hidden_dim {encoder.config.hidden_dim} != "
                f"head hidden_dim {head.hidden_dim}"
            )
        self.encoder = encoder
        self.head = head
        self.tokenizer = tokenizer
        self.input_mode = InputMode(input_mode)
        self.max_len = max_len
        self.placeholder = placeholder

    @classmethod
    def build(
        cls,
        encoder_config: EncoderConfig | None = None,
        *,
        input_mode: InputMode = InputMode.PASSAGE_SUMMARY,
        max_len: int = 256,
        seed: int = 0,
        placeholder: str = PLACEHOLDER,
    ) -> "SummaryMatcher":
        """Fresh model; encoder and head are both seeded from the config."""
        if encoder_config is None:
            encoder_config = EncoderConfig(seed=seed)
        encoder = build_encoder(encoder_config)
        head = OptionScorerHead(encoder_config.hidden_dim, seed=encoder_config.seed)
        tokenizer = WhitespaceHashTokenizer(encoder_config.vocab_size)
        return cls(encoder, head, tokenizer, input_mode, max_len, placeholder)

    def parameters(self):
        yield from self.encoder.parameters()
        yield from self.head.parameters()

    def compose(self, example: McqaExample, mode: InputMode | None = None):
        return compose_all_options(
            example,
            mode or self.input_mode,
            self.max_len,
            self.tokenizer,
            placeholder=self.placeholder,
        )

    def logits_from_inputs(self, inputs: Sequence[ComposedInput]) -> torch.Tensor:
        """Differentiable scores, one per composed input."""
        ids, mask, passage, candidate = collate_inputs(inputs)
        states = self.encoder(ids, mask)
        h_p = masked_mean(states, passage)
        h_s = masked_mean(states, candidate)
        return self.head(h_p, h_s)

    def option_logits(
        self, example: McqaExample, mode: InputMode | None = None
    ) -> torch.Tensor:
        """Scores for the five options of one example, as a (5,) tensor."""
        return self.logits_from_inputs(self.compose(example, mode))

    def predict(
        self, example: McqaExample, mode: InputMode | None = None
    ) -> OptionScores:
        with torch.no_grad():
            logits = self.option_logits(example, mode)
        return OptionScores.from_logits(logits.numpy(), gold=example.gold)

    def state_dict(self) -> dict:
        return {"encoder": self.encoder.state_dict(), "head": self.head.state_dict()}

    def load_state_dict(self, state: dict) -> None:
        self.encoder.load_state_dict(state["encoder"])
        self.head.load_state_dict(state["head"])

    def clone_state(self) -> dict:
        return {
            "encoder": {k: v.clone() for k, v in self.encoder.state_dict().items()},
            "head": {k: v.clone() for k, v in self.head.state_dict().items()},
        }


def save_checkpoint(
    model: SummaryMatcher,
    path: str | Path,
    *,
    train_config: dict | None = None,
) -> Path:
    """Write the self-describing model container (configs + named tensors)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "version": MODEL_CHECKPOINT_VERSION,
            "encoder_config": asdict(model.encoder.config),
            "input_mode": model.input_mode.value,
            "max_len": model.max_len,
            "placeholder": model.placeholder,
            "tokenizer": {
                "kind": "whitespace_hash",
                "vocab_size": model.tokenizer.vocab_size,
            },
            "state": model.state_dict(),
            "train_config": train_config,
        },
        path,
    )
    return path


def load_checkpoint(path: str | Path) -> tuple[SummaryMatcher, dict]:
    """Rebuild a model from save_checkpoint output; returns (model, payload)."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"model checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"{path}: unreadable checkpoint: {exc}")
    if not isinstance(payload, dict) or "version" not in payload:
        raise CheckpointError(f"{path}: missing mandatory version field")
    if payload["version"] != MODEL_CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {payload['version']}")
    encoder_config = EncoderConfig(**payload["encoder_config"])
    encoder = TinyTransformerEncoder(encoder_config)
    head = OptionScorerHead(encoder_config.hidden_dim)
    tokenizer = WhitespaceHashTokenizer(payload["tokenizer"]["vocab_size"])
    model = SummaryMatcher(
        encoder,
        head,
        tokenizer,
        input_mode=InputMode(payload["input_mode"]),
        max_len=payload["max_len"],
        placeholder=payload.get("placeholder", PLACEHOLDER),
    )
    try:
        model.load_state_dict(payload["state"])
    except RuntimeError as exc:
        raise CheckpointError(f"{path}: parameter/config mismatch: {exc}")
    return model, payload


def comparable_config(payload: dict) -> dict:
    """The checkpoint fields that must match for a fair cross-dataset comparison.

    Everything except the identity of the training data: architecture,
    composition settings, and the optimization recipe.
    """
    train_config = dict(payload.get("train_config") or {})
    for key in ("train_file", "dev_file", "checkpoint_dir", "task"):
        train_config.pop(key, None)
    return {
        "encoder_config": payload["encoder_config"],
        "input_mode": payload["input_mode"],
        "max_len": payload["max_len"],
        "tokenizer": payload["tokenizer"],
        "train_config": train_config,
    }


def argmax_lowest(values: np.ndarray | Sequence[float]) -> int:
    """Index of the maximum, ties resolved to the lowest index."""
    return int(np.argmax(np.asarray(values)))
