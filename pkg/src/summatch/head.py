"""Option scoring head: pooled pair -> scalar score -> 5-way distribution -> loss.

The score of option k is v . tanh(W [h_p ; h_s] + b) with W of shape
(hidden, 2*hidden), so one shared parameter set is applied to every option
and the 5-way softmax stays meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .data import NUM_OPTIONS


class OptionScorerHead(nn.Module):
    """Learnable scorer over (passage, candidate) pooled vector pairs."""

    def __init__(self, hidden_dim: int, seed: int = 0):
        super().__init__()
        if hidden_dim < 2:
            raise ValueError("hidden_dim must be >= 2")
        self.hidden_dim = hidden_dim
        self.W = nn.Parameter(torch.empty(hidden_dim, 2 * hidden_dim, dtype=torch.float64))
        self.b = nn.Parameter(torch.zeros(hidden_dim, dtype=torch.float64))
        self.v = nn.Parameter(torch.empty(hidden_dim, dtype=torch.float64))
        self.reset_parameters(seed)

    def reset_parameters(self, seed: int = 0) -> None:
        # Fan-in scaling over the concatenated 2l-dimensional input; b = 0.
        bound = 1.0 / (2 * self.hidden_dim) ** 0.5
        g = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            self.W.uniform_(-bound, bound, generator=g)
            self.b.zero_()
            self.v.uniform_(-bound, bound, generator=g)

    def forward(self, h_p: torch.Tensor, h_s: torch.Tensor) -> torch.Tensor:
        """Score pooled pairs; accepts (l,) vectors or (B, l) batches."""
        if h_p.shape != h_s.shape or h_p.shape[-1] != self.hidden_dim:
            raise ValueError(
                f"expected matching (..., {self.hidden_dim}) vectors, "
                f"got {tuple(h_p.shape)} and {tuple(h_s.shape)}"
            )
        pair = torch.cat([h_p, h_s], dim=-1)
        hidden = torch.tanh(pair @ self.W.T + self.b)
        return hidden @ self.v


def score_option(h_p, h_s, head: OptionScorerHead) -> float:
    """Score one (passage, candidate) pooled pair; bounded by ||v||_1."""
    h_p = torch.as_tensor(np.asarray(h_p), dtype=torch.float64)
    h_s = torch.as_tensor(np.asarray(h_s), dtype=torch.float64)
    if h_p.dim() != 1 or h_s.dim() != 1:
        raise ValueError("score_option expects single vectors, not batches")
    with torch.no_grad():
        return float(head(h_p, h_s))


def option_distribution(logits) -> np.ndarray:
    """Softmax over the five option scores, stable via max subtraction."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.shape != (NUM_OPTIONS,):
        raise ValueError(f"expected {NUM_OPTIONS} logits, got shape {logits.shape}")
    if not np.all(np.isfinite(logits)):
        raise ValueError(f"non-finite logit in {logits}")
    shifted = logits - logits.max()
    exp = np.exp(shifted)
    return exp / exp.sum()


@dataclass(frozen=True)
class OptionScores:
    """Per-option logits and probabilities for one example."""

    logits: tuple[float, ...]
    probabilities: tuple[float, ...]
    predicted: int
    gold: int | None = None

    @classmethod
    def from_logits(cls, logits, gold: int | None = None) -> "OptionScores":
        logits = np.asarray(logits, dtype=np.float64)
        probs = option_distribution(logits)
        return cls(
            logits=tuple(float(x) for x in logits),
            probabilities=tuple(float(p) for p in probs),
            # np.argmax resolves ties to the lowest index.
            predicted=int(np.argmax(logits)),
            gold=gold,
        )

    @property
    def correct(self) -> bool | None:
        if self.gold is None:
            return None
        return self.predicted == self.gold


def nll_loss(scores: OptionScores, gold: int) -> float:
    """Negative log-probability of the gold option.

    Computed from the logits via log-sum-exp, so the result stays finite for
    any finite logits instead of overflowing through an underflowed
    probability.
    """
    if not 0 <= gold < NUM_OPTIONS:
        raise ValueError(f"gold index {gold} outside [0, {NUM_OPTIONS - 1}]")
    logits = np.asarray(scores.logits, dtype=np.float64)
    m = logits.max()
    lse = m + np.log(np.exp(logits - m).sum())
    return float(lse - logits[gold])


def batch_nll(logits: torch.Tensor, gold: torch.Tensor) -> torch.Tensor:
    """Differentiable per-example NLL for (B, 5) logits and (B,) gold indices."""
    lse = torch.logsumexp(logits, dim=-1)
    picked = logits.gather(-1, gold.unsqueeze(-1)).squeeze(-1)
    return lse - picked
