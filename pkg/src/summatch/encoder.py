"""Sequence encoder behind a swappable contract.

The toy encoder (token embedding + sinusoidal positions + a couple of
pre-norm self-attention blocks) exercises the full data flow at test speed;
the pretrained-adapter kind fills the same contract with externally supplied
weights loaded from a checkpoint file. Hidden states are kept in float64 so
finite-difference gradient checks are meaningful.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import torch
from torch import nn

from .compose import CANDIDATE_SEGMENTS, SEG_PASSAGE, ComposedInput
from .errors import CheckpointError, ConfigError

ENCODER_KINDS = ("toy", "pretrained-adapter")
ENCODER_CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class EncoderConfig:
    kind: str = "toy"
    hidden_dim: int = 32
    num_layers: int = 2
    num_heads: int = 4
    ffn_dim: int = 64
    vocab_size: int = 4096
    max_positions: int = 512
    # Scale on the (non-learned) sinusoidal position signal; 0 disables it.
    pos_scale: float = 0.5
    emb_init_std: float = 0.5
    seed: int = 0
    checkpoint: str | None = None

    def validate(self) -> None:
        if self.kind not in ENCODER_KINDS:
            raise ConfigError(f"unknown encoder kind {self.kind!r}")
        if self.hidden_dim < 2:
            raise ConfigError("hidden_dim must be >= 2")
        if self.hidden_dim % self.num_heads != 0:
            raise ConfigError(
                f"hidden_dim {self.hidden_dim} not divisible by "
                f"num_heads {self.num_heads}"
            )
        if self.num_layers < 0 or self.vocab_size < 4 or self.max_positions < 1:
            raise ConfigError("invalid encoder geometry")
        if self.kind == "pretrained-adapter" and not self.checkpoint:
            raise ConfigError("pretrained-adapter requires a checkpoint path")


@dataclass
class HiddenStates:
    """Final-layer states, one column per input token (hidden_dim x seq_len)."""

    states: torch.Tensor
    segment_map: tuple[str, ...]
    attention_mask: tuple[int, ...]

    def __post_init__(self):
        if self.states.shape[1] != len(self.segment_map):
            raise ValueError(
                f"states have {self.states.shape[1]} columns but segment_map "
                f"has {len(self.segment_map)} entries"
            )


def sinusoidal_positions(n_positions: int, dim: int) -> torch.Tensor:
    """Fixed sin/cos position table of shape (n_positions, dim)."""
    position = torch.arange(n_positions, dtype=torch.float64).unsqueeze(1)
    half = torch.arange(0, dim, 2, dtype=torch.float64)
    freq = torch.exp(-math.log(10000.0) * half / dim)
    table = torch.zeros(n_positions, dim, dtype=torch.float64)
    table[:, 0::2] = torch.sin(position * freq)
    table[:, 1::2] = torch.cos(position * freq[: dim // 2])
    return table


class SelfAttentionBlock(nn.Module):
    """Pre-norm block: x + attn(LN(x)), then x + ffn(LN(x)).

    Pre-norm keeps the residual stream un-normalized, so zeroing the two
    output projections turns the block into an exact identity.
    """

    def __init__(self, hidden_dim: int, num_heads: int, ffn_dim: int):
        super().__init__()
        self.num_heads = num_heads
        self.head_dim = hidden_dim // num_heads
        kw = {"dtype": torch.float64}
        self.ln_attn = nn.LayerNorm(hidden_dim, **kw)
        self.qkv = nn.Linear(hidden_dim, 3 * hidden_dim, **kw)
        self.attn_out = nn.Linear(hidden_dim, hidden_dim, **kw)
        self.ln_ffn = nn.LayerNorm(hidden_dim, **kw)
        self.ffn_in = nn.Linear(hidden_dim, ffn_dim, **kw)
        self.ffn_out = nn.Linear(ffn_dim, hidden_dim, **kw)

    def forward(self, x: torch.Tensor, key_bias: torch.Tensor) -> torch.Tensor:
        b, t, d = x.shape
        q, k, v = self.qkv(self.ln_attn(x)).chunk(3, dim=-1)
        q = q.view(b, t, self.num_heads, self.head_dim).transpose(1, 2)
        k = k.view(b, t, self.num_heads, self.head_dim).transpose(1, 2)
        v = v.view(b, t, self.num_heads, self.head_dim).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        weights = torch.softmax(scores + key_bias, dim=-1)
        mixed = (weights @ v).transpose(1, 2).reshape(b, t, d)
        x = x + self.attn_out(mixed)
        x = x + self.ffn_out(torch.nn.functional.gelu(self.ffn_in(self.ln_ffn(x))))
        return x


class TinyTransformerEncoder(nn.Module):
    """Deterministic trainable encoder; all parameters seeded from the config."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        config.validate()
        self.config = config
        self.embedding = nn.Embedding(
            config.vocab_size, config.hidden_dim, dtype=torch.float64
        )
        self.blocks = nn.ModuleList(
            SelfAttentionBlock(config.hidden_dim, config.num_heads, config.ffn_dim)
            for _ in range(config.num_layers)
        )
        self.register_buffer(
            "positions",
            sinusoidal_positions(config.max_positions, config.hidden_dim),
            persistent=False,
        )
        self.reset_parameters()

    def reset_parameters(self) -> None:
        # Initialization goes through a local generator so results do not
        # depend on (or disturb) the global torch RNG state.
        g = torch.Generator().manual_seed(self.config.seed)
        with torch.no_grad():
            self.embedding.weight.normal_(0.0, self.config.emb_init_std, generator=g)
            for module in self.modules():
                if isinstance(module, nn.Linear):
                    bound = 1.0 / math.sqrt(module.in_features)
                    module.weight.uniform_(-bound, bound, generator=g)
                    module.bias.zero_()
                elif isinstance(module, nn.LayerNorm):
                    module.weight.fill_(1.0)
                    module.bias.zero_()

    def forward(
        self, token_ids: torch.Tensor, attention_mask: torch.Tensor
    ) -> torch.Tensor:
        """Encode (B, T) ids with a (B, T) 0/1 mask into (B, T, hidden) states."""
        if token_ids.dim() != 2 or token_ids.shape != attention_mask.shape:
            raise ValueError("token_ids and attention_mask must both be (B, T)")
        t = token_ids.shape[1]
        if t > self.config.max_positions:
            raise ValueError(
                f"sequence length {t} exceeds max_positions "
                f"{self.config.max_positions}"
            )
        if int(token_ids.max()) >= self.config.vocab_size:
            raise ValueError(
                f"token id {int(token_ids.max())} outside vocabulary of size "
                f"{self.config.vocab_size}"
            )
        x = self.embedding(token_ids)
        if self.config.pos_scale:
            x = x + self.config.pos_scale * self.positions[:t]
        # Masked keys are hidden from every query; masked queries still get
        # a row but are excluded from pooling downstream.
        key_bias = torch.where(
            attention_mask.to(torch.bool), 0.0, float("-inf")
        ).to(torch.float64)[:, None, None, :]
        for block in self.blocks:
            x = block(x, key_bias)
        return x


def build_encoder(config: EncoderConfig) -> TinyTransformerEncoder:
    """Construct an encoder of the configured kind."""
    config.validate()
    if config.kind == "toy":
        return TinyTransformerEncoder(config)
    return load_encoder_checkpoint(config.checkpoint, expected=config)


def save_encoder_checkpoint(encoder: TinyTransformerEncoder, path: str | Path) -> Path:
    """Write a self-describing encoder container (config header + tensors)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "version": ENCODER_CHECKPOINT_VERSION,
            "config": asdict(encoder.config),
            "state": encoder.state_dict(),
        },
        path,
    )
    return path


def load_encoder_checkpoint(
    path: str | Path, expected: EncoderConfig | None = None
) -> TinyTransformerEncoder:
    """Rebuild an encoder from a container written by save_encoder_checkpoint."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"encoder checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"{path}: unreadable checkpoint: {exc}")
    if not isinstance(payload, dict) or "version" not in payload:
        raise CheckpointError(f"{path}: missing mandatory version field")
    if payload["version"] != ENCODER_CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint version {payload['version']}"
        )
    stored = dict(payload["config"])
    # The stored header describes the architecture; kind/checkpoint describe
    # how this instance was obtained.
    stored.update({"kind": "pretrained-adapter", "checkpoint": str(path)})
    config = EncoderConfig(**stored)
    if expected is not None:
        # hidden_dim and vocab_size are the interoperability-critical fields
        # (head and tokenizer are sized against them); internal geometry is
        # taken from the header.
        for fld in ("hidden_dim", "vocab_size"):
            want, got = getattr(expected, fld), getattr(config, fld)
            if want != got:
                raise CheckpointError(
                    f"{path}: checkpoint {fld}={got} but config asks for {want}"
                )
    encoder = TinyTransformerEncoder(config)
    try:
        encoder.load_state_dict(payload["state"])
    except RuntimeError as exc:
        raise CheckpointError(f"{path}: parameter/config mismatch: {exc}")
    return encoder


def encode(input: ComposedInput, encoder: TinyTransformerEncoder) -> HiddenStates:
    """Run one composed input through the encoder.

    Returns the final layer as a (hidden_dim, seq_len) matrix carrying the
    input's segment map, so downstream pooling can find each segment.
    """
    ids = torch.tensor([input.tokens], dtype=torch.long)
    mask = torch.tensor([input.attention_mask], dtype=torch.float64)
    states = encoder(ids, mask)[0]
    return HiddenStates(
        states=states.T,
        segment_map=input.segment_map,
        attention_mask=input.attention_mask,
    )


def segment_pool(h: HiddenStates) -> tuple[torch.Tensor, torch.Tensor]:
    """Mean-pool the passage columns and the candidate-side columns.

    The candidate side covers summary tokens plus any raw question/answer
    tokens, so every input mode yields the same (h_p, h_s) interface. Masked
    (padding) columns never contribute.
    """
    passage_cols = [
        i
        for i, (seg, m) in enumerate(zip(h.segment_map, h.attention_mask))
        if seg == SEG_PASSAGE and m
    ]
    candidate_cols = [
        i
        for i, (seg, m) in enumerate(zip(h.segment_map, h.attention_mask))
        if seg in CANDIDATE_SEGMENTS and m
    ]
    if not passage_cols:
        raise ValueError("cannot pool: no unmasked passage tokens")
    if not candidate_cols:
        raise ValueError("cannot pool: no unmasked summary/question/answer tokens")
    h_p = h.states[:, passage_cols].mean(dim=1)
    h_s = h.states[:, candidate_cols].mean(dim=1)
    return h_p, h_s
