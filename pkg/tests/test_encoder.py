import math
import random

import pytest
import torch

from summatch.compose import InputMode, compose_input
from summatch.data import PLACEHOLDER, McqaExample
from summatch.encoder import (
    EncoderConfig,
    HiddenStates,
    TinyTransformerEncoder,
    build_encoder,
    encode,
    load_encoder_checkpoint,
    save_encoder_checkpoint,
    segment_pool,
    sinusoidal_positions,
)
from summatch.errors import CheckpointError, ConfigError
from summatch.tokenizer import WhitespaceHashTokenizer

SMALL = EncoderConfig(
    hidden_dim=8,
    num_layers=1,
    num_heads=2,
    ffn_dim=16,
    vocab_size=64,
    max_positions=16,
    seed=0,
)


def small_config(**overrides):
    fields = {
        "hidden_dim": 8,
        "num_layers": 1,
        "num_heads": 2,
        "ffn_dim": 16,
        "vocab_size": 64,
        "max_positions": 16,
        "seed": 0,
    }
    fields.update(overrides)
    return EncoderConfig(**fields)


def random_batch(config, b=2, t=6, seed=0):
    g = torch.Generator().manual_seed(seed)
    ids = torch.randint(0, config.vocab_size, (b, t), generator=g)
    mask = torch.ones(b, t, dtype=torch.long)
    return ids, mask


# ------------------------------------------------------------ position table


def test_sinusoidal_positions_formula():
    table = sinusoidal_positions(4, 6)
    assert table.shape == (4, 6)
    assert table.dtype == torch.float64
    for pos in range(4):
        for i in range(3):
            freq = math.exp(-math.log(10000.0) * (2 * i) / 6)
            assert table[pos, 2 * i] == pytest.approx(math.sin(pos * freq))
            assert table[pos, 2 * i + 1] == pytest.approx(math.cos(pos * freq))


def test_sinusoidal_positions_odd_dim():
    table = sinusoidal_positions(3, 5)
    assert table.shape == (3, 5)
    # odd dims have one extra sin column and no matching cos column
    freq_last = math.exp(-math.log(10000.0) * 4 / 5)
    assert table[2, 4] == pytest.approx(math.sin(2 * freq_last))


def test_position_zero_row():
    table = sinusoidal_positions(2, 4)
    assert torch.equal(table[0], torch.tensor([0.0, 1.0, 0.0, 1.0], dtype=torch.float64))


# ----------------------------------------------------------------- config


def test_config_validation_errors():
    with pytest.raises(ConfigError):
        small_config(hidden_dim=0).validate()
    with pytest.raises(ConfigError):
        small_config(hidden_dim=10, num_heads=4).validate()
    with pytest.raises(ConfigError):
        small_config(kind="huge").validate()
    with pytest.raises(ConfigError):
        small_config(vocab_size=2).validate()
    small_config().validate()


# ----------------------------------------------------------------- forward


def test_forward_shape_and_dtype():
    enc = TinyTransformerEncoder(small_config())
    ids, mask = random_batch(small_config())
    out = enc(ids, mask)
    assert out.shape == (2, 6, 8)
    assert out.dtype == torch.float64


def test_forward_deterministic_given_seed():
    cfg = small_config(seed=5)
    ids, mask = random_batch(cfg)
    out_a = TinyTransformerEncoder(cfg)(ids, mask)
    out_b = TinyTransformerEncoder(cfg)(ids, mask)
    assert torch.equal(out_a, out_b)
    out_c = TinyTransformerEncoder(small_config(seed=6))(ids, mask)
    assert not torch.equal(out_a, out_c)


def test_forward_rejects_bad_inputs():
    cfg = small_config()
    enc = TinyTransformerEncoder(cfg)
    ids, mask = random_batch(cfg)
    with pytest.raises(ValueError):
        enc(ids[0], mask[0])
    with pytest.raises(ValueError):
        enc(torch.full((1, 3), cfg.vocab_size), torch.ones(1, 3, dtype=torch.long))
    long_ids = torch.zeros(1, cfg.max_positions + 1, dtype=torch.long)
    with pytest.raises(ValueError):
        enc(long_ids, torch.ones_like(long_ids))


def test_degenerate_parameterization_is_embedding_lookup():
    # zeroed output projections + pos_scale 0 make each block an identity
    cfg = small_config(pos_scale=0.0)
    enc = TinyTransformerEncoder(cfg)
    with torch.no_grad():
        for block in enc.blocks:
            block.attn_out.weight.zero_()
            block.attn_out.bias.zero_()
            block.ffn_out.weight.zero_()
            block.ffn_out.bias.zero_()
    ids, mask = random_batch(cfg, b=3, t=5, seed=2)
    out = enc(ids, mask)
    assert torch.equal(out, enc.embedding(ids))


def test_padding_does_not_change_unmasked_columns():
    cfg = small_config()
    enc = TinyTransformerEncoder(cfg)
    ids, mask = random_batch(cfg, b=1, t=5, seed=3)
    padded_ids = torch.cat([ids, torch.zeros(1, 3, dtype=torch.long)], dim=1)
    padded_mask = torch.cat([mask, torch.zeros(1, 3, dtype=torch.long)], dim=1)
    out_plain = enc(ids, mask)
    out_padded = enc(padded_ids, padded_mask)
    assert torch.allclose(out_plain, out_padded[:, :5], atol=1e-12, rtol=0)


# -------------------------------------------------------------- encode/pool


def make_hidden(seed=0):
    tok = WhitespaceHashTokenizer(vocab_size=64)
    ex = McqaExample(
        id="h",
        passage="grain barges moved upriver",
        question=f"they carried {PLACEHOLDER} north",
        options=("grain", "salt", "wool", "tin", "clay"),
        gold=0,
    )
    composed = compose_input(ex, 0, InputMode.PASSAGE_SUMMARY, 32, tok)
    enc = TinyTransformerEncoder(small_config(seed=seed))
    return composed, enc


def test_encode_matches_transposed_forward():
    composed, enc = make_hidden()
    hidden = encode(composed, enc)
    ids = torch.tensor([list(composed.tokens)])
    mask = torch.tensor([list(composed.attention_mask)])
    direct = enc(ids, mask)[0]
    assert hidden.states.shape == (8, len(composed.tokens))
    assert torch.equal(hidden.states, direct.T)
    assert hidden.segment_map == composed.segment_map


def test_hidden_states_alignment_enforced():
    with pytest.raises(ValueError):
        HiddenStates(
            states=torch.zeros(4, 3, dtype=torch.float64),
            segment_map=("special", "passage"),
            attention_mask=(1, 1),
        )


def test_segment_pool_brute_force_oracle():
    composed, enc = make_hidden(seed=4)
    hidden = encode(composed, enc)
    h_p, h_s = segment_pool(hidden)

    passage_cols = [i for i, s in enumerate(hidden.segment_map) if s == "passage"]
    cand_cols = [
        i
        for i, s in enumerate(hidden.segment_map)
        if s in ("summary", "question", "answer")
    ]
    manual_p = sum(hidden.states[:, i] for i in passage_cols) / len(passage_cols)
    manual_s = sum(hidden.states[:, i] for i in cand_cols) / len(cand_cols)
    assert torch.allclose(h_p, manual_p, atol=1e-12, rtol=0)
    assert torch.allclose(h_s, manual_s, atol=1e-12, rtol=0)
    assert h_p.shape == (8,)


def test_segment_pool_ignores_masked_columns():
    composed, enc = make_hidden(seed=4)
    hidden = encode(composed, enc)
    t = len(composed.tokens)
    padded = HiddenStates(
        states=torch.cat(
            [hidden.states, torch.full((8, 2), 9.9, dtype=torch.float64)], dim=1
        ),
        segment_map=hidden.segment_map + ("passage", "summary"),
        attention_mask=hidden.attention_mask + (0, 0),
    )
    assert torch.equal(segment_pool(hidden)[0], segment_pool(padded)[0])
    assert torch.equal(segment_pool(hidden)[1], segment_pool(padded)[1])
    assert padded.states.shape == (8, t + 2)


def test_segment_pool_requires_both_sides():
    states = torch.zeros(8, 3, dtype=torch.float64)
    with pytest.raises(ValueError):
        segment_pool(
            HiddenStates(
                states=states,
                segment_map=("special", "summary", "special"),
                attention_mask=(1, 1, 1),
            )
        )
    with pytest.raises(ValueError):
        segment_pool(
            HiddenStates(
                states=states,
                segment_map=("special", "passage", "special"),
                attention_mask=(1, 1, 1),
            )
        )


# ------------------------------------------------------------- FD gradients


def test_encoder_gradients_match_finite_differences():
    cfg = small_config()
    enc = TinyTransformerEncoder(cfg)
    ids, mask = random_batch(cfg, b=1, t=5, seed=9)
    weights = torch.randn(
        5, cfg.hidden_dim, dtype=torch.float64,
        generator=torch.Generator().manual_seed(1),
    )

    def scalar():
        return (enc(ids, mask)[0] * weights).sum()

    scalar().backward()
    rng = random.Random(0)
    h = 1e-5
    checked = 0
    for name, param in enc.named_parameters():
        flat = param.detach().reshape(-1)
        grad = param.grad.reshape(-1)
        for _ in range(4):
            idx = rng.randrange(flat.numel())
            with torch.no_grad():
                orig = flat[idx].item()
                flat[idx] = orig + h
                up = scalar().item()
                flat[idx] = orig - h
                down = scalar().item()
                flat[idx] = orig
            fd = (up - down) / (2 * h)
            analytic = grad[idx].item()
            err = abs(analytic - fd)
            assert err <= 1e-4 * max(abs(analytic), abs(fd)) or err <= 1e-8, (
                f"{name}[{idx}]: analytic {analytic} vs fd {fd}"
            )
            checked += 1
    assert checked >= 20


# -------------------------------------------------------------- checkpoints


def test_encoder_checkpoint_round_trip(tmp_path):
    cfg = small_config(seed=7)
    enc = build_encoder(cfg)
    path = save_encoder_checkpoint(enc, tmp_path / "enc.ckpt")
    loaded = load_encoder_checkpoint(path, expected=cfg)
    ids, mask = random_batch(cfg)
    assert torch.equal(enc(ids, mask), loaded(ids, mask))


def test_encoder_checkpoint_geometry_mismatch(tmp_path):
    enc = build_encoder(small_config())
    path = save_encoder_checkpoint(enc, tmp_path / "enc.ckpt")
    with pytest.raises(CheckpointError):
        load_encoder_checkpoint(path, expected=small_config(hidden_dim=16))
    with pytest.raises(CheckpointError):
        load_encoder_checkpoint(path, expected=small_config(vocab_size=128))


def test_encoder_checkpoint_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointError):
        load_encoder_checkpoint(bad)
    with pytest.raises(CheckpointError):
        load_encoder_checkpoint(tmp_path / "missing.ckpt")
