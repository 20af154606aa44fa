"""Tests for the full scoring model: collation, pooling, checkpoints."""

import torch
import pytest

from summatch.compose import (
    ComposedInput,
    InputMode,
    SEG_ANSWER,
    SEG_PASSAGE,
    SEG_SPECIAL,
    SEG_SUMMARY,
)
from summatch.data import McqaExample
from summatch.encoder import EncoderConfig
from summatch.errors import CheckpointError
from summatch.model import (
    MODEL_CHECKPOINT_VERSION,
    SummaryMatcher,
    argmax_lowest,
    collate_inputs,
    comparable_config,
    load_checkpoint,
    masked_mean,
    save_checkpoint,
)
from summatch.tokenizer import PAD_ID

QUESTION = (
    "Heavy @placeholder vehicles have been involved in nine of this year 's "
    "14 cyclist crash fatalities in London."
)
OPTIONS = ("operators", "goods", "groups", "patrol", "air")
PASSAGE = (
    "Nine of the 14 cyclists killed in London this year died in collisions "
    "with lorries , the city 's transport authority said on Friday ."
)


def example(gold=1):
    return McqaExample(
        id="m-0", passage=PASSAGE, question=QUESTION, options=OPTIONS, gold=gold
    )


def small_model(seed=0, mode=InputMode.PASSAGE_SUMMARY, max_len=64):
    cfg = EncoderConfig(
        hidden_dim=8,
        num_layers=1,
        num_heads=2,
        ffn_dim=16,
        vocab_size=64,
        max_positions=max_len,
        seed=seed,
    )
    return SummaryMatcher.build(cfg, input_mode=mode, max_len=max_len, seed=seed)


def fake_input(tokens, segments):
    return ComposedInput(
        tokens=tuple(tokens),
        segment_map=tuple(segments),
        attention_mask=(1,) * len(tokens),
        mode=InputMode.PASSAGE_SUMMARY,
        truncation_report=None,
    )


# ---------------------------------------------------------------- collation


def test_collate_pads_and_splits_pools():
    a = fake_input(
        [1, 10, 11, 2, 20, 2],
        [SEG_SPECIAL, SEG_PASSAGE, SEG_PASSAGE, SEG_SPECIAL, SEG_SUMMARY, SEG_SPECIAL],
    )
    b = fake_input(
        [1, 12, 2, 21, 2, 30, 2, 31, 2],
        [
            SEG_SPECIAL,
            SEG_PASSAGE,
            SEG_SPECIAL,
            SEG_SUMMARY,
            SEG_SPECIAL,
            SEG_SUMMARY,
            SEG_SPECIAL,
            SEG_ANSWER,
            SEG_SPECIAL,
        ],
    )
    ids, mask, passage, candidate = collate_inputs([a, b])
    assert ids.shape == (2, 9)
    assert ids[0].tolist() == [1, 10, 11, 2, 20, 2, PAD_ID, PAD_ID, PAD_ID]
    assert mask[0].tolist() == [1, 1, 1, 1, 1, 1, 0, 0, 0]
    assert mask[1].tolist() == [1] * 9
    # specials and padding belong to neither pool
    assert passage[0].tolist() == [0, 1, 1, 0, 0, 0, 0, 0, 0]
    assert candidate[0].tolist() == [0, 0, 0, 0, 1, 0, 0, 0, 0]
    assert passage[1].tolist() == [0, 1, 0, 0, 0, 0, 0, 0, 0]
    # answer tokens pool on the candidate side together with the summary
    assert candidate[1].tolist() == [0, 0, 0, 1, 0, 1, 0, 1, 0]


def test_masked_mean_matches_bruteforce():
    g = torch.Generator().manual_seed(4)
    states = torch.randn(2, 5, 3, generator=g, dtype=torch.float64)
    mask = torch.tensor(
        [[1.0, 0.0, 1.0, 1.0, 0.0], [0.0, 1.0, 0.0, 0.0, 0.0]], dtype=torch.float64
    )
    pooled = masked_mean(states, mask)
    for i in range(2):
        keep = [t for t in range(5) if mask[i, t] == 1.0]
        for d in range(3):
            manual = sum(float(states[i, t, d]) for t in keep) / len(keep)
            assert abs(float(pooled[i, d]) - manual) < 1e-12


def test_masked_mean_rejects_empty_segment():
    states = torch.zeros(1, 4, 3, dtype=torch.float64)
    with pytest.raises(ValueError):
        masked_mean(states, torch.zeros(1, 4, dtype=torch.float64))


# -------------------------------------------------------------------- model


def test_build_is_deterministic_per_seed():
    a = small_model(seed=3).predict(example())
    b = small_model(seed=3).predict(example())
    c = small_model(seed=4).predict(example())
    assert a.logits == b.logits
    assert a.logits != c.logits


def test_hidden_dim_mismatch_rejected():
    from summatch.encoder import build_encoder
    from summatch.head import OptionScorerHead
    from summatch.tokenizer import WhitespaceHashTokenizer

    cfg = EncoderConfig(hidden_dim=8, num_layers=1, num_heads=2, ffn_dim=16)
    with pytest.raises(ValueError):
        SummaryMatcher(
            build_encoder(cfg),
            OptionScorerHead(16),
            WhitespaceHashTokenizer(cfg.vocab_size),
        )


def test_option_logits_shape_and_gold_propagation():
    model = small_model()
    logits = model.option_logits(example())
    assert logits.shape == (5,)
    scores = model.predict(example(gold=1))
    assert scores.gold == 1
    assert scores.predicted == argmax_lowest(scores.logits)
    assert model.predict(example(gold=None)).correct is None


def test_option_permutation_permutes_logits_exactly():
    # each option is scored independently through one shared head, so
    # reordering the options must reorder the scores and nothing else
    model = small_model(seed=2)
    base = model.predict(example()).logits
    perm = [3, 0, 4, 1, 2]
    shuffled = McqaExample(
        id="m-1",
        passage=PASSAGE,
        question=QUESTION,
        options=tuple(OPTIONS[k] for k in perm),
        gold=0,
    )
    permuted = model.predict(shuffled).logits
    for k in range(5):
        assert permuted[k] == base[perm[k]]


def test_mode_override_changes_inputs_and_scores():
    model = small_model(seed=1)
    ps = model.compose(example())
    psq = model.compose(example(), InputMode.PASSAGE_SUMMARY_QUESTION)
    assert len(ps) == len(psq) == 5
    assert len(psq[0].tokens) > len(ps[0].tokens)
    with torch.no_grad():
        a = model.option_logits(example())
        b = model.option_logits(example(), InputMode.PASSAGE_SUMMARY_QUESTION)
    assert not torch.equal(a, b)


def test_clone_state_detaches_from_future_updates():
    model = small_model(seed=5)
    frozen = model.clone_state()
    with torch.no_grad():
        for p in model.parameters():
            p.add_(0.25)
    after = model.clone_state()
    assert not torch.equal(frozen["head"]["v"], after["head"]["v"])
    model.load_state_dict(frozen)
    restored = model.state_dict()
    assert torch.equal(restored["head"]["v"], frozen["head"]["v"])


# -------------------------------------------------------------- checkpoints


def test_checkpoint_round_trip_reproduces_scores(tmp_path):
    model = small_model(seed=6, mode=InputMode.PASSAGE_SUMMARY_ANSWER, max_len=48)
    path = save_checkpoint(
        model, tmp_path / "m.ckpt", train_config={"learning_rate": 3e-5}
    )
    loaded, payload = load_checkpoint(path)
    assert payload["version"] == MODEL_CHECKPOINT_VERSION
    assert payload["train_config"] == {"learning_rate": 3e-5}
    assert loaded.input_mode is InputMode.PASSAGE_SUMMARY_ANSWER
    assert loaded.max_len == 48
    assert loaded.tokenizer.vocab_size == model.tokenizer.vocab_size
    assert loaded.predict(example()).logits == model.predict(example()).logits


def test_load_checkpoint_missing_file(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "absent.ckpt")


def test_load_checkpoint_garbage_bytes(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"not a torch archive")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_load_checkpoint_missing_version(tmp_path):
    path = tmp_path / "bare.ckpt"
    torch.save({"state": {}}, path)
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_load_checkpoint_unsupported_version(tmp_path):
    model = small_model()
    path = save_checkpoint(model, tmp_path / "m.ckpt")
    payload = torch.load(path, weights_only=False)
    payload["version"] = MODEL_CHECKPOINT_VERSION + 1
    torch.save(payload, path)
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_load_checkpoint_state_config_mismatch(tmp_path):
    model = small_model()
    path = save_checkpoint(model, tmp_path / "m.ckpt")
    payload = torch.load(path, weights_only=False)
    # config now promises wider tensors than the saved state contains
    payload["encoder_config"]["hidden_dim"] = 16
    payload["encoder_config"]["ffn_dim"] = 32
    torch.save(payload, path)
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_comparable_config_ignores_data_identity(tmp_path):
    model = small_model(seed=7)
    shared = {"learning_rate": 3e-5, "epochs": 2, "batch_size": 8}
    p1 = save_checkpoint(
        model,
        tmp_path / "a.ckpt",
        train_config=dict(shared, train_file="x.jsonl", task="imperceptibility"),
    )
    p2 = save_checkpoint(
        model,
        tmp_path / "b.ckpt",
        train_config=dict(shared, train_file="y.jsonl", task="nonspecificity"),
    )
    _, pay1 = load_checkpoint(p1)
    _, pay2 = load_checkpoint(p2)
    assert comparable_config(pay1) == comparable_config(pay2)
    p3 = save_checkpoint(
        model, tmp_path / "c.ckpt", train_config=dict(shared, learning_rate=1e-4)
    )
    _, pay3 = load_checkpoint(p3)
    assert comparable_config(pay1) != comparable_config(pay3)


def test_argmax_lowest_breaks_ties_low():
    assert argmax_lowest([0.0, 3.0, 3.0, 1.0, 3.0]) == 1
    assert argmax_lowest([5.0, 1.0, 2.0, 3.0, 4.0]) == 0
