"""Tests for the deterministic synthetic corpora."""

from collections import Counter

from summatch.synthetic import chance_level_examples, separable_examples
from summatch.tokenizer import WhitespaceHashTokenizer


def test_separable_examples_are_valid_and_matching():
    data = separable_examples(n=32, seed=0)
    assert len(data) == 32
    assert [ex.id for ex in data] == [f"sep-{i:03d}" for i in range(32)]
    for ex in data:
        assert ex.violations() == []
        assert ex.passage == ex.options[ex.gold]
        assert ex.question == "@placeholder"


def test_separable_options_unique_across_corpus():
    data = separable_examples(n=32, seed=0)
    words = [opt for ex in data for opt in ex.options]
    assert len(words) == len(set(words))
    # distinct words must also land on distinct embedding rows
    tokenizer = WhitespaceHashTokenizer()
    ids = [tokenizer.encode(w)[0] for w in words]
    assert len(ids) == len(set(ids))


def test_separable_generation_is_deterministic():
    a = separable_examples(n=8, seed=5)
    b = separable_examples(n=8, seed=5)
    c = separable_examples(n=8, seed=6)
    assert a == b
    assert a != c


def test_separable_gold_indices_spread():
    data = separable_examples(n=32, seed=0)
    counts = Counter(ex.gold for ex in data)
    assert set(counts) <= set(range(5))
    assert len(counts) >= 3


def test_chance_examples_are_valid_and_unrelated():
    data = chance_level_examples(n=40, seed=0)
    assert len(data) == 40
    for ex in data:
        assert ex.violations() == []
        passage_words = set(ex.passage.split())
        for opt in ex.options:
            assert opt not in passage_words
        assert ex.gold in range(5)


def test_chance_examples_custom_placeholder():
    data = chance_level_examples(n=4, seed=1, placeholder="[MASK]")
    for ex in data:
        assert ex.question.count("[MASK]") == 1
        assert "@placeholder" not in ex.question


def test_chance_generation_is_deterministic():
    assert chance_level_examples(n=6, seed=2) == chance_level_examples(n=6, seed=2)
