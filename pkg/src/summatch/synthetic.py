"""Deterministic synthetic corpora for smoke tests and sanity experiments.

Two flavors: a separable corpus whose gold option lexically matches the
passage (a model that learns passage/summary matching can reach 100% train
accuracy), and a chance-level corpus whose passages are unrelated to every
option (any fixed scorer is correct with probability exactly 1/5).
"""

from __future__ import annotations

import random

from .data import NUM_OPTIONS, PLACEHOLDER, McqaExample
from .tokenizer import WhitespaceHashTokenizer

_CONTENT_WORDS = (
    "grain", "copper", "timber", "wool", "salt", "amber", "iron", "glass",
    "honey", "silk", "marble", "coal", "paper", "rope", "tin", "clay",
    "barley", "leather", "ivory", "chalk", "pepper", "linen", "cedar", "jade",
    "quartz", "velvet", "bronze", "flint", "resin", "tar", "silver", "cork",
    "hemp", "pearl", "slate", "wax", "oats", "brass", "fur", "dye",
)

_TEMPLATES = (
    "the harbor crane moved {} onto the waiting barges",
    "merchants stored {} inside the northern warehouse",
    "the caravan carried {} across the mountain pass",
    "workers loaded {} before the morning bell rang",
    "the ledger listed {} among the taxed cargo",
    "inspectors weighed {} at the customs gate",
    "the mill processed {} through the long winter",
    "traders exchanged {} for casks of cider",
)


def _distinct_token_words(rng: random.Random, count: int) -> list[str]:
    """Compound words that map to pairwise distinct token ids.

    Options sharing an embedding row under the default tokenizer would be
    indistinguishable to the model, so hash collisions are filtered out.
    """
    tokenizer = WhitespaceHashTokenizer()
    candidates = [a + b for a in _CONTENT_WORDS for b in _CONTENT_WORDS if a != b]
    rng.shuffle(candidates)
    seen_ids: set[int] = set()
    words: list[str] = []
    for word in candidates:
        (token_id,) = tokenizer.encode(word)
        if token_id in seen_ids:
            continue
        seen_ids.add(token_id)
        words.append(word)
        if len(words) == count:
            return words
    raise ValueError(f"word pool exhausted before reaching {count} words")


def separable_examples(
    n: int = 32, seed: int = 0, *, placeholder: str = PLACEHOLDER
) -> list[McqaExample]:
    """Minimal matching instances: the passage is the gold option verbatim.

    Every option word is unique across the corpus, so the only signal is
    whether a candidate matches the passage. A scorer that learns
    passage/summary matching separates these perfectly; anything weaker
    cannot beat chance.
    """
    rng = random.Random(seed)
    words = _distinct_token_words(rng, n * NUM_OPTIONS)
    examples = []
    for i in range(n):
        options = tuple(words[i * NUM_OPTIONS : (i + 1) * NUM_OPTIONS])
        gold = rng.randrange(NUM_OPTIONS)
        examples.append(
            McqaExample(
                id=f"sep-{i:03d}",
                passage=options[gold],
                question=placeholder,
                options=options,
                gold=gold,
            )
        )
    return examples


def chance_level_examples(
    n: int = 40, seed: int = 0, *, placeholder: str = PLACEHOLDER
) -> list[McqaExample]:
    """Balanced examples with passages unrelated to all five options.

    Options are drawn exchangeably and the gold index is uniform, so any
    scorer that cannot see the labels is correct with probability 1/5.
    """
    rng = random.Random(seed)
    examples = []
    for i in range(n):
        words = rng.sample(_CONTENT_WORDS, NUM_OPTIONS + 6)
        options = words[:NUM_OPTIONS]
        passage_words = words[NUM_OPTIONS:]
        template = rng.choice(_TEMPLATES)
        examples.append(
            McqaExample(
                id=f"chance-{i:03d}",
                passage="the record mentions " + " and ".join(passage_words) + " .",
                question=template.format(placeholder),
                options=tuple(options),
                gold=rng.randrange(NUM_OPTIONS),
            )
        )
    return examples
