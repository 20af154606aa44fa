"""Tokenizer contract plus the deterministic whitespace fallback.

The composer only needs text -> ids and ids -> text; anything satisfying
the Tokenizer protocol (e.g. a wrapped subword tokenizer) can be injected.
"""

from __future__ import annotations

import zlib
from typing import Protocol, Sequence, runtime_checkable

PAD_ID = 0
CLS_ID = 1
SEP_ID = 2
NUM_SPECIAL_IDS = 3

SPECIAL_TOKEN_STRINGS = {PAD_ID: "[PAD]", CLS_ID: "[CLS]", SEP_ID: "[SEP]"}


@runtime_checkable
class Tokenizer(Protocol):
    vocab_size: int

    def encode(self, text: str) -> list[int]: ...

    def decode(self, ids: Sequence[int]) -> str: ...


class WhitespaceHashTokenizer:
    """Whitespace splitter with a fixed-size hashed vocabulary.

    Token ids come from crc32 of the token bytes, so they are stable across
    processes and runs with no fitting step. Ids 0..2 are reserved for
    [PAD]/[CLS]/[SEP]. Collisions are possible and acceptable at this scale;
    decode returns the most recently seen surface form for an id.
    """

    def __init__(self, vocab_size: int = 4096):
        if vocab_size <= NUM_SPECIAL_IDS:
            raise ValueError(f"vocab_size must exceed {NUM_SPECIAL_IDS}")
        self.vocab_size = vocab_size
        self._id_to_token: dict[int, str] = {}

    def token_id(self, token: str) -> int:
        h = zlib.crc32(token.encode("utf-8"))
        tid = NUM_SPECIAL_IDS + h % (self.vocab_size - NUM_SPECIAL_IDS)
        self._id_to_token[tid] = token
        return tid

    def encode(self, text: str) -> list[int]:
        return [self.token_id(tok) for tok in text.split()]

    def decode(self, ids: Sequence[int]) -> str:
        parts = []
        for tid in ids:
            if tid in SPECIAL_TOKEN_STRINGS:
                continue
            parts.append(self._id_to_token.get(tid, f"[UNK:{tid}]"))
        return " ".join(parts)
