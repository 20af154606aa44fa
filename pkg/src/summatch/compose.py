"""Build the model input for one (example, option) pair.

Filling the option into the question's placeholder yields a complete
candidate sentence (the "summary"); the passage and summary are then
concatenated into a single token sequence framed by special tokens, with an
optional raw-question or raw-answer segment appended. Truncation always cuts
the passage tail first because the summary carries the discriminative signal.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .data import PLACEHOLDER, NUM_OPTIONS, McqaExample
from .errors import ComposeError
from .tokenizer import CLS_ID, SEP_ID, Tokenizer

SEG_SPECIAL = "special"
SEG_PASSAGE = "passage"
SEG_SUMMARY = "summary"
SEG_QUESTION = "question"
SEG_ANSWER = "answer"

# Segments pooled on the candidate side of the scorer, in composition order.
CANDIDATE_SEGMENTS = (SEG_SUMMARY, SEG_QUESTION, SEG_ANSWER)

MIN_MAX_LEN = 8


class InputMode(str, Enum):
    """Which text segments are concatenated into the model input."""

    PASSAGE_SUMMARY = "passage_summary"
    PASSAGE_SUMMARY_QUESTION = "passage_summary_question"
    PASSAGE_SUMMARY_ANSWER = "passage_summary_answer"
    # Baseline layout that skips infilling and feeds the raw question and
    # option as separate segments.
    PASSAGE_QUESTION_ANSWER = "passage_question_answer"

    @property
    def uses_summary(self) -> bool:
        return self is not InputMode.PASSAGE_QUESTION_ANSWER

    @property
    def segments(self) -> tuple[str, ...]:
        """Non-passage segments in composition order."""
        return {
            InputMode.PASSAGE_SUMMARY: (SEG_SUMMARY,),
            InputMode.PASSAGE_SUMMARY_QUESTION: (SEG_SUMMARY, SEG_QUESTION),
            InputMode.PASSAGE_SUMMARY_ANSWER: (SEG_SUMMARY, SEG_ANSWER),
            InputMode.PASSAGE_QUESTION_ANSWER: (SEG_QUESTION, SEG_ANSWER),
        }[self]


@dataclass(frozen=True)
class Summary:
    """The question with one option substituted into its placeholder."""

    text: str
    option_index: int
    option_span: tuple[int, int]  # [start, end) of the option within text


@dataclass(frozen=True)
class TruncationReport:
    passage_dropped: int = 0
    summary_dropped: int = 0
    question_dropped: int = 0
    answer_dropped: int = 0

    @property
    def total_dropped(self) -> int:
        return (
            self.passage_dropped
            + self.summary_dropped
            + self.question_dropped
            + self.answer_dropped
        )


@dataclass(frozen=True)
class ComposedInput:
    """Token-level sequence for one (example, option, mode) triple."""

    tokens: tuple[int, ...]
    segment_map: tuple[str, ...]
    attention_mask: tuple[int, ...]
    mode: InputMode
    truncation_report: TruncationReport

    def __post_init__(self):
        if not len(self.tokens) == len(self.segment_map) == len(self.attention_mask):
            raise ComposeError("tokens, segment_map and attention_mask must align")

    def segment_positions(self, label: str) -> list[int]:
        return [i for i, seg in enumerate(self.segment_map) if seg == label]


def fill_placeholder(
    question: str,
    option: str,
    option_index: int = -1,
    *,
    placeholder: str = PLACEHOLDER,
) -> Summary:
    """Substitute one option into the question's placeholder slot.

    Every other character of the question is preserved verbatim, so
    len(result) == len(question) - len(placeholder) + len(option).
    """
    n = question.count(placeholder)
    if n != 1:
        raise ComposeError(
            f"question must contain {placeholder!r} exactly once, found {n}"
        )
    start = question.index(placeholder)
    text = question[:start] + option + question[start + len(placeholder) :]
    return Summary(
        text=text,
        option_index=option_index,
        option_span=(start, start + len(option)),
    )


# Cut priority once the passage is at its floor: raw extras go before the
# summary, and within a mode the later segment goes first.
_CUT_ORDER_AFTER_PASSAGE = (SEG_ANSWER, SEG_QUESTION, SEG_SUMMARY)


def truncate(
    passage_tokens: int,
    other_segments: dict[str, int],
    max_len: int,
    *,
    floors: dict[str, int] | None = None,
) -> tuple[dict[str, int], TruncationReport]:
    """Fit segment lengths into max_len, cutting the passage tail first.

    Arguments are token counts per segment; the returned dict holds the kept
    counts (callers slice their token lists accordingly, so all cuts are from
    the tail). Specials are accounted as one leading [CLS] plus one [SEP]
    after each non-empty segment; a segment cut to zero loses its separator.
    Floors default to 1 for the passage and the summary and 0 for raw
    extras, except in the summary-free mode where question and answer are
    floored at 1. Raises when the floors themselves do not fit.
    """
    kept = {SEG_PASSAGE: passage_tokens, **other_segments}
    if floors is None:
        floors = {}
    floors = {
        SEG_PASSAGE: 1,
        SEG_SUMMARY: 1 if SEG_SUMMARY in other_segments else 0,
        SEG_QUESTION: 0,
        SEG_ANSWER: 0,
        **floors,
    }

    def assembled_len() -> int:
        return 1 + sum(count + 1 for count in kept.values() if count > 0)

    cut_order = (SEG_PASSAGE,) + tuple(
        s for s in _CUT_ORDER_AFTER_PASSAGE if s in kept
    )
    for seg in cut_order:
        floor = floors.get(seg, 0)
        while assembled_len() > max_len and kept[seg] > floor:
            over = assembled_len() - max_len
            kept[seg] = max(floor, kept[seg] - over)
        if assembled_len() <= max_len:
            break
    if assembled_len() > max_len:
        raise ComposeError(
            f"max_len={max_len} cannot hold the segment floors "
            f"(need {assembled_len()} tokens)"
        )
    report = TruncationReport(
        passage_dropped=passage_tokens - kept[SEG_PASSAGE],
        summary_dropped=other_segments.get(SEG_SUMMARY, 0) - kept.get(SEG_SUMMARY, 0),
        question_dropped=other_segments.get(SEG_QUESTION, 0)
        - kept.get(SEG_QUESTION, 0),
        answer_dropped=other_segments.get(SEG_ANSWER, 0) - kept.get(SEG_ANSWER, 0),
    )
    return kept, report


def compose_input(
    example: McqaExample,
    option_index: int,
    mode: InputMode,
    max_len: int,
    tokenizer: Tokenizer,
    *,
    placeholder: str = PLACEHOLDER,
) -> ComposedInput:
    """Tokenize and frame the input sequence for one option of one example.

    Segments appear in the order passage, summary[, question][, answer]
    depending on the mode; the baseline mode uses the raw question
    (placeholder intact) and the raw option instead of a summary.
    """
    if not 0 <= option_index < NUM_OPTIONS:
        raise ComposeError(f"option_index {option_index} outside [0, {NUM_OPTIONS - 1}]")
    if option_index >= len(example.options):
        raise ComposeError(
            f"example {example.id!r} has only {len(example.options)} options"
        )
    if max_len < MIN_MAX_LEN:
        raise ComposeError(f"max_len must be >= {MIN_MAX_LEN}, got {max_len}")

    option = example.options[option_index]
    passage_ids = tokenizer.encode(example.passage)
    if not passage_ids:
        raise ComposeError(f"example {example.id!r}: passage empty after tokenization")

    segment_ids: dict[str, list[int]] = {}
    for seg in mode.segments:
        if seg == SEG_SUMMARY:
            summary = fill_placeholder(
                example.question, option, option_index, placeholder=placeholder
            )
            segment_ids[seg] = tokenizer.encode(summary.text)
        elif seg == SEG_QUESTION:
            segment_ids[seg] = tokenizer.encode(example.question)
        elif seg == SEG_ANSWER:
            segment_ids[seg] = tokenizer.encode(option)
    if mode.uses_summary and not segment_ids[SEG_SUMMARY]:
        raise ComposeError(f"example {example.id!r}: summary empty after tokenization")

    floors = None
    if not mode.uses_summary:
        # Without a summary, the raw question and answer are the candidate
        # side of the input and must survive truncation.
        floors = {
            SEG_QUESTION: 1 if segment_ids.get(SEG_QUESTION) else 0,
            SEG_ANSWER: 1 if segment_ids.get(SEG_ANSWER) else 0,
        }
    kept, report = truncate(
        len(passage_ids),
        {seg: len(ids) for seg, ids in segment_ids.items()},
        max_len,
        floors=floors,
    )

    tokens: list[int] = [CLS_ID]
    segments: list[str] = [SEG_SPECIAL]
    tokens.extend(passage_ids[: kept[SEG_PASSAGE]])
    segments.extend([SEG_PASSAGE] * kept[SEG_PASSAGE])
    tokens.append(SEP_ID)
    segments.append(SEG_SPECIAL)
    for seg in mode.segments:
        n_keep = kept.get(seg, 0)
        if n_keep <= 0:
            continue
        tokens.extend(segment_ids[seg][:n_keep])
        segments.extend([seg] * n_keep)
        tokens.append(SEP_ID)
        segments.append(SEG_SPECIAL)

    return ComposedInput(
        tokens=tuple(tokens),
        segment_map=tuple(segments),
        attention_mask=(1,) * len(tokens),
        mode=mode,
        truncation_report=report,
    )


def compose_all_options(
    example: McqaExample,
    mode: InputMode,
    max_len: int,
    tokenizer: Tokenizer,
    *,
    placeholder: str = PLACEHOLDER,
) -> list[ComposedInput]:
    """One composed input per option, in option order."""
    return [
        compose_input(example, k, mode, max_len, tokenizer, placeholder=placeholder)
        for k in range(NUM_OPTIONS)
    ]
