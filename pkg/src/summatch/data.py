"""Loading, validation, and serialization of cloze-style multiple-choice examples.

Each example is one JSONL record with keys ``id``, ``passage`` (``article``
is accepted as a synonym), ``question``, ``option_0`` .. ``option_4`` and an
optional integer ``label``. The question must contain the placeholder token
exactly once; every option fills that slot.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Iterator

from .errors import DatasetError, ValidationError

PLACEHOLDER = "@placeholder"
NUM_OPTIONS = 5
SPLITS = ("train", "dev", "test")

# Split sizes of the two reference tasks this toolkit targets. A mismatch
# against these only warns, never fails (see dataset_stats).
EXPECTED_COUNTS = {
    "imperceptibility": {"train": 3227, "test": 2025, "dev": 837},
    "nonspecificity": {"train": 3318, "test": 2017, "dev": 851},
}


@dataclass(frozen=True)
class McqaExample:
    """One passage / cloze question / five options record.

    ``gold`` is the index of the correct option and is absent (None) for
    unlabeled test splits.
    """

    id: str
    passage: str
    question: str
    options: tuple[str, ...]
    gold: int | None = None

    def violations(self, placeholder: str = PLACEHOLDER) -> list[str]:
        """Return schema violations, empty when the example is valid."""
        problems = []
        n_ph = self.question.count(placeholder)
        if n_ph != 1:
            problems.append(
                f"question must contain {placeholder!r} exactly once, found {n_ph}"
            )
        if len(self.options) != NUM_OPTIONS:
            problems.append(f"expected {NUM_OPTIONS} options, got {len(self.options)}")
        elif any(not opt.strip() for opt in self.options):
            problems.append("options must be non-empty after whitespace trim")
        if self.gold is not None and not 0 <= self.gold < NUM_OPTIONS:
            problems.append(f"label {self.gold} outside [0, {NUM_OPTIONS - 1}]")
        return problems

    def is_valid(self, placeholder: str = PLACEHOLDER) -> bool:
        return not self.violations(placeholder)


@dataclass
class SplitStats:
    """Counts produced by scanning one split."""

    split: str
    count: int
    placeholder_violations: int
    option_violations: int
    expected_count: int | None = None

    def matches_expected(self) -> bool | None:
        """True/False against the configured expectation, None when unset."""
        if self.expected_count is None:
            return None
        return self.count == self.expected_count

    def summary_line(self) -> str:
        line = (
            f"{self.split or 'split'}: {self.count} examples, "
            f"{self.placeholder_violations} placeholder violation(s), "
            f"{self.option_violations} option violation(s)"
        )
        if self.expected_count is not None and not self.matches_expected():
            line += f" [warning: expected {self.expected_count}]"
        return line


def parse_record(obj: dict, *, line_no: int | None = None) -> McqaExample:
    """Build an McqaExample from one decoded JSON object.

    Only structural problems raise here; schema violations (placeholder
    count, option count, label range) are left to validation so that lenient
    loaders can count them.
    """
    where = f" (line {line_no})" if line_no is not None else ""
    if not isinstance(obj, dict):
        raise ValidationError(f"record is not an object{where}")
    passage = obj.get("passage", obj.get("article"))
    question = obj.get("question")
    if passage is None or question is None:
        raise ValidationError(f"record missing passage/article or question{where}")
    options = []
    for k in range(NUM_OPTIONS):
        key = f"option_{k}"
        if key not in obj:
            break
        options.append(str(obj[key]))
    label = obj.get("label")
    if label is not None:
        try:
            label = int(label)
        except (TypeError, ValueError):
            raise ValidationError(f"label {obj.get('label')!r} is not an integer{where}")
    return McqaExample(
        id=str(obj.get("id", line_no if line_no is not None else "")),
        passage=str(passage),
        question=str(question),
        options=tuple(options),
        gold=label,
    )


def iter_records(path: str | Path) -> Iterator[tuple[int, dict]]:
    """Yield (line_no, decoded object) for each non-blank line of a JSONL file."""
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset file not found: {path}")
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield line_no, json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}: malformed JSON on line {line_no}: {exc}")


def load_dataset(
    path: str | Path,
    split: str = "train",
    *,
    placeholder: str = PLACEHOLDER,
    strict: bool = True,
) -> list[McqaExample]:
    """Load one split, preserving input order.

    Strict mode aborts on the first invalid record; lenient mode silently
    drops invalid records (use load_and_audit to also count them).
    """
    examples = []
    for line_no, obj in iter_records(path):
        ex = parse_record(obj, line_no=line_no)
        problems = ex.violations(placeholder)
        if problems:
            if strict:
                raise ValidationError(
                    f"{path}: invalid record id={ex.id!r} (line {line_no}, "
                    f"{split}): " + "; ".join(problems)
                )
            continue
        examples.append(ex)
    return examples


def load_and_audit(
    path: str | Path,
    split: str = "train",
    *,
    placeholder: str = PLACEHOLDER,
    expected_count: int | None = None,
) -> tuple[list[McqaExample], SplitStats]:
    """Lenient load returning the valid examples plus scan statistics.

    The stats count every parseable record, valid or not, so the violation
    totals survive even though invalid records are dropped from the list.
    """
    examples = []
    count = ph_bad = opt_bad = 0
    for line_no, obj in iter_records(path):
        ex = parse_record(obj, line_no=line_no)
        count += 1
        if ex.question.count(placeholder) != 1:
            ph_bad += 1
        if len(ex.options) != NUM_OPTIONS or any(not o.strip() for o in ex.options):
            opt_bad += 1
        if ex.is_valid(placeholder):
            examples.append(ex)
    stats = SplitStats(
        split=split,
        count=count,
        placeholder_violations=ph_bad,
        option_violations=opt_bad,
        expected_count=expected_count,
    )
    return examples, stats


def dataset_stats(
    examples: Iterable[McqaExample],
    *,
    split: str = "",
    placeholder: str = PLACEHOLDER,
    expected_count: int | None = None,
) -> SplitStats:
    """Statistics over an in-memory example list (re-validates every example)."""
    count = ph_bad = opt_bad = 0
    for ex in examples:
        count += 1
        if ex.question.count(placeholder) != 1:
            ph_bad += 1
        if len(ex.options) != NUM_OPTIONS or any(not o.strip() for o in ex.options):
            opt_bad += 1
    return SplitStats(
        split=split,
        count=count,
        placeholder_violations=ph_bad,
        option_violations=opt_bad,
        expected_count=expected_count,
    )


def expected_count_for(task: str, split: str) -> int | None:
    """Published example count for a known task/split, None when unknown."""
    return EXPECTED_COUNTS.get(task.lower(), {}).get(split)


def save_dataset(examples: Iterable[McqaExample], path: str | Path) -> Path:
    """Serialize examples as JSONL; inverse of load_dataset on valid data."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for ex in examples:
            obj: dict = {"id": ex.id, "passage": ex.passage, "question": ex.question}
            for k, opt in enumerate(ex.options):
                obj[f"option_{k}"] = opt
            if ex.gold is not None:
                obj["label"] = ex.gold
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
    return path


def strip_labels(examples: Iterable[McqaExample]) -> list[McqaExample]:
    """Copy of the examples with gold labels removed (unlabeled inference)."""
    return [replace(ex, gold=None) for ex in examples]
