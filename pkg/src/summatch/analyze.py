"""Per-example prediction records and the case-analysis report.

Raw option scores are often negative; the report adds a constant display
bias (default 12.5) so bar charts read well. The bias is presentation only:
softmax shift invariance keeps probabilities and the argmax untouched.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .compose import InputMode
from .data import McqaExample
from .errors import EvaluationError
from .head import OptionScores
from .model import SummaryMatcher

DISPLAY_BIAS_DEFAULT = 12.5

RECORD_CSV_COLUMNS = (
    "id",
    "option_index",
    "option_text",
    "logit",
    "display_value",
    "probability",
    "is_predicted",
    "is_gold",
)


@dataclass(frozen=True)
class PredictionRecord:
    """Scores of all five options of one example, plus display values."""

    example_id: str
    options: tuple[str, ...]
    scores: OptionScores
    display_bias: float = DISPLAY_BIAS_DEFAULT

    @property
    def logits(self) -> tuple[float, ...]:
        return self.scores.logits

    @property
    def display_values(self) -> tuple[float, ...]:
        return tuple(x + self.display_bias for x in self.logits)

    @property
    def probabilities(self) -> tuple[float, ...]:
        return self.scores.probabilities

    @property
    def predicted(self) -> int:
        return self.scores.predicted

    @property
    def gold(self) -> int | None:
        return self.scores.gold

    @property
    def correct(self) -> bool | None:
        return self.scores.correct


def prediction_record(
    model: SummaryMatcher,
    example: McqaExample,
    mode: InputMode | None = None,
    display_bias: float = DISPLAY_BIAS_DEFAULT,
) -> PredictionRecord:
    """Score one example and package the result for reporting."""
    with torch.no_grad():
        logits = model.option_logits(example, mode).numpy()
    return PredictionRecord(
        example_id=example.id,
        options=example.options,
        scores=OptionScores.from_logits(logits, gold=example.gold),
        display_bias=display_bias,
    )


def emit_report(
    records: Sequence[PredictionRecord],
    out_path: str | Path,
    format: str = "csv",
) -> Path:
    """Write the records as a CSV table or a bar-chart image."""
    if not records:
        raise EvaluationError("emit_report requires at least one record")
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    if format == "csv":
        return _emit_csv(records, out_path)
    if format == "plot":
        return _emit_plot(records, out_path)
    raise EvaluationError(f"unknown report format {format!r}")


def _emit_csv(records: Sequence[PredictionRecord], out_path: Path) -> Path:
    lines = [",".join(RECORD_CSV_COLUMNS)]
    for rec in records:
        for k, option in enumerate(rec.options):
            lines.append(
                ",".join(
                    (
                        _csv_cell(rec.example_id),
                        str(k),
                        _csv_cell(option),
                        repr(rec.logits[k]),
                        repr(rec.display_values[k]),
                        repr(rec.probabilities[k]),
                        str(int(k == rec.predicted)),
                        str(int(rec.gold is not None and k == rec.gold)),
                    )
                )
            )
    out_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out_path


def _csv_cell(value: str) -> str:
    if any(c in value for c in ',"\n'):
        return '"' + value.replace('"', '""') + '"'
    return value


def read_report_csv(path: str | Path) -> list[dict]:
    """Parse an emit_report CSV back into one dict per row."""
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        rows = []
        for row in csv.DictReader(fh):
            rows.append(
                {
                    "id": row["id"],
                    "option_index": int(row["option_index"]),
                    "option_text": row["option_text"],
                    "logit": float(row["logit"]),
                    "display_value": float(row["display_value"]),
                    "probability": float(row["probability"]),
                    "is_predicted": bool(int(row["is_predicted"])),
                    "is_gold": bool(int(row["is_gold"])),
                }
            )
        return rows


def _emit_plot(records: Sequence[PredictionRecord], out_path: Path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(
        len(records), 1, figsize=(7, 2.6 * len(records)), squeeze=False
    )
    for ax, rec in zip(axes[:, 0], records):
        xs = np.arange(len(rec.options))
        colors = ["#4c72b0"] * len(rec.options)
        if rec.gold is not None:
            colors[rec.gold] = "#55a868"
        bars = ax.bar(xs, rec.display_values, color=colors)
        bars[rec.predicted].set_edgecolor("#c44e52")
        bars[rec.predicted].set_linewidth(2.0)
        ax.set_xticks(xs)
        ax.set_xticklabels(rec.options, rotation=15, ha="right", fontsize=8)
        ax.set_ylabel(f"score + {rec.display_bias:g}")
        ax.set_title(rec.example_id, fontsize=9)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
