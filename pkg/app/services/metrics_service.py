"""
Binary emotion evaluation.

accuracy  = (TP + TN) / (TP + TN + FP + FN)
recall    = TP / (TP + FN)            0 when TP + FN == 0
precision = TP / (TP + FP)            0 when TP + FP == 0
f1        = 2 P R / (P + R)           0 when P + R == 0

Table rendering uses percentages with two decimals.
"""

from __future__ import annotations

import csv
import io
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from app.core.errors import EmptyInputError, LengthMismatchError
from app.schemas.annotation_schema import Emotion
from app.schemas.metrics_schema import (AblationRow, AblationTable,
                                        ConfusionCounts, EvalReport)

# Row order and labels of the ablation table
MODE_LABELS: Dict[str, str] = {
    "v": "Video",
    "va": "Video+Audio",
    "van": "Video+Audio+NFBL",
}

Outcome = Tuple[Emotion, Emotion, Optional[float]]


def confusion(predictions: Sequence[Emotion],
              labels: Sequence[Emotion]) -> ConfusionCounts:
    if len(predictions) != len(labels):
        raise LengthMismatchError(
            f"{len(predictions)} predictions for {len(labels)} labels")
    if not predictions:
        raise EmptyInputError("nothing to evaluate")
    tp = tn = fp = fn = 0
    for pred, label in zip(predictions, labels):
        pred_pos = Emotion(pred) is Emotion.POSITIVE
        label_pos = Emotion(label) is Emotion.POSITIVE
        if pred_pos and label_pos:
            tp += 1
        elif not pred_pos and not label_pos:
            tn += 1
        elif pred_pos:
            fp += 1
        else:
            fn += 1
    return ConfusionCounts(tp=tp, tn=tn, fp=fp, fn=fn)


def accuracy(counts: ConfusionCounts) -> float:
    if counts.total == 0:
        raise EmptyInputError("accuracy of an empty set")
    return (counts.tp + counts.tn) / counts.total


def precision(counts: ConfusionCounts) -> float:
    denominator = counts.tp + counts.fp
    return counts.tp / denominator if denominator else 0.0


def recall(counts: ConfusionCounts) -> float:
    denominator = counts.tp + counts.fn
    return counts.tp / denominator if denominator else 0.0


def f1(counts: ConfusionCounts) -> float:
    p, r = precision(counts), recall(counts)
    return 2 * p * r / (p + r) if (p + r) else 0.0


def evaluate(predictions: Sequence[Emotion], labels: Sequence[Emotion],
             confidences: Optional[Sequence[float]] = None) -> EvalReport:
    counts = confusion(predictions, labels)
    mean_conf = None
    if confidences:
        mean_conf = sum(confidences) / len(confidences)
    return EvalReport(counts=counts, accuracy=accuracy(counts),
                      precision=precision(counts), recall=recall(counts),
                      f1=f1(counts), mean_confidence=mean_conf)


def evaluate_outcomes(outcomes: Iterable[Outcome]) -> EvalReport:
    """(prediction, label, confidence) triples; confidence may be None."""
    items = list(outcomes)
    confidences = [c for _, _, c in items if c is not None]
    return evaluate([p for p, _, _ in items], [lbl for _, lbl, _ in items],
                    confidences or None)


def ablation_report(results: Mapping[str, Iterable[Outcome]]
                    ) -> AblationTable:
    """One row per mode, ordered video, video+audio, video+audio+NFBL."""
    known = [m for m in MODE_LABELS if m in results]
    extra = sorted(m for m in results if m not in MODE_LABELS)
    rows = [AblationRow(mode=m, label=MODE_LABELS.get(m, m),
                        report=evaluate_outcomes(results[m]))
            for m in known + extra]
    return AblationTable(rows=rows)


def _pct(value: float) -> str:
    return f"{100.0 * value:.2f}"


def _conf(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.2f}"


TABLE_HEADER = ["Modalities", "Accuracy(%)", "F-score(%)", "Precision(%)",
                "Confidence(mean)"]


def table_cells(table: AblationTable) -> List[List[str]]:
    return [[row.label, _pct(row.report.accuracy), _pct(row.report.f1),
             _pct(row.report.precision), _conf(row.report.mean_confidence)]
            for row in table.rows]


def render_table(table: AblationTable) -> str:
    """Aligned plain-text table."""
    cells = [TABLE_HEADER] + table_cells(table)
    widths = [max(len(row[i]) for row in cells)
              for i in range(len(TABLE_HEADER))]
    lines = []
    for n, row in enumerate(cells):
        first = row[0].ljust(widths[0])
        rest = [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
        lines.append("  ".join([first] + rest))
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def render_csv(table: AblationTable) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(TABLE_HEADER)
    writer.writerows(table_cells(table))
    return buffer.getvalue()


def render_report(report: EvalReport) -> str:
    c = report.counts
    return (f"TP={c.tp} TN={c.tn} FP={c.fp} FN={c.fn}\n"
            f"Accuracy   {_pct(report.accuracy)}%\n"
            f"Precision  {_pct(report.precision)}%\n"
            f"Recall     {_pct(report.recall)}%\n"
            f"F-score    {_pct(report.f1)}%\n"
            f"Confidence {_conf(report.mean_confidence)}\n")
