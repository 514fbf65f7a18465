"""Evaluation artifacts: confusion matrices, weighted metrics, classification
reports, model-comparison tables, and row-normalized heatmap SVGs.

Zero-denominator convention: per-class precision/recall/F1 are 0 when their
denominators are 0, and all-zero confusion rows normalize to all-zero rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import DataError

__all__ = [
    "ConfusionMatrix",
    "ClassMetrics",
    "ClassReport",
    "WeightedSummary",
    "CompareTable",
    "confusion",
    "row_normalize",
    "weighted_metrics",
    "compare_models",
    "heatmap_svg",
    "format3",
    "report_to_csv",
]

METRIC_NAMES = ("Acc", "Prec", "Rec", "F1")


@dataclass(frozen=True)
class ConfusionMatrix:
    classes: tuple[str, ...]
    counts: np.ndarray  # K x K ints; rows = true class, columns = predicted

    @property
    def total(self):
        return int(self.counts.sum())


@dataclass(frozen=True)
class ClassMetrics:
    class_label: str
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class ClassReport:
    rows: tuple[ClassMetrics, ...]

    @property
    def total_support(self):
        return sum(r.support for r in self.rows)


@dataclass(frozen=True)
class WeightedSummary:
    accuracy: float
    precision: float
    recall: float
    f1: float

    def as_tuple(self):
        return (self.accuracy, self.precision, self.recall, self.f1)


def confusion(y_true, y_pred, classes):
    """counts[i][j] = number of instances with true class i predicted as j."""
    y_true, y_pred = list(y_true), list(y_pred)
    if len(y_true) != len(y_pred):
        raise DataError(f"length mismatch: {len(y_true)} true vs {len(y_pred)} predicted")
    classes = tuple(classes)
    index = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        if t not in index:
            raise DataError(f"unknown true label {t!r}")
        if p not in index:
            raise DataError(f"unknown predicted label {p!r}")
        counts[index[t], index[p]] += 1
    return ConfusionMatrix(classes=classes, counts=counts)


def row_normalize(cm):
    """Divide each row by its row total; all-zero rows stay all-zero."""
    counts = cm.counts.astype(np.float64)
    sums = counts.sum(axis=1, keepdims=True)
    out = np.divide(counts, sums, out=np.zeros_like(counts), where=sums > 0)
    return out


def weighted_metrics(y_true, y_pred, classes=None):
    """Support-weighted precision/recall/F1 plus accuracy and per-class rows."""
    y_true, y_pred = list(y_true), list(y_pred)
    if not y_true:
        raise DataError("weighted_metrics needs at least one instance")
    if classes is None:
        classes = tuple(sorted(set(y_true) | set(y_pred)))
    cm = confusion(y_true, y_pred, classes)
    counts = cm.counts.astype(np.float64)
    tp = np.diag(counts)
    fp = counts.sum(axis=0) - tp
    fn = counts.sum(axis=1) - tp
    support = counts.sum(axis=1)

    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(tp + fp > 0, tp / (tp + fp), 0.0)
        recall = np.where(tp + fn > 0, tp / (tp + fn), 0.0)
        pr_sum = precision + recall
        f1 = np.where(pr_sum > 0, 2.0 * precision * recall / pr_sum, 0.0)

    total = support.sum()
    summary = WeightedSummary(
        accuracy=float(tp.sum() / total),
        precision=float((support * precision).sum() / total),
        recall=float((support * recall).sum() / total),
        f1=float((support * f1).sum() / total),
    )
    rows = tuple(
        ClassMetrics(
            class_label=c,
            precision=float(precision[i]),
            recall=float(recall[i]),
            f1=float(f1[i]),
            support=int(support[i]),
        )
        for i, c in enumerate(cm.classes)
    )
    return summary, ClassReport(rows=rows)


def format3(value):
    """Three decimals without a leading zero: 0.524 -> \".524\"."""
    s = f"{value:.3f}"
    if s.startswith("0."):
        return s[1:]
    if s.startswith("-0."):
        return "-" + s[2:]
    return s


@dataclass(frozen=True)
class CompareTable:
    model_names: tuple[str, ...]
    dimensions: tuple[str, ...]
    # values[model][dimension] = WeightedSummary
    values: dict[str, dict[str, WeightedSummary]]
    # marks[(dimension, metric)] = ("best"|"second") -> set of model names
    marks: dict[tuple[str, str], dict[str, set[str]]]


def compare_models(summaries):
    """Mark best and second-best per column across models.

    ``summaries`` maps model name -> dimension name -> WeightedSummary. All
    models must cover the same dimension set. Ties share the mark; the second
    mark goes to the next *distinct* value below the best.
    """
    model_names = tuple(summaries)
    if len(model_names) < 2:
        raise DataError("compare_models needs at least two models")
    dimensions = tuple(summaries[model_names[0]])
    for name in model_names:
        if tuple(summaries[name]) != dimensions:
            raise DataError(
                f"model {name!r} covers dimensions {tuple(summaries[name])}, "
                f"expected {dimensions}"
            )
    marks = {}
    for dim in dimensions:
        for m_idx, metric in enumerate(METRIC_NAMES):
            column = {name: summaries[name][dim].as_tuple()[m_idx] for name in model_names}
            distinct = sorted(set(column.values()), reverse=True)
            best_value = distinct[0]
            second_value = distinct[1] if len(distinct) > 1 else None
            marks[(dim, metric)] = {
                "best": {n for n, v in column.items() if v == best_value},
                "second": {n for n, v in column.items() if v == second_value}
                if second_value is not None
                else set(),
            }
    return CompareTable(
        model_names=model_names,
        dimensions=dimensions,
        values={n: dict(summaries[n]) for n in model_names},
        marks=marks,
    )


def render_compare_text(table):
    """Aligned plain-text table; best wrapped in ** **, second in * *."""
    header = ["Model"]
    for dim in table.dimensions:
        header += [f"{dim}:{m}" for m in METRIC_NAMES]
    lines = [header]
    for name in table.model_names:
        row = [name]
        for dim in table.dimensions:
            summary = table.values[name][dim]
            for metric, value in zip(METRIC_NAMES, summary.as_tuple()):
                cell = format3(value)
                mark = table.marks[(dim, metric)]
                if name in mark["best"]:
                    cell = f"**{cell}**"
                elif name in mark["second"]:
                    cell = f"*{cell}*"
                row.append(cell)
        lines.append(row)
    widths = [max(len(line[i]) for line in lines) for i in range(len(header))]
    rendered = []
    for line in lines:
        rendered.append("  ".join(cell.rjust(w) for cell, w in zip(line, widths)))
    rendered.insert(1, "-" * len(rendered[0]))
    return "\n".join(rendered) + "\n"


def render_compare_csv(table):
    """CSV with one value column and one mark column per (dimension, metric)."""
    header = ["model"]
    for dim in table.dimensions:
        for metric in METRIC_NAMES:
            header += [f"{dim}.{metric}", f"{dim}.{metric}.mark"]
    out = [",".join(header)]
    for name in table.model_names:
        row = [name]
        for dim in table.dimensions:
            summary = table.values[name][dim]
            for metric, value in zip(METRIC_NAMES, summary.as_tuple()):
                mark = table.marks[(dim, metric)]
                flag = "best" if name in mark["best"] else (
                    "second" if name in mark["second"] else ""
                )
                row += [format3(value), flag]
        out.append(",".join(row))
    return "\n".join(out) + "\n"


def report_to_csv(report):
    lines = ["class,precision,recall,f1,support"]
    for row in report.rows:
        lines.append(
            f"{row.class_label},{row.precision!r},{row.recall!r},{row.f1!r},{row.support}"
        )
    return "\n".join(lines) + "\n"


def _round_row_to_cents(row):
    """Largest-remainder rounding to 2 decimals so displayed rows sum to 1.00."""
    total_cents = int(round(float(row.sum()) * 100))
    if total_cents <= 0:
        return [0] * len(row)
    scaled = row * 100.0
    floors = np.floor(scaled).astype(int)
    remainder = total_cents - int(floors.sum())
    fractions = scaled - floors
    order = np.lexsort((np.arange(len(row)), -fractions))
    cents = floors.copy()
    for k in range(remainder):
        cents[order[k % len(row)]] += 1
    return cents.tolist()


CELL = 44
LEFT = 64
TOP = 56
RIGHT = 16
BOTTOM = 16


def heatmap_svg(matrix, classes, title):
    """Deterministic monochrome heatmap with 2-decimal cell annotations.

    Cell shading is black with opacity proportional to the value. Annotations
    are rounded per row by largest remainder, so each displayed non-zero row
    sums to exactly 1.00.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DataError(f"heatmap needs a square matrix, got shape {matrix.shape}")
    if matrix.shape[0] != len(classes):
        raise DataError(
            f"matrix is {matrix.shape[0]}x{matrix.shape[0]} but {len(classes)} classes given"
        )
    if matrix.size and (matrix.min() < 0 or matrix.max() > 1 + 1e-9):
        raise DataError("heatmap values must lie in [0, 1]")
    k = matrix.shape[0]
    width = LEFT + k * CELL + RIGHT
    height = TOP + k * CELL + BOTTOM
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="monospace" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">'
        f"{_xml_escape(title)}</text>",
    ]
    for j, label in enumerate(classes):
        x = LEFT + j * CELL + CELL / 2
        parts.append(
            f'<text x="{x:.1f}" y="{TOP - 8}" text-anchor="middle">{_xml_escape(label)}</text>'
        )
    for i, label in enumerate(classes):
        y = TOP + i * CELL + CELL / 2 + 4
        parts.append(
            f'<text x="{LEFT - 8}" y="{y:.1f}" text-anchor="end">{_xml_escape(label)}</text>'
        )
    for i in range(k):
        cents = _round_row_to_cents(matrix[i])
        for j in range(k):
            v = float(matrix[i, j])
            x = LEFT + j * CELL
            y = TOP + i * CELL
            parts.append(
                f'<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="black" '
                f'fill-opacity="{v:.4f}" stroke="#999" stroke-width="0.5"/>'
            )
            text_fill = "white" if v >= 0.5 else "black"
            parts.append(
                f'<text x="{x + CELL / 2:.1f}" y="{y + CELL / 2 + 4:.1f}" '
                f'text-anchor="middle" fill="{text_fill}">{cents[j] / 100:.2f}</text>'
            )
    parts.append("</svg>")
    return ("\n".join(parts) + "\n").encode("utf-8")


def _xml_escape(text):
    return (
        str(text)
        .replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
    )
