"""Accuracy, mean per-class accuracy (avgT), confusion matrices and the
model x dataset comparison tables."""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyMatrix, LengthMismatch, UnknownLabel

PART_COLUMNS = (("train", "Tr."), ("val", "Val."), ("test", "T."))
AVG_COLUMN = "avgT"


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # rows = true class, columns = predicted class
    class_list: list

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["true\\pred"] + list(self.class_list))
        for name, row in zip(self.class_list, self.counts):
            writer.writerow([name] + [int(v) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ConfusionMatrix":
        rows = list(csv.reader(io.StringIO(text)))
        classes = rows[0][1:]
        counts = np.array([[int(v) for v in r[1:]] for r in rows[1:]], dtype=np.int64)
        return cls(counts.reshape(len(classes), len(classes)), classes)


@dataclass
class MetricsRecord:
    accuracy: float
    mean_class_accuracy: float
    per_class_recall: dict
    counts: dict
    total: int

    def to_dict(self) -> dict:
        return asdict(self)


def confusion_matrix(true_labels: Sequence, predicted_labels: Sequence, class_list: Sequence) -> ConfusionMatrix:
    true_labels, predicted_labels = list(true_labels), list(predicted_labels)
    if len(true_labels) != len(predicted_labels):
        raise LengthMismatch(f"{len(true_labels)} true labels vs {len(predicted_labels)} predictions")
    index = {c: i for i, c in enumerate(class_list)}
    try:
        t = np.array([index[v] for v in true_labels], dtype=np.int64)
        p = np.array([index[v] for v in predicted_labels], dtype=np.int64)
    except KeyError as exc:
        raise UnknownLabel(f"label {exc.args[0]!r} not in class list") from None
    C = len(class_list)
    counts = np.bincount(t * C + p, minlength=C * C).reshape(C, C) if C else np.zeros((0, 0), dtype=np.int64)
    return ConfusionMatrix(counts, list(class_list))


def metrics(cm: ConfusionMatrix) -> MetricsRecord:
    """Overall accuracy and macro recall over classes that have true samples."""
    total = cm.total
    if total <= 0:
        raise EmptyMatrix("confusion matrix has no samples")
    support = cm.counts.sum(axis=1)
    diag = np.diag(cm.counts)
    recalls = {}
    for name, s, d in zip(cm.class_list, support, diag):
        recalls[name] = float(d / s) if s > 0 else None
    present = [r for r in recalls.values() if r is not None]
    return MetricsRecord(
        accuracy=float(diag.sum() / total),
        mean_class_accuracy=float(sum(present) / len(present)),
        per_class_recall=recalls,
        counts={name: int(s) for name, s in zip(cm.class_list, support)},
        total=total,
    )


def evaluate_predictions(true_labels, predicted_labels, class_list) -> tuple[ConfusionMatrix, MetricsRecord]:
    cm = confusion_matrix(true_labels, predicted_labels, class_list)
    return cm, metrics(cm)


# ---------------------------------------------------------------- report

@dataclass(frozen=True)
class ResultRecord:
    """One number of a comparison table.

    ``protocol`` is ``"split"`` (video-level train/val/test) or ``"cv"``
    (frame-level k-fold); ``part`` is train/val/test for splits and ``cv``
    for cross-validation means.
    """

    model: str
    family: str
    dataset: str
    protocol: str
    part: str
    accuracy: float
    mean_class_accuracy: Optional[float] = None


REPORT_FIELDS = ["model", "family", "dataset", "protocol", "part", "accuracy", "mean_class_accuracy", "best"]


def _ordered(values):
    seen = {}
    for v in values:
        seen.setdefault(v, None)
    return list(seen)


def _cell_values(results: Sequence[ResultRecord]):
    """Map (protocol, model, dataset, column) -> value."""
    cells = {}
    for r in results:
        if r.protocol == "cv":
            cells[("cv", r.model, r.dataset, "CV")] = r.accuracy
        else:
            label = dict(PART_COLUMNS).get(r.part, r.part)
            cells[("split", r.model, r.dataset, label)] = r.accuracy
            if r.part == "test" and r.mean_class_accuracy is not None:
                cells[("split", r.model, r.dataset, AVG_COLUMN)] = r.mean_class_accuracy
    return cells


def best_flags(results: Sequence[ResultRecord]) -> set:
    """Cells holding the best non-train value within each model family."""
    cells = _cell_values(results)
    family = {r.model: r.family for r in results}
    groups = defaultdict(list)
    for (proto, model, dataset, col), v in cells.items():
        if col == "Tr.":
            continue
        groups[(proto, family[model], dataset, col)].append((model, v))
    flagged = set()
    for (proto, fam, dataset, col), members in groups.items():
        top = max(v for _, v in members)
        for model, v in members:
            if v == top:
                flagged.add((proto, model, dataset, col))
    return flagged


def _digits_for(values: list, base: int = 3, limit: int = 8) -> int:
    """Fewest digits >= base at which distinct values stay distinct."""
    distinct = set(values)
    for d in range(base, limit + 1):
        if len({f"{v:.{d}f}" for v in distinct}) == len(distinct):
            return d
    return limit


def _render_grid(title, models, datasets, columns, cells, proto, flagged) -> str:
    digits = {}
    for ds in datasets:
        for col in columns:
            vals = [cells[(proto, m, ds, col)] for m in models if (proto, m, ds, col) in cells]
            digits[(ds, col)] = _digits_for(vals) if vals else 3
    widths = {}
    rows = []
    for m in models:
        row = [m]
        for ds in datasets:
            for col in columns:
                key = (proto, m, ds, col)
                if key in cells:
                    text = f"{cells[key]:.{digits[(ds, col)]}f}" + ("*" if key in flagged else " ")
                else:
                    text = "-"
                row.append(text)
        rows.append(row)
    header2 = ["Model"] + [col for _ in datasets for col in columns]
    header1 = [""] + [ds if i == 0 else "" for ds in datasets for i, _ in enumerate(columns)]
    table = [header1, header2] + rows
    for j in range(len(header2)):
        widths[j] = max(len(r[j]) for r in table)
    lines = [title]
    for r in table:
        lines.append("  ".join(cell.rjust(widths[j]) if j else cell.ljust(widths[j]) for j, cell in enumerate(r)))
    return "\n".join(lines)


def render_report(results: Sequence[ResultRecord]) -> tuple[str, str]:
    """Render (text, csv). ``*`` marks the best non-train value per model family."""
    results = list(results)
    flagged = best_flags(results)
    cells = _cell_values(results)
    text_parts = []
    for proto, title, columns in (
        ("cv", "Frame-level k-fold cross-validation (mean accuracy)", ["CV"]),
        ("split", "Video-level split accuracies (avgT = mean per-class test accuracy)",
         [c for _, c in PART_COLUMNS] + [AVG_COLUMN]),
    ):
        sub = [r for r in results if (r.protocol == "cv") == (proto == "cv")]
        if not sub:
            continue
        models = _ordered(r.model for r in sub)
        datasets = _ordered(r.dataset for r in sub)
        text_parts.append(_render_grid(title, models, datasets, columns, cells, proto, flagged))
    text = "\n\n".join(text_parts) + ("\n* best non-train value within the model family\n" if text_parts else "")

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_FIELDS)
    for r in results:
        if r.protocol == "cv":
            best = ("cv", r.model, r.dataset, "CV") in flagged
        else:
            col = dict(PART_COLUMNS).get(r.part, r.part)
            best = ("split", r.model, r.dataset, col) in flagged
        writer.writerow([r.model, r.family, r.dataset, r.protocol, r.part, repr(r.accuracy),
                         "" if r.mean_class_accuracy is None else repr(r.mean_class_accuracy), int(best)])
    return text, buf.getvalue()


def parse_report_csv(text: str) -> list[ResultRecord]:
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        out.append(ResultRecord(
            model=row["model"], family=row["family"], dataset=row["dataset"], protocol=row["protocol"],
            part=row["part"], accuracy=float(row["accuracy"]),
            mean_class_accuracy=float(row["mean_class_accuracy"]) if row["mean_class_accuracy"] else None,
        ))
    return out


def records_from_result(doc: dict) -> list[ResultRecord]:
    """Flatten a result JSON written by the CLI into table records."""
    base = dict(model=doc["model"], family=doc.get("family", "handcrafted"), dataset=doc["dataset"])
    if doc["protocol"] == "cv":
        return [ResultRecord(**base, protocol="cv", part="cv", accuracy=float(doc["cv"]["mean_accuracy"]))]
    out = []
    for part, _ in PART_COLUMNS:
        m = doc.get("parts", {}).get(part)
        if m is not None:
            out.append(ResultRecord(**base, protocol="split", part=part, accuracy=float(m["accuracy"]),
                                    mean_class_accuracy=float(m["mean_class_accuracy"])))
    return out


def save_confusion_png(cm: ConfusionMatrix, path, title: str = "") -> None:
    """Row-normalized heatmap of a confusion matrix."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    support = cm.counts.sum(axis=1, keepdims=True)
    norm = np.divide(cm.counts, support, out=np.zeros(cm.counts.shape), where=support > 0)
    fig, ax = plt.subplots(figsize=(1.2 * len(cm.class_list) + 2, 1.2 * len(cm.class_list) + 1.5))
    ax.imshow(norm, cmap="Blues", vmin=0, vmax=1)
    ax.set_xticks(range(len(cm.class_list)), cm.class_list, rotation=45, ha="right")
    ax.set_yticks(range(len(cm.class_list)), cm.class_list)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    for i in range(len(cm.class_list)):
        for j in range(len(cm.class_list)):
            ax.text(j, i, f"{norm[i, j]:.2f}", ha="center", va="center",
                    color="white" if norm[i, j] > 0.5 else "black", fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(Path(path), dpi=120)
    plt.close(fig)
