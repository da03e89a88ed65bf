"""Pair-level per-class precision/recall/F1 scoring and report rendering.

Scoring is competition-style over a sparse gold set assumed complete:
a predicted pair absent from gold counts as a false positive for its
predicted class, and 0/0 precision or recall is defined as 0.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .dedup import DuplicateLabel, LabeledPair
from .errors import DataError, DuplicatePrediction

SCORED_CLASSES = (DuplicateLabel.FULL, DuplicateLabel.SEMANTIC, DuplicateLabel.TEMPORAL)


@dataclass(frozen=True)
class GoldSet:
    """Canonical-keyed map of true duplicate pairs; NONE pairs are never stored."""

    pairs: Mapping[tuple[str, str], DuplicateLabel]

    def __post_init__(self) -> None:
        for (id_a, id_b), label in self.pairs.items():
            if id_a >= id_b:
                raise DataError(f"gold key ({id_a!r}, {id_b!r}) is not canonically ordered")
            if label not in SCORED_CLASSES:
                raise DataError(f"gold label for ({id_a}, {id_b}) must be a duplicate class")

    def __len__(self) -> int:
        return len(self.pairs)

    def save_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id1", "id2", "label"])
            for (id_a, id_b), label in sorted(self.pairs.items()):
                writer.writerow([id_a, id_b, label.value])

    @classmethod
    def load_csv(cls, path: str | Path) -> "GoldSet":
        pairs: dict[tuple[str, str], DuplicateLabel] = {}
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                key = (row["id1"], row["id2"])
                if key in pairs:
                    raise DataError(f"gold pair {key} listed twice")
                pairs[key] = DuplicateLabel(row["label"])
        return cls(pairs)


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
        }


@dataclass(frozen=True)
class EvalReport:
    per_class: Mapping[str, ClassMetrics]
    macro_f1: float

    def to_dict(self) -> dict:
        out: dict = {name: metrics.to_dict() for name, metrics in self.per_class.items()}
        out["macro_f1"] = self.macro_f1
        return out


def _safe_ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def score(predicted: Sequence[LabeledPair], gold: GoldSet) -> EvalReport:
    """Per-class TP/FP/FN against gold; 0/0 ratios are 0, macro over classes."""
    predicted_by_key: dict[tuple[str, str], DuplicateLabel] = {}
    for pair in predicted:
        if pair.label == DuplicateLabel.NONE:
            raise DataError("NONE pairs must not be emitted as predictions")
        if pair.key in predicted_by_key:
            raise DuplicatePrediction(pair.id_a, pair.id_b)
        predicted_by_key[pair.key] = pair.label

    per_class: dict[str, ClassMetrics] = {}
    f1s = []
    for cls in SCORED_CLASSES:
        tp = sum(
            1
            for key, label in predicted_by_key.items()
            if label == cls and gold.pairs.get(key) == cls
        )
        fp = sum(1 for label in predicted_by_key.values() if label == cls) - tp
        fn = sum(1 for label in gold.pairs.values() if label == cls) - tp
        precision = _safe_ratio(tp, tp + fp)
        recall = _safe_ratio(tp, tp + fn)
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[cls.value] = ClassMetrics(precision, recall, f1, tp, fp, fn)
        f1s.append(f1)
    return EvalReport(per_class=per_class, macro_f1=sum(f1s) / len(f1s))


def write_results_csv(pairs: Iterable[LabeledPair], path: str | Path) -> None:
    """Results file: id1,id2,label,distance,reason sorted by (id1, id2)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id1", "id2", "label", "distance", "reason"])
        for pair in sorted(pairs, key=lambda p: p.key):
            distance = "" if pair.distance is None else repr(pair.distance)
            writer.writerow([pair.id_a, pair.id_b, pair.label.value, distance, pair.reason])


def read_results_csv(path: str | Path) -> list[LabeledPair]:
    pairs = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            distance = float(row["distance"]) if row["distance"] else None
            pairs.append(
                LabeledPair(
                    id_a=row["id1"],
                    id_b=row["id2"],
                    label=DuplicateLabel(row["label"]),
                    distance=distance,
                    reason=row["reason"],
                )
            )
    return pairs


def render_report(
    run_report: Mapping | None,
    eval_report: Optional[EvalReport] = None,
    format: str = "text",
) -> str:
    """Render the run report (and optional eval report) as text or JSON.

    The JSON form is the exact serialization of the report mappings, so
    reparsing it reproduces the input field for field.
    """
    run = dict(run_report) if run_report else {}
    if format == "json":
        document: dict = {"run": run}
        if eval_report is not None:
            document["eval"] = eval_report.to_dict()
        return json.dumps(document, indent=2)
    if format != "text":
        raise DataError(f"unknown report format {format!r}")

    lines = []
    if run:
        lines.append("== Run ==")
        for key in ("mode", "k", "base_theta", "n_postings", "n_groups", "n_representatives"):
            if key in run:
                lines.append(f"{key}: {run[key]}")
        if run.get("stage_seconds"):
            lines.append("-- stage timings (s) --")
            for stage, seconds in run["stage_seconds"].items():
                lines.append(f"{stage:>12}: {seconds:.3f}")
        if run.get("counters"):
            lines.append("-- counters --")
            for name, value in run["counters"].items():
                lines.append(f"{name}: {value}")
        if run.get("label_counts"):
            lines.append("-- labels --")
            for name, value in run["label_counts"].items():
                lines.append(f"{name}: {value}")
        if run.get("truncation"):
            t = run["truncation"]
            lines.append("-- truncation --")
            lines.append(
                f"truncated {t['n_truncated']}/{t['n_total']} "
                f"(fraction {t['fraction_truncated']:.3f}), "
                f"mean lost {t['mean_tokens_lost']:.1f}, median lost {t['median_tokens_lost']:.1f}"
            )
        if run.get("saturation"):
            s = run["saturation"]
            lines.append("-- saturation --")
            lines.append(f"{s['count']} queries with all {s['k']} hits under {s['theta']}")
        if run.get("sweep"):
            lines.append("-- threshold sweep --")
            lines.append(f"{'theta':>8} {'kept':>8} {'fraction':>9}")
            for theta, kept, fraction in run["sweep"]:
                lines.append(f"{theta:>8.3f} {kept:>8d} {fraction:>9.4f}")
    if eval_report is not None:
        lines.append("== Evaluation ==")
        lines.append(f"{'class':>9} {'precision':>10} {'recall':>8} {'f1':>8} {'tp':>6} {'fp':>6} {'fn':>6}")
        for name, m in eval_report.per_class.items():
            lines.append(
                f"{name:>9} {m.precision:>10.4f} {m.recall:>8.4f} {m.f1:>8.4f} "
                f"{m.tp:>6d} {m.fp:>6d} {m.fn:>6d}"
            )
        lines.append(f"macro F1: {eval_report.macro_f1:.4f}")
    return "\n".join(lines) + "\n"


__all__ = [
    "SCORED_CLASSES",
    "GoldSet",
    "ClassMetrics",
    "EvalReport",
    "score",
    "write_results_csv",
    "read_results_csv",
    "render_report",
]
