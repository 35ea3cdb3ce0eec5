"""Entity-level matching, per-type and micro F1, and the error taxonomy.

Matching is string-level: the model returns surface strings without offsets,
so predicted and gold entities are compared as (type, normalized surface)
pairs, where normalization case-folds and collapses internal whitespace.
Gold mentions are counted per occurrence (multiset), flagged in the report
metadata as ``counts_mode``.

Errors fall into three buckets: overpredicting (spurious entity), oversight
(missed entity), and wrong entity type (correct surface, wrong type). A
wrong-type pair consumes both a prediction and a gold entity, so it is
counted once rather than as one overprediction plus one oversight.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import EntitySpan
from .errors import ValidationError
from .llm import ExtractionResult

COUNTS_MODE = "per-mention multiset"


def normalize_surface(surface: str) -> str:
    """Case-fold and collapse internal whitespace."""
    return " ".join(surface.split()).casefold()


@dataclass
class MatchReport:
    """Per-sentence matching outcome.

    Surfaces are stored in normalized form. Conservation identities:
    |TP| + |wrong_type| + |overpredicted| == |predicted| and
    |TP| + |wrong_type| + |oversighted| == |gold|.
    """

    sentence_id: str
    true_positives: list[tuple[str, str]] = field(default_factory=list)
    wrong_type: list[tuple[str, str, str]] = field(default_factory=list)  # (pred, gold, surface)
    overpredicted: list[tuple[str, str]] = field(default_factory=list)
    oversighted: list[tuple[str, str]] = field(default_factory=list)
    predicted_total: int = 0
    gold_total: int = 0


def match_entities(predicted: ExtractionResult, gold: Sequence[EntitySpan]) -> MatchReport:
    """Greedy three-pass multiset matching of predictions against gold.

    Pass 1 pairs exact (type, surface) matches as true positives; pass 2
    pairs leftover entities sharing a surface but not a type as wrong-type;
    pass 3 books the remainders as overpredicted / oversighted. All passes
    iterate in sorted order, so the outcome is deterministic.
    """
    gold_ids = {span.sentence_id for span in gold}
    if gold_ids and gold_ids != {predicted.sentence_id}:
        raise ValidationError(
            f"prediction is for sentence {predicted.sentence_id!r} but gold spans "
            f"belong to {sorted(gold_ids)}"
        )

    pred_counts: Counter[tuple[str, str]] = Counter()
    for etype, surfaces in predicted.predicted.items():
        for surface in surfaces:
            pred_counts[(etype, normalize_surface(surface))] += 1
    gold_counts: Counter[tuple[str, str]] = Counter(
        (span.entity_type, normalize_surface(span.surface)) for span in gold
    )
    report = MatchReport(
        sentence_id=predicted.sentence_id,
        predicted_total=sum(pred_counts.values()),
        gold_total=sum(gold_counts.values()),
    )

    # Pass 1: exact (type, surface) pairs.
    for key in sorted(pred_counts.keys() & gold_counts.keys()):
        n = min(pred_counts[key], gold_counts[key])
        report.true_positives.extend([key] * n)
        pred_counts[key] -= n
        gold_counts[key] -= n
    pred_counts = +pred_counts
    gold_counts = +gold_counts

    # Pass 2: same surface, different type. After pass 1 a given (type,
    # surface) key has leftovers on at most one side, so any pairing within a
    # surface group is across differing types.
    pred_by_surface: dict[str, list[str]] = {}
    for (etype, surface), n in sorted(pred_counts.items()):
        pred_by_surface.setdefault(surface, []).extend([etype] * n)
    gold_by_surface: dict[str, list[str]] = {}
    for (etype, surface), n in sorted(gold_counts.items()):
        gold_by_surface.setdefault(surface, []).extend([etype] * n)
    for surface in sorted(pred_by_surface.keys() & gold_by_surface.keys()):
        pred_types = pred_by_surface[surface]
        gold_types = gold_by_surface[surface]
        n = min(len(pred_types), len(gold_types))
        for p, g in zip(pred_types[:n], gold_types[:n]):
            report.wrong_type.append((p, g, surface))
            pred_counts[(p, surface)] -= 1
            gold_counts[(g, surface)] -= 1

    # Pass 3: remainders.
    for (etype, surface), n in sorted((+pred_counts).items()):
        report.overpredicted.extend([(etype, surface)] * n)
    for (etype, surface), n in sorted((+gold_counts).items()):
        report.oversighted.extend([(etype, surface)] * n)
    return report


@dataclass
class TypeScores:
    precision: float
    recall: float
    f1: float
    support: float


@dataclass
class ErrorStats:
    true_positive: int
    overpredicting: int
    oversight: int
    wrong_type: int
    predicted_total: int
    gold_total: int
    overpredicting_rate: float
    wrong_type_rate: float
    oversight_rate: float


@dataclass
class EvalReport:
    """Scores for one pool, or the mean over pools when ``runs`` is set."""

    per_type: dict[str, TypeScores]
    micro: TypeScores
    errors: ErrorStats
    counts_mode: str = COUNTS_MODE
    runs: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        result = {
            "per_type": {
                t: {
                    "precision": s.precision,
                    "recall": s.recall,
                    "f1": s.f1,
                    "support": s.support,
                }
                for t, s in self.per_type.items()
            },
            "micro": {
                "precision": self.micro.precision,
                "recall": self.micro.recall,
                "f1": self.micro.f1,
            },
            "errors": {
                "true_positive": self.errors.true_positive,
                "overpredicting": self.errors.overpredicting,
                "oversight": self.errors.oversight,
                "wrong_type": self.errors.wrong_type,
                "predicted_total": self.errors.predicted_total,
                "gold_total": self.errors.gold_total,
                "overpredicting_rate": self.errors.overpredicting_rate,
                "wrong_type_rate": self.errors.wrong_type_rate,
                "oversight_rate": self.errors.oversight_rate,
            },
            "counts_mode": self.counts_mode,
        }
        if self.runs:
            result["runs"] = self.runs
        return result


def _ratio(numerator: float, denominator: float) -> float:
    return numerator / denominator if denominator else 0.0


def _f1(precision: float, recall: float) -> float:
    return _ratio(2 * precision * recall, precision + recall)


def f1_scores(reports: Iterable[MatchReport], entity_types: Sequence[str]) -> EvalReport:
    """Per-type and micro precision/recall/F1 plus pooled error statistics.

    A wrong-type pair counts against precision of the predicted type and
    against recall of the gold type; it earns no credit on either side.
    0/0 ratios are 0 by convention.
    """
    reports = list(reports)
    if not reports:
        raise ValidationError("f1_scores requires at least one match report")
    tp: Counter[str] = Counter()
    fp: Counter[str] = Counter()
    fn: Counter[str] = Counter()
    totals = ErrorStats(0, 0, 0, 0, 0, 0, 0.0, 0.0, 0.0)
    for report in reports:
        for etype, _ in report.true_positives:
            tp[etype] += 1
        for pred_type, gold_type, _ in report.wrong_type:
            fp[pred_type] += 1
            fn[gold_type] += 1
        for etype, _ in report.overpredicted:
            fp[etype] += 1
        for etype, _ in report.oversighted:
            fn[etype] += 1
        totals.true_positive += len(report.true_positives)
        totals.wrong_type += len(report.wrong_type)
        totals.overpredicting += len(report.overpredicted)
        totals.oversight += len(report.oversighted)
        totals.predicted_total += report.predicted_total
        totals.gold_total += report.gold_total

    per_type: dict[str, TypeScores] = {}
    for etype in entity_types:
        precision = _ratio(tp[etype], tp[etype] + fp[etype])
        recall = _ratio(tp[etype], tp[etype] + fn[etype])
        per_type[etype] = TypeScores(
            precision=precision,
            recall=recall,
            f1=_f1(precision, recall),
            support=tp[etype] + fn[etype],
        )
    micro_tp = sum(tp.values())
    micro_fp = sum(fp.values())
    micro_fn = sum(fn.values())
    micro_p = _ratio(micro_tp, micro_tp + micro_fp)
    micro_r = _ratio(micro_tp, micro_tp + micro_fn)
    micro = TypeScores(
        precision=micro_p, recall=micro_r, f1=_f1(micro_p, micro_r), support=totals.gold_total
    )
    totals.overpredicting_rate = _ratio(totals.overpredicting, totals.predicted_total)
    totals.wrong_type_rate = _ratio(totals.wrong_type, totals.predicted_total)
    totals.oversight_rate = _ratio(totals.oversight, totals.gold_total)
    return EvalReport(per_type=per_type, micro=micro, errors=totals)


def aggregate_runs(seed_reports: Sequence[tuple[int, EvalReport]]) -> EvalReport:
    """Arithmetic mean of every metric across pools; per-pool values retained."""
    if not seed_reports:
        raise ValidationError("aggregate_runs requires at least one pool report")
    type_sets = {tuple(r.per_type) for _, r in seed_reports}
    if len(type_sets) != 1:
        raise ValidationError("pool reports cover different entity type sets")
    n = len(seed_reports)
    entity_types = tuple(seed_reports[0][1].per_type)

    def mean(values: Iterable[float]) -> float:
        return sum(values) / n

    per_type = {
        t: TypeScores(
            precision=mean(r.per_type[t].precision for _, r in seed_reports),
            recall=mean(r.per_type[t].recall for _, r in seed_reports),
            f1=mean(r.per_type[t].f1 for _, r in seed_reports),
            support=mean(r.per_type[t].support for _, r in seed_reports),
        )
        for t in entity_types
    }
    micro = TypeScores(
        precision=mean(r.micro.precision for _, r in seed_reports),
        recall=mean(r.micro.recall for _, r in seed_reports),
        f1=mean(r.micro.f1 for _, r in seed_reports),
        support=mean(r.micro.support for _, r in seed_reports),
    )
    errors = ErrorStats(
        true_positive=sum(r.errors.true_positive for _, r in seed_reports),
        overpredicting=sum(r.errors.overpredicting for _, r in seed_reports),
        oversight=sum(r.errors.oversight for _, r in seed_reports),
        wrong_type=sum(r.errors.wrong_type for _, r in seed_reports),
        predicted_total=sum(r.errors.predicted_total for _, r in seed_reports),
        gold_total=sum(r.errors.gold_total for _, r in seed_reports),
        overpredicting_rate=mean(r.errors.overpredicting_rate for _, r in seed_reports),
        wrong_type_rate=mean(r.errors.wrong_type_rate for _, r in seed_reports),
        oversight_rate=mean(r.errors.oversight_rate for _, r in seed_reports),
    )
    runs = [{"seed": seed, **report.to_dict()} for seed, report in seed_reports]
    return EvalReport(per_type=per_type, micro=micro, errors=errors, runs=runs)


def render_table(report: EvalReport) -> str:
    """Aligned-column text table: one row per entity type plus a micro avg row."""
    headers = ("entity", "precision", "recall", "f1", "support")
    rows: list[tuple[str, str, str, str, str]] = []
    for etype, scores in report.per_type.items():
        rows.append(
            (
                etype,
                f"{scores.precision:.4f}",
                f"{scores.recall:.4f}",
                f"{scores.f1:.4f}",
                f"{scores.support:g}",
            )
        )
    rows.append(
        (
            "micro avg",
            f"{report.micro.precision:.4f}",
            f"{report.micro.recall:.4f}",
            f"{report.micro.f1:.4f}",
            f"{report.micro.support:g}",
        )
    )
    widths = [max(len(headers[i]), *(len(r[i]) for r in rows)) for i in range(len(headers))]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))]
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
    return "\n".join(lines)


def write_report_json(payload: dict, path: str | Path) -> None:
    """Write a report deterministically: sorted keys, two-space indent."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
    Path(path).write_text(text, encoding="utf-8")
