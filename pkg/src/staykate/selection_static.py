"""Static example selection by predictive-entropy representativeness.

Candidates from the unlabeled pool are scored by how far their mean token
entropy sits from a target zone near the pool mean:

    score(x) = |H(x) - (mean_H + lambda * std_H)|

where H(x) is the mean token-level predictive entropy of the sentence and
mean/std are taken over the whole pool (population statistics). The k_s
lowest-scoring candidates are selected.

Entropy uses the natural logarithm. The ranking is invariant to any positive
rescaling of the entropies, so the log base cannot change the selected set.

Probability file format: JSON-lines, one object per sentence
``{"id": str, "labels": [str], "probs": [[float]]}``, with an optional header
line ``{"class_labels": [...]}`` that must match every record.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import ValidationError

ROW_SUM_TOLERANCE = 1e-6


@dataclass(frozen=True)
class TokenProbMatrix:
    """Per-token class-probability rows for one sentence."""

    sentence_id: str
    class_labels: tuple[str, ...]
    rows: np.ndarray

    @classmethod
    def build(
        cls,
        sentence_id: str,
        class_labels: Iterable[str],
        rows: Iterable[Iterable[float]],
    ) -> "TokenProbMatrix":
        labels = tuple(class_labels)
        matrix = np.asarray(list(rows), dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] == 0:
            raise ValidationError(f"sentence {sentence_id}: probability matrix is empty")
        if matrix.shape[1] != len(labels):
            raise ValidationError(
                f"sentence {sentence_id}: rows have {matrix.shape[1]} entries "
                f"but {len(labels)} class labels were given"
            )
        if np.any(matrix < 0.0):
            raise ValidationError(f"sentence {sentence_id}: negative probability entry")
        if np.any(matrix > 1.0 + 1e-9):
            raise ValidationError(f"sentence {sentence_id}: probability entry greater than 1")
        sums = matrix.sum(axis=1)
        off = np.abs(sums - 1.0)
        if np.any(off > ROW_SUM_TOLERANCE):
            bad = int(np.argmax(off))
            raise ValidationError(
                f"sentence {sentence_id}: row {bad} sums to {sums[bad]:.8f}, "
                f"outside tolerance {ROW_SUM_TOLERANCE}"
            )
        matrix = matrix / sums[:, None]
        matrix.setflags(write=False)
        return cls(sentence_id=sentence_id, class_labels=labels, rows=matrix)

    @property
    def token_count(self) -> int:
        return int(self.rows.shape[0])


@dataclass(frozen=True)
class EntropyStats:
    """Population mean/std of sentence entropies over one candidate pool."""

    mean: float
    std_dev: float
    per_sentence: dict[str, float]


@dataclass(frozen=True)
class StaticSelection:
    """The chosen static example ids, ordered by ascending score."""

    chosen_ids: tuple[str, ...]
    lambda_: float
    scores: dict[str, float]


def token_entropy(row: Iterable[float]) -> float:
    """Shannon entropy of one probability row, in nats, with 0*ln(0) = 0."""
    if isinstance(row, np.ndarray):
        if row.ndim != 1:
            raise ValidationError("token_entropy expects a single probability vector")
        values = row.tolist()
    else:
        values = [float(p) for p in row]
    if any(p < 0.0 for p in values):
        raise ValidationError("probability row has a negative entry")
    total = math.fsum(values)
    if abs(total - 1.0) > ROW_SUM_TOLERANCE:
        raise ValidationError(f"probability row sums to {total:.8f}, not 1")
    # fsum keeps the reduction exactly rounded, so the result does not depend
    # on summation order or platform BLAS.
    return -math.fsum(p * math.log(p) for p in values if p > 0.0)


def sentence_entropy(matrix: TokenProbMatrix) -> float:
    """Mean token entropy of the sentence."""
    if matrix.token_count == 0:
        raise ValidationError(f"sentence {matrix.sentence_id}: empty probability matrix")
    return math.fsum(token_entropy(r) for r in matrix.rows.tolist()) / matrix.token_count


def pool_entropy_stats(matrices: Iterable[TokenProbMatrix]) -> EntropyStats:
    """Population mean and standard deviation of H(x) over the pool."""
    matrices = list(matrices)
    if not matrices:
        raise ValidationError("entropy stats require a non-empty pool")
    labels = matrices[0].class_labels
    per_sentence: dict[str, float] = {}
    for m in matrices:
        if m.class_labels != labels:
            raise ValidationError(
                f"sentence {m.sentence_id}: class labels differ from the rest of the pool"
            )
        if m.sentence_id in per_sentence:
            raise ValidationError(f"duplicate sentence id {m.sentence_id} in pool")
        per_sentence[m.sentence_id] = sentence_entropy(m)
    return entropy_stats(per_sentence)


def entropy_stats(per_sentence: Mapping[str, float]) -> EntropyStats:
    """Population statistics over a map of per-sentence entropies."""
    if not per_sentence:
        raise ValidationError("entropy stats require a non-empty pool")
    values = [per_sentence[k] for k in sorted(per_sentence)]
    n = len(values)
    mean = math.fsum(values) / n
    variance = math.fsum((v - mean) ** 2 for v in values) / n
    return EntropyStats(mean=mean, std_dev=math.sqrt(variance), per_sentence=dict(per_sentence))


def r_score(h: float, stats: EntropyStats, lambda_: float) -> float:
    """Distance of a candidate's entropy from the preferred selection zone."""
    return abs(h - (stats.mean + lambda_ * stats.std_dev))


def select_from_entropies(
    per_sentence: Mapping[str, float], k_s: int, lambda_: float
) -> StaticSelection:
    """Select the k_s candidates whose entropy is closest to mean + lambda*std.

    Ties are broken by ascending sentence id; the chosen ids are ordered by
    ascending score.
    """
    if lambda_ < 0:
        raise ValidationError(f"lambda must be >= 0, got {lambda_}")
    if k_s > len(per_sentence):
        raise ValidationError(f"k_s={k_s} exceeds pool size {len(per_sentence)}")
    if k_s < 0:
        raise ValidationError(f"k_s must be >= 0, got {k_s}")
    stats = entropy_stats(per_sentence)
    scores = {sid: r_score(h, stats, lambda_) for sid, h in per_sentence.items()}
    ranked = sorted(scores, key=lambda sid: (scores[sid], sid))
    return StaticSelection(chosen_ids=tuple(ranked[:k_s]), lambda_=lambda_, scores=scores)


def select_static(
    pool: Iterable[TokenProbMatrix], k_s: int, lambda_: float
) -> StaticSelection:
    """Score the unlabeled pool and pick the k_s most representative sentences."""
    stats = pool_entropy_stats(pool)
    return select_from_entropies(stats.per_sentence, k_s, lambda_)


def load_probability_file(
    path: str | Path,
    *,
    expected_labels: Iterable[str] | None = None,
    token_counts: Mapping[str, int] | None = None,
) -> dict[str, TokenProbMatrix]:
    """Load and validate a JSON-lines probability file.

    ``expected_labels`` pins the class label set; ``token_counts`` maps
    sentence id to the corpus token count and is enforced when given.
    """
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"probability file not found: {path}")
    expected = tuple(expected_labels) if expected_labels is not None else None
    matrices: dict[str, TokenProbMatrix] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path.name}:{lineno}: invalid JSON: {exc}") from exc
            if "class_labels" in record and "id" not in record:
                header = tuple(record["class_labels"])
                if expected is not None and header != expected:
                    raise ValidationError(
                        f"{path.name}:{lineno}: header class labels {header} "
                        f"do not match expected {expected}"
                    )
                expected = header
                continue
            for key in ("id", "labels", "probs"):
                if key not in record:
                    raise ValidationError(f"{path.name}:{lineno}: record missing {key!r}")
            sid = record["id"]
            if sid in matrices:
                raise ValidationError(f"{path.name}:{lineno}: duplicate id {sid!r}")
            labels = tuple(record["labels"])
            if expected is not None and labels != expected:
                raise ValidationError(
                    f"{path.name}:{lineno}: labels for {sid!r} do not match the pool's label set"
                )
            expected = labels
            matrix = TokenProbMatrix.build(sid, labels, record["probs"])
            if token_counts is not None and sid in token_counts:
                if matrix.token_count != token_counts[sid]:
                    raise ValidationError(
                        f"{path.name}:{lineno}: sentence {sid!r} has {token_counts[sid]} "
                        f"corpus tokens but {matrix.token_count} probability rows"
                    )
            matrices[sid] = matrix
    return matrices
