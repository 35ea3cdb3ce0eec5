"""Dynamic example retrieval: embedding-space k-nearest-neighbor search.

For each test input, the k_d most similar labeled sentences are retrieved by
cosine similarity and returned in ascending similarity order, so the most
similar demonstration sits last, adjacent to the test input in the prompt.

The reference implementation is an exhaustive scan; pools of a few hundred
sentences do not warrant an approximate index. Alternative backends must
reproduce the scan's output exactly (ids and order).

Embedding file format: JSON-lines ``{"id": str, "vector": [float]}``.
"""

from __future__ import annotations

import json
import math
import operator
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ValidationError

DEFAULT_DIMENSION = 1536


@dataclass(frozen=True)
class EmbeddingRecord:
    sentence_id: str
    vector: tuple[float, ...]


def _norm(vector: Sequence[float]) -> float:
    # fsum keeps reductions exactly rounded, so similarities are identical
    # across platforms and summation orders.
    return math.sqrt(math.fsum(map(operator.mul, vector, vector)))


def cosine_similarity(a: Sequence[float], b: Sequence[float]) -> float:
    """dot(a, b) / (|a| |b|); errors on dimension mismatch or zero norm."""
    if len(a) != len(b):
        raise ValidationError(f"dimension mismatch: {len(a)} vs {len(b)}")
    norm_a = _norm(a)
    norm_b = _norm(b)
    if norm_a == 0.0 or norm_b == 0.0:
        raise ValidationError("cosine similarity is undefined for a zero-norm vector")
    dot = math.fsum(map(operator.mul, a, b))
    return dot / (norm_a * norm_b)


class EmbeddingIndex:
    """Immutable exhaustive-scan index over the labeled pool's embeddings."""

    def __init__(self, records: Iterable[EmbeddingRecord], dimension: int | None = None):
        self._records: list[EmbeddingRecord] = []
        self._norms: list[float] = []
        seen: set[str] = set()
        for record in records:
            if record.sentence_id in seen:
                raise ValidationError(f"duplicate embedding id {record.sentence_id!r}")
            if dimension is None:
                dimension = len(record.vector)
            if len(record.vector) != dimension:
                raise ValidationError(
                    f"embedding {record.sentence_id!r} has dimension "
                    f"{len(record.vector)}, expected {dimension}"
                )
            norm = _norm(record.vector)
            if norm == 0.0:
                raise ValidationError(
                    f"embedding {record.sentence_id!r} has zero norm; rejected at build time"
                )
            seen.add(record.sentence_id)
            self._records.append(record)
            self._norms.append(norm)
        if not self._records:
            raise ValidationError("embedding index needs at least one record")
        self._dimension = int(dimension)  # type: ignore[arg-type]

    def __len__(self) -> int:
        return len(self._records)

    @property
    def dimension(self) -> int:
        return self._dimension

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(r.sentence_id for r in self._records)


def knn_retrieve(
    index: EmbeddingIndex, query: Sequence[float], k_d: int
) -> list[tuple[str, float]]:
    """Retrieve the k_d nearest neighbors of the query.

    Returns (id, similarity) pairs sorted by ascending similarity, most
    similar last. Ties are broken by ascending id, both when choosing which
    records make the cut and within the returned ordering.
    """
    if k_d < 0:
        raise ValidationError(f"k_d must be >= 0, got {k_d}")
    if k_d > len(index):
        raise ValidationError(f"k_d={k_d} exceeds index size {len(index)}")
    if len(query) != index.dimension:
        raise ValidationError(
            f"query dimension {len(query)} does not match index dimension {index.dimension}"
        )
    query_norm = _norm(query)
    if query_norm == 0.0:
        raise ValidationError("cosine similarity is undefined for a zero-norm vector")
    # identical arithmetic to cosine_similarity, with both norms hoisted
    scored = [
        (
            record.sentence_id,
            math.fsum(map(operator.mul, record.vector, query)) / (norm * query_norm),
        )
        for record, norm in zip(index._records, index._norms)
    ]
    scored.sort(key=lambda item: (-item[1], item[0]))
    top = scored[:k_d]
    top.sort(key=lambda item: (item[1], item[0]))
    return top


def load_embedding_file(
    path: str | Path, dimension: int | None = None
) -> dict[str, EmbeddingRecord]:
    """Load a JSON-lines embedding file, checking dimensions when given."""
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"embedding file not found: {path}")
    records: dict[str, EmbeddingRecord] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path.name}:{lineno}: invalid JSON: {exc}") from exc
            for key in ("id", "vector"):
                if key not in record:
                    raise ValidationError(f"{path.name}:{lineno}: record missing {key!r}")
            sid = record["id"]
            if sid in records:
                raise ValidationError(f"{path.name}:{lineno}: duplicate id {sid!r}")
            vector = tuple(float(x) for x in record["vector"])
            if dimension is None:
                dimension = len(vector)
            if len(vector) != dimension:
                raise ValidationError(
                    f"{path.name}:{lineno}: vector for {sid!r} has dimension "
                    f"{len(vector)}, expected {dimension}"
                )
            records[sid] = EmbeddingRecord(sentence_id=sid, vector=vector)
    return records
