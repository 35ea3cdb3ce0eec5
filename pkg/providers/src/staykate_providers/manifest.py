"""Provider manifest: encoder reference, label list, alignment policy,
embedding model and dimension, and training settings."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ProviderError

FIRST_SUBWORD = "first-subword"
MEAN_SUBWORD = "mean-subword"


@dataclass
class TrainingSettings:
    max_length: int = 350
    batch_size: int = 32
    learning_rate: float = 2e-5
    epochs: int = 20
    patience: int = 3
    seed: int = 0


@dataclass
class ProviderManifest:
    encoder: str
    labels: list[str]
    alignment: str = FIRST_SUBWORD
    embedding_model: str = "text-embedding-3-small"
    dimension: int = 1536
    training: TrainingSettings = field(default_factory=TrainingSettings)

    def __post_init__(self) -> None:
        if not self.encoder:
            raise ProviderError("manifest must name an encoder checkpoint")
        if not self.labels or len(set(self.labels)) != len(self.labels):
            raise ProviderError("manifest label list must be non-empty and unique")
        if self.alignment not in (FIRST_SUBWORD, MEAN_SUBWORD):
            raise ProviderError(
                f"alignment must be {FIRST_SUBWORD!r} or {MEAN_SUBWORD!r}, got {self.alignment!r}"
            )
        if self.dimension < 1:
            raise ProviderError("embedding dimension must be >= 1")


def load_provider_manifest(path: str | Path) -> ProviderManifest:
    path = Path(path)
    if not path.is_file():
        raise ProviderError(f"provider manifest not found: {path}")
    raw = json.loads(path.read_text(encoding="utf-8"))
    training = TrainingSettings(**raw.get("training", {}))
    return ProviderManifest(
        encoder=raw.get("encoder", ""),
        labels=list(raw.get("labels", [])),
        alignment=raw.get("alignment", FIRST_SUBWORD),
        embedding_model=raw.get("embedding_model", "text-embedding-3-small"),
        dimension=int(raw.get("dimension", 1536)),
        training=training,
    )
