"""Readers for the shared file formats.

The providers talk to the selection toolkit exclusively through files, so
this module re-implements the minimal corpus/manifest/splits/pseudo-label
parsing rather than importing the toolkit package.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ProviderError

SPLIT_ORDER = ("train", "dev", "test")


@dataclass(frozen=True)
class CorpusSentence:
    id: str
    tokens: tuple[str, ...]
    tags: tuple[str, ...]


@dataclass
class Corpus:
    name: str
    entity_types: tuple[str, ...]
    sentences: dict[str, CorpusSentence]
    splits: dict[str, tuple[str, ...]]

    def tag_classes(self) -> tuple[str, ...]:
        classes = ["O"]
        for etype in self.entity_types:
            classes.extend((f"B-{etype}", f"I-{etype}"))
        return tuple(classes)


def _read_groups(path: Path) -> list[tuple[list[str], list[str]]]:
    groups: list[tuple[list[str], list[str]]] = []
    tokens: list[str] = []
    tags: list[str] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                if tokens:
                    groups.append((tokens, tags))
                    tokens, tags = [], []
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise ProviderError(f"{path.name}:{lineno}: expected 'token<TAB>tag'")
            tokens.append(parts[0])
            tags.append(parts[1])
    if tokens:
        groups.append((tokens, tags))
    return groups


def read_corpus(corpus_path: str | Path, manifest_path: str | Path) -> Corpus:
    corpus_path = Path(corpus_path)
    manifest_path = Path(manifest_path)
    if not corpus_path.is_file():
        raise ProviderError(f"corpus file not found: {corpus_path}")
    if not manifest_path.is_file():
        raise ProviderError(f"manifest file not found: {manifest_path}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    entity_types = tuple(entry["type"] for entry in manifest["scheme"])
    merge: dict[str, str] = manifest.get("merge", {})

    split_ids = {s: tuple(manifest["split"].get(s, ())) for s in SPLIT_ORDER}
    ordered = [sid for s in SPLIT_ORDER for sid in split_ids[s]]
    groups = _read_groups(corpus_path)
    if len(ordered) != len(groups):
        raise ProviderError(
            f"corpus has {len(groups)} sentences but manifest lists {len(ordered)} ids"
        )
    sentences: dict[str, CorpusSentence] = {}
    for sid, (tokens, tags) in zip(ordered, groups):
        if merge:
            tags = [_merge_tag(t, merge) for t in tags]
        sentences[sid] = CorpusSentence(id=sid, tokens=tuple(tokens), tags=tuple(tags))
    return Corpus(
        name=manifest["dataset"],
        entity_types=entity_types,
        sentences=sentences,
        splits=split_ids,
    )


def _merge_tag(tag: str, merge: dict[str, str]) -> str:
    if tag == "O" or "-" not in tag:
        return tag
    prefix, etype = tag.split("-", 1)
    return f"{prefix}-{merge.get(etype, etype)}"


def read_splits(path: str | Path, seed: int) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Labeled/unlabeled pool ids for one seed, from the toolkit's splits.json."""
    path = Path(path)
    if not path.is_file():
        raise ProviderError(f"splits file not found: {path}")
    payload = json.loads(path.read_text(encoding="utf-8"))
    pools = payload.get("seeds", {}).get(str(seed))
    if pools is None:
        raise ProviderError(f"splits file has no entry for seed {seed}")
    return tuple(pools["labeled_ids"]), tuple(pools["unlabeled_ids"])


def read_pseudo_labels(path: str | Path) -> list[dict]:
    """Records from a pseudo-label file (one header line, then one per sentence)."""
    path = Path(path)
    if not path.is_file():
        raise ProviderError(f"pseudo-label file not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ProviderError(f"pseudo-label file {path.name} is empty")
    header = json.loads(lines[0])
    if header.get("format") != "pseudo-labels":
        raise ProviderError(f"{path.name} is not a pseudo-label file")
    return [json.loads(line) for line in lines[1:] if line.strip()]
