"""BIO-tagged corpus loading, span derivation, pool splitting, diagnostics.

Corpus file format: UTF-8 text, one ``token<TAB>tag`` per line, blank line
between sentences. A sidecar manifest JSON carries the dataset name, the
label scheme, and the split id lists::

    {"dataset": str,
     "scheme": [{"type": str, "definition": str}, ...],
     "split": {"train": [ids], "dev": [ids], "test": [ids]},
     "merge": {"SourceType": "TargetType", ...}}          # optional

Sentence ids are assigned positionally: the manifest's split id lists,
concatenated in train/dev/test order, enumerate the sentences in file order.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ValidationError

logger = logging.getLogger(__name__)

SPLIT_ORDER = ("train", "dev", "test")


@dataclass(frozen=True)
class Token:
    text: str
    index: int


@dataclass(frozen=True)
class Sentence:
    """A pre-tokenized sentence, optionally carrying gold BIO tags."""

    id: str
    tokens: tuple[Token, ...]
    bio_tags: tuple[str, ...] | None = None

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def text(self) -> str:
        return " ".join(t.text for t in self.tokens)

    def without_tags(self) -> "Sentence":
        return Sentence(id=self.id, tokens=self.tokens, bio_tags=None)


@dataclass(frozen=True)
class EntitySpan:
    """A typed entity occupying tokens [start, end) of a sentence."""

    sentence_id: str
    start: int
    end: int
    entity_type: str
    surface: str


@dataclass(frozen=True)
class LabelScheme:
    """Ordered entity types with one-line definitions."""

    entity_types: tuple[str, ...]
    definitions: dict[str, str]

    def __post_init__(self) -> None:
        if not self.entity_types:
            raise ValidationError("label scheme must define at least one entity type")
        if len(set(self.entity_types)) != len(self.entity_types):
            raise ValidationError("label scheme entity types must be unique")
        for etype in self.entity_types:
            if not self.definitions.get(etype, "").strip():
                raise ValidationError(f"missing or empty definition for entity type {etype!r}")

    def tag_classes(self) -> tuple[str, ...]:
        """BIO tag class names in canonical order: O first, then B/I per type."""
        classes = ["O"]
        for etype in self.entity_types:
            classes.extend((f"B-{etype}", f"I-{etype}"))
        return tuple(classes)


@dataclass(frozen=True)
class PoolSplit:
    """Disjoint labeled/unlabeled/test id sets for one pool seed."""

    labeled_ids: tuple[str, ...]
    unlabeled_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    seed: int


@dataclass
class NonEntityReport:
    """Corpus-level diagnostic: how much of the text carries no entity."""

    ratio: float
    avg_tokens: float
    avg_non_entity_tokens: float
    sentence_count: int


def _parse_tag(tag: str) -> tuple[str, str | None]:
    if tag == "O":
        return "O", None
    if len(tag) > 2 and tag[1] == "-" and tag[0] in ("B", "I"):
        return tag[0], tag[2:]
    raise ValidationError(f"malformed BIO tag {tag!r}")


def validate_bio(tags: list[str], scheme: LabelScheme) -> tuple[list[str], int]:
    """Validate a tag sequence against the scheme, repairing orphan I- tags.

    An ``I-<type>`` that follows "O", the sentence start, or a different type
    is promoted to ``B-<type>``. Returns the repaired sequence and the number
    of repairs. Unknown entity types are a hard error.
    """
    repaired: list[str] = []
    repairs = 0
    prev_type: str | None = None
    for tag in tags:
        prefix, etype = _parse_tag(tag)
        if etype is not None and etype not in scheme.entity_types:
            raise ValidationError(f"unknown entity type {etype!r} in tag {tag!r}")
        if prefix == "I" and etype != prev_type:
            prefix = "B"
            repairs += 1
        repaired.append("O" if prefix == "O" else f"{prefix}-{etype}")
        prev_type = etype
    return repaired, repairs


def load_corpus(
    path: str | Path,
    scheme: LabelScheme,
    ids: list[str] | None = None,
) -> list[Sentence]:
    """Load and validate a token/tag corpus file.

    BIO violations are repaired (orphan I- promoted to B-) and logged as
    warnings. When ``ids`` is omitted, sentences get sequential ids s000001,
    s000002, ...
    """
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"corpus file not found: {path}")
    groups = _read_token_tag_groups(path)
    if ids is not None and len(ids) != len(groups):
        raise ValidationError(
            f"corpus has {len(groups)} sentences but {len(ids)} ids were supplied"
        )
    sentences: list[Sentence] = []
    total_repairs = 0
    for i, (tokens, tags) in enumerate(groups):
        sid = ids[i] if ids is not None else f"s{i + 1:06d}"
        repaired, repairs = validate_bio(tags, scheme)
        if repairs:
            logger.warning("sentence %s: repaired %d orphan I- tag(s)", sid, repairs)
            total_repairs += repairs
        sentences.append(
            Sentence(
                id=sid,
                tokens=tuple(Token(text=t, index=j) for j, t in enumerate(tokens)),
                bio_tags=tuple(repaired),
            )
        )
    if total_repairs:
        logger.warning("corpus %s: %d BIO repair(s) in total", path.name, total_repairs)
    return sentences


def _read_token_tag_groups(path: Path) -> list[tuple[list[str], list[str]]]:
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
                raise ValidationError(
                    f"{path.name}:{lineno}: expected 'token<TAB>tag', got {line!r}"
                )
            tokens.append(parts[0])
            tags.append(parts[1])
    if tokens:
        groups.append((tokens, tags))
    return groups


def spans_from_bio(sentence: Sentence) -> list[EntitySpan]:
    """Derive entity spans from a validated BIO tag sequence.

    Maximal contiguous B/I runs of one type become spans, ordered by start.
    """
    if sentence.bio_tags is None:
        raise ValidationError(f"sentence {sentence.id} has no BIO tags")
    spans: list[EntitySpan] = []
    start: int | None = None
    current: str | None = None
    tags = sentence.bio_tags

    def close(end: int) -> None:
        nonlocal start, current
        if start is not None and current is not None:
            surface = " ".join(t.text for t in sentence.tokens[start:end])
            spans.append(
                EntitySpan(
                    sentence_id=sentence.id,
                    start=start,
                    end=end,
                    entity_type=current,
                    surface=surface,
                )
            )
        start, current = None, None

    for i, tag in enumerate(tags):
        prefix, etype = _parse_tag(tag)
        if prefix == "B":
            close(i)
            start, current = i, etype
        elif prefix == "O":
            close(i)
        # I- continues the open run; load-time validation guarantees the type matches
    close(len(tags))
    return spans


def bio_from_spans(spans: list[EntitySpan], length: int) -> list[str]:
    """Serialize non-overlapping spans back into a BIO tag sequence."""
    tags = ["O"] * length
    for span in spans:
        if not 0 <= span.start < span.end <= length:
            raise ValidationError(f"span ({span.start}, {span.end}) out of range for length {length}")
        tags[span.start] = f"B-{span.entity_type}"
        for i in range(span.start + 1, span.end):
            tags[i] = f"I-{span.entity_type}"
    return tags


def split_pools(
    sentences: list[Sentence],
    labeled_size: int,
    seed: int,
    test_ids: tuple[str, ...] = (),
) -> PoolSplit:
    """Partition the training sentences into labeled and unlabeled pools.

    The labeled pool is a uniform sample of ``labeled_size`` sentences without
    replacement; the rest form the unlabeled pool. Deterministic for a fixed
    seed. Both id tuples are returned in ascending id order.
    """
    ids = sorted(s.id for s in sentences)
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate sentence ids in training set")
    if labeled_size > len(ids):
        raise ValidationError(
            f"labeled_size {labeled_size} exceeds training set size {len(ids)}"
        )
    rng = random.Random(seed)
    labeled = set(rng.sample(ids, labeled_size))
    return PoolSplit(
        labeled_ids=tuple(i for i in ids if i in labeled),
        unlabeled_ids=tuple(i for i in ids if i not in labeled),
        test_ids=tuple(test_ids),
        seed=seed,
    )


class UnlabeledPool:
    """Unlabeled candidates whose gold tags are hidden from the selection path.

    Selection sees tag-stripped sentences only; ``annotate`` reveals the gold
    tags for the chosen ids, simulating expert annotation of the picks.
    """

    def __init__(self, sentences: list[Sentence]):
        self._gold = {s.id: s for s in sentences}

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(self._gold)

    def sentences(self) -> list[Sentence]:
        return [s.without_tags() for s in self._gold.values()]

    def annotate(self, ids: list[str] | tuple[str, ...]) -> list[Sentence]:
        missing = [i for i in ids if i not in self._gold]
        if missing:
            raise ValidationError(f"ids not in unlabeled pool: {missing}")
        return [self._gold[i] for i in ids]


def non_entity_ratio(sentences: list[Sentence]) -> NonEntityReport:
    """Fraction of tokens tagged O, plus average token counts per sentence."""
    if not sentences:
        raise ValidationError("non_entity_ratio requires at least one sentence")
    total_tokens = 0
    total_o = 0
    for sentence in sentences:
        if sentence.bio_tags is None:
            raise ValidationError(f"sentence {sentence.id} has no BIO tags")
        total_tokens += len(sentence.tokens)
        total_o += sum(1 for t in sentence.bio_tags if t == "O")
    n = len(sentences)
    return NonEntityReport(
        ratio=total_o / total_tokens,
        avg_tokens=total_tokens / n,
        avg_non_entity_tokens=total_o / n,
        sentence_count=n,
    )


@dataclass
class Dataset:
    """A corpus plus its manifest: scheme, named splits, stable ids."""

    name: str
    scheme: LabelScheme
    sentences: dict[str, Sentence] = field(default_factory=dict)
    splits: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def split_sentences(self, split: str) -> list[Sentence]:
        try:
            ids = self.splits[split]
        except KeyError:
            raise ValidationError(f"dataset has no {split!r} split") from None
        return [self.sentences[i] for i in ids]

    def gold_spans(self, sentence_id: str) -> list[EntitySpan]:
        return spans_from_bio(self.sentences[sentence_id])


def load_manifest(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"manifest file not found: {path}")
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"manifest {path.name} is not valid JSON: {exc}") from exc
    for key in ("dataset", "scheme", "split"):
        if key not in manifest:
            raise ValidationError(f"manifest {path.name} missing key {key!r}")
    return manifest


def scheme_from_manifest(manifest: dict) -> LabelScheme:
    entries = manifest["scheme"]
    return LabelScheme(
        entity_types=tuple(e["type"] for e in entries),
        definitions={e["type"]: e["definition"] for e in entries},
    )


def load_dataset(corpus_path: str | Path, manifest_path: str | Path) -> Dataset:
    """Load a corpus file together with its manifest.

    The manifest's split id lists, concatenated in train/dev/test order,
    assign ids to the sentences in file order. An optional ``merge`` map in
    the manifest renames entity types in the tags before validation.
    """
    manifest = load_manifest(manifest_path)
    scheme = scheme_from_manifest(manifest)
    split_ids: dict[str, tuple[str, ...]] = {}
    ordered_ids: list[str] = []
    for split in SPLIT_ORDER:
        ids = tuple(manifest["split"].get(split, ()))
        split_ids[split] = ids
        ordered_ids.extend(ids)
    if len(set(ordered_ids)) != len(ordered_ids):
        raise ValidationError("manifest split id lists overlap or contain duplicates")

    merge: dict[str, str] = manifest.get("merge", {})
    sentences = _load_with_merge(Path(corpus_path), scheme, ordered_ids, merge)
    return Dataset(
        name=manifest["dataset"],
        scheme=scheme,
        sentences={s.id: s for s in sentences},
        splits=split_ids,
    )


def _load_with_merge(
    path: Path, scheme: LabelScheme, ids: list[str], merge: dict[str, str]
) -> list[Sentence]:
    if not merge:
        return load_corpus(path, scheme, ids=ids)
    groups = _read_token_tag_groups(path)
    if len(ids) != len(groups):
        raise ValidationError(
            f"corpus has {len(groups)} sentences but manifest lists {len(ids)} ids"
        )
    sentences = []
    for sid, (tokens, tags) in zip(ids, groups):
        merged = []
        for tag in tags:
            prefix, etype = _parse_tag(tag)
            if etype is not None and etype in merge:
                tag = f"{prefix}-{merge[etype]}"
            merged.append(tag)
        repaired, repairs = validate_bio(merged, scheme)
        if repairs:
            logger.warning("sentence %s: repaired %d orphan I- tag(s)", sid, repairs)
        sentences.append(
            Sentence(
                id=sid,
                tokens=tuple(Token(text=t, index=j) for j, t in enumerate(tokens)),
                bio_tags=tuple(repaired),
            )
        )
    return sentences
