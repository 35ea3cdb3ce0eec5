"""Prompt assembly: system role, task instructions, demonstrations, test input.

The rendered prompt has four parts. Static demonstrations come first, then
dynamic ones in ascending similarity, so the most similar example is adjacent
to the test input. Demonstration answers are JSON objects listing every
entity type in the scheme, empty lists included; showing legitimate empty
outputs discourages the model from inventing entities.

Rendering is deterministic: identical inputs produce byte-identical prompts.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field

from .corpus import LabelScheme
from .errors import ValidationError

logger = logging.getLogger(__name__)

STATIC = "static"
DYNAMIC = "dynamic"

# Letters whose spoken names start with a vowel sound, for initialisms
# such as NLP ("en el pee") or MRI.
_VOWEL_NAME_LETTERS = set("AEFHILMNORSX")
_VOWELS = set("aeiou")


def _article_for(domain: str) -> str:
    first_word = domain.split()[0]
    first = first_word[0]
    if first_word.isupper() and len(first_word) > 1:
        return "an" if first in _VOWEL_NAME_LETTERS else "a"
    return "an" if first.lower() in _VOWELS else "a"


def build_system_role(domain_name: str, article_override: str | None = None) -> str:
    """Instantiate the system-role template with the correct a/an article.

    The article is chosen by a first-letter heuristic (letter-name sounds for
    all-caps initialisms); ``article_override`` forces "a" or "an" for domains
    the heuristic gets wrong.
    """
    domain = domain_name.strip()
    if not domain:
        raise ValidationError("domain name must be non-empty")
    if article_override is not None:
        if article_override not in ("a", "an"):
            raise ValidationError(f"article override must be 'a' or 'an', got {article_override!r}")
        article = article_override
    else:
        article = _article_for(domain)
    return f"You are {article} {domain} expert."


def build_instructions(scheme: LabelScheme) -> str:
    """Deterministic task instructions: description, definitions, output format."""
    lines = [
        "Your task is named entity recognition: extract every entity mention "
        "from the given sentence and assign it one of the entity types below.",
        "",
        "Entity definitions:",
    ]
    for etype in scheme.entity_types:
        lines.append(f"- {etype}: {scheme.definitions[etype]}")
    lines.extend(
        [
            "",
            "Answer with a JSON object whose keys are exactly the entity types "
            "above and whose values are lists of the entity surface strings "
            "exactly as they appear in the sentence. If the sentence contains "
            "no mention of a type, use an empty list for that type.",
        ]
    )
    return "\n".join(lines)


@dataclass(frozen=True)
class Demonstration:
    """One in-context example: a sentence and its gold entities.

    ``rank_key`` records why it was picked (representativeness score for
    static picks, similarity for dynamic ones).
    """

    text: str
    entities: dict[str, list[str]]
    origin: str
    rank_key: float

    def validate(self, scheme: LabelScheme) -> None:
        if self.origin not in (STATIC, DYNAMIC):
            raise ValidationError(f"demonstration origin must be static or dynamic, got {self.origin!r}")
        unknown = set(self.entities) - set(scheme.entity_types)
        if unknown:
            raise ValidationError(f"demonstration entity types outside the scheme: {sorted(unknown)}")
        for etype, surfaces in self.entities.items():
            for surface in surfaces:
                if surface not in self.text:
                    raise ValidationError(
                        f"surface {surface!r} ({etype}) does not occur in the demonstration text"
                    )


def render_answer(entities: dict[str, list[str]], scheme: LabelScheme) -> str:
    """JSON answer object with every scheme type present, in scheme order."""
    return json.dumps({t: entities.get(t, []) for t in scheme.entity_types}, ensure_ascii=False)


@dataclass(frozen=True)
class PromptBundle:
    """A fully rendered prompt for one test sentence."""

    system_role: str
    instructions: str
    demonstrations: tuple[Demonstration, ...]
    test_sentence: str
    k_static: int
    k_dynamic: int
    scheme: LabelScheme = field(repr=False)

    def user_text(self) -> str:
        parts = [self.instructions]
        for i, demo in enumerate(self.demonstrations, start=1):
            parts.append(
                f"Example {i}:\n"
                f"Sentence: {demo.text}\n"
                f"Answer: {render_answer(demo.entities, self.scheme)}"
            )
        parts.append(f"Sentence: {self.test_sentence}\nAnswer:")
        return "\n\n".join(parts)

    def digest(self) -> str:
        material = self.system_role + "\x00" + self.user_text()
        return hashlib.sha256(material.encode("utf-8")).hexdigest()

    def to_dict(self) -> dict:
        return {
            "system_role": self.system_role,
            "user_text": self.user_text(),
            "test_sentence": self.test_sentence,
            "k_static": self.k_static,
            "k_dynamic": self.k_dynamic,
            "demonstrations": [
                {
                    "text": d.text,
                    "entities": d.entities,
                    "origin": d.origin,
                    "rank_key": d.rank_key,
                }
                for d in self.demonstrations
            ],
            "digest": self.digest(),
        }


def assemble_prompt(
    static: list[Demonstration],
    dynamic: list[Demonstration],
    test_sentence: str,
    system_role: str,
    instructions: str,
    scheme: LabelScheme,
    k_s: int,
    k_d: int,
) -> PromptBundle:
    """Order and validate the demonstrations and wrap them in a PromptBundle.

    Static demonstrations precede dynamic ones; dynamic demonstrations must
    already be in ascending similarity order. A sentence picked by both paths
    is kept twice (logged), since no dedup rule is defined.
    """
    if len(static) != k_s:
        raise ValidationError(f"expected {k_s} static demonstrations, got {len(static)}")
    if len(dynamic) != k_d:
        raise ValidationError(f"expected {k_d} dynamic demonstrations, got {len(dynamic)}")
    for demo in static:
        if demo.origin != STATIC:
            raise ValidationError("static slot holds a demonstration with non-static origin")
        demo.validate(scheme)
    similarities = [d.rank_key for d in dynamic]
    if similarities != sorted(similarities):
        raise ValidationError("dynamic demonstrations must be in ascending similarity order")
    for demo in dynamic:
        if demo.origin != DYNAMIC:
            raise ValidationError("dynamic slot holds a demonstration with non-dynamic origin")
        demo.validate(scheme)
    static_texts = {d.text for d in static}
    for demo in dynamic:
        if demo.text in static_texts:
            logger.info("demonstration selected by both paths, kept twice: %r", demo.text[:60])
    return PromptBundle(
        system_role=system_role,
        instructions=instructions,
        demonstrations=tuple(static) + tuple(dynamic),
        test_sentence=test_sentence,
        k_static=k_s,
        k_dynamic=k_d,
        scheme=scheme,
    )
