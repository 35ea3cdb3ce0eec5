"""Experiment configuration: JSON schema, validation, path resolution.

Config files are JSON; relative paths are resolved against the config file's
directory so that a config can live next to its data. Example::

    {
      "dataset": {"corpus": "corpus.txt", "manifest": "manifest.json"},
      "domain": "materials science",
      "method": "staykate",
      "k": 8,
      "lambda": 0.0,
      "seeds": [1, 2, 3],
      "labeled_size": 180,
      "model_name": "gpt-3.5-turbo-16k-0613",
      "transport": "replay",
      "paths": {
        "probabilities": {"1": "probs_seed1.jsonl", "2": "probs_seed2.jsonl"},
        "embeddings": "embeddings.jsonl"
      },
      "embedding_dimension": 1536
    }

``paths.probabilities`` may be a single file (shared across seeds) or a map
from seed to file, since the probability provider is fine-tuned per labeled
pool. Experiment runs always use temperature 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ValidationError

METHODS = ("zero_shot", "random", "representative", "kate", "random_plus_kate", "staykate")
PAPER_PARITY_K = (0, 2, 6, 8)

_NEEDS_PROBABILITIES = {"representative", "staykate"}
_NEEDS_EMBEDDINGS = {"kate", "staykate", "random_plus_kate"}


@dataclass
class TestSubsample:
    size: int
    seed: int


@dataclass
class ExperimentConfig:
    corpus_path: Path
    manifest_path: Path
    domain: str
    method: str
    k: int
    lambda_: float
    seeds: list[int]
    labeled_size: int
    model_name: str
    transport: str = "replay"
    endpoint: str | None = None
    probability_paths: dict[int | None, Path] = field(default_factory=dict)
    embedding_path: Path | None = None
    embedding_dimension: int | None = None
    article_override: str | None = None
    test_subsample: TestSubsample | None = None
    allow_any_k: bool = False
    parallel: int = 1

    def probability_path_for(self, seed: int) -> Path:
        """Per-seed probability file, falling back to the shared one (key None)."""
        if seed in self.probability_paths:
            return self.probability_paths[seed]
        if None in self.probability_paths:
            return self.probability_paths[None]
        raise ValidationError(f"no probability file configured for seed {seed}")


def _resolve(base: Path, value: str) -> Path:
    path = Path(value)
    return path if path.is_absolute() else (base / path)


def load_config(path: str | Path, transport_override: str | None = None) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path.name} is not valid JSON: {exc}") from exc
    return parse_config(raw, base_dir=path.parent, transport_override=transport_override)


def parse_config(
    raw: dict, base_dir: str | Path = ".", transport_override: str | None = None
) -> ExperimentConfig:
    base = Path(base_dir)
    try:
        dataset = raw["dataset"]
        config = ExperimentConfig(
            corpus_path=_resolve(base, dataset["corpus"]),
            manifest_path=_resolve(base, dataset["manifest"]),
            domain=str(raw["domain"]),
            method=str(raw["method"]),
            k=int(raw.get("k", 0)),
            lambda_=float(raw.get("lambda", 0.0)),
            seeds=[int(s) for s in raw["seeds"]],
            labeled_size=int(raw["labeled_size"]),
            model_name=str(raw["model_name"]),
            transport=str(raw.get("transport", "replay")),
            endpoint=raw.get("endpoint"),
            article_override=raw.get("article_override"),
            allow_any_k=bool(raw.get("allow_any_k", False)),
            parallel=int(raw.get("parallel", 1)),
        )
    except KeyError as exc:
        raise ValidationError(f"config missing required key {exc.args[0]!r}") from exc

    paths = raw.get("paths", {})
    probabilities = paths.get("probabilities")
    if isinstance(probabilities, str):
        config.probability_paths = {None: _resolve(base, probabilities)}
    elif isinstance(probabilities, dict):
        config.probability_paths = {int(k): _resolve(base, v) for k, v in probabilities.items()}
    elif probabilities is not None:
        raise ValidationError("paths.probabilities must be a file path or a seed-to-path map")
    embeddings = paths.get("embeddings")
    if embeddings is not None:
        config.embedding_path = _resolve(base, embeddings)
    if "embedding_dimension" in raw:
        config.embedding_dimension = int(raw["embedding_dimension"])

    subsample = raw.get("test_subsample")
    if subsample is not None:
        config.test_subsample = TestSubsample(size=int(subsample["size"]), seed=int(subsample["seed"]))

    if transport_override is not None:
        config.transport = transport_override
    validate_config(config)
    return config


def validate_config(config: ExperimentConfig) -> None:
    if config.method not in METHODS:
        raise ValidationError(f"unknown method {config.method!r}; expected one of {METHODS}")
    if not config.domain.strip():
        raise ValidationError("domain must be non-empty")
    if not config.model_name.strip():
        raise ValidationError("model_name must be non-empty")
    if config.transport not in ("live", "replay"):
        raise ValidationError(f"transport must be 'live' or 'replay', got {config.transport!r}")
    if config.k < 0:
        raise ValidationError(f"k must be >= 0, got {config.k}")
    if config.k not in PAPER_PARITY_K and not config.allow_any_k:
        raise ValidationError(
            f"k={config.k} is outside the standard budgets {PAPER_PARITY_K}; "
            "pass --allow-any-k (or set allow_any_k) to use it"
        )
    if config.method == "zero_shot" and config.k != 0:
        raise ValidationError("zero_shot runs must use k=0")
    if config.method != "zero_shot" and config.k == 0:
        raise ValidationError(f"method {config.method!r} needs k > 0; use zero_shot for k=0")
    if config.lambda_ < 0:
        raise ValidationError(f"lambda must be >= 0, got {config.lambda_}")
    if not config.seeds:
        raise ValidationError("at least one pool seed is required")
    if len(set(config.seeds)) != len(config.seeds):
        raise ValidationError("pool seeds must be distinct")
    if config.labeled_size < 1:
        raise ValidationError("labeled_size must be >= 1")
    if config.parallel < 1:
        raise ValidationError("parallel must be >= 1")
    if config.method in _NEEDS_PROBABILITIES and not config.probability_paths:
        raise ValidationError(f"method {config.method!r} requires paths.probabilities")
    if config.method in _NEEDS_EMBEDDINGS and config.embedding_path is None:
        raise ValidationError(f"method {config.method!r} requires paths.embeddings")
    if config.test_subsample is not None and config.test_subsample.size < 1:
        raise ValidationError("test_subsample.size must be >= 1")
