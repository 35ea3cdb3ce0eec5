"""End-to-end experiment orchestration.

For each configured pool seed the runner splits the training set, selects
demonstrations per the configured method, builds one prompt per test
sentence, completes it over the chosen transport, parses and scores the
extractions, and finally averages the per-pool reports.

Data-pool discipline: dynamic (similarity-retrieved) demonstrations come from
the labeled pool; entropy-selected static demonstrations come from the
unlabeled pool (the rest of the training set) and their gold tags are only
revealed after selection, simulating expert annotation of the picks. These
constraints are asserted on every run.

All randomness derives from the pool seed through namespaced sub-seeds, so a
replayed run is bit-deterministic.
"""

from __future__ import annotations

import json
import platform
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
import random

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .corpus import (
    Dataset,
    PoolSplit,
    Sentence,
    UnlabeledPool,
    load_dataset,
    spans_from_bio,
    split_pools,
)
from .errors import PoolDisciplineError, ValidationError
from .evaluation import EvalReport, aggregate_runs, f1_scores, match_entities
from .llm import ChatRequest, ExtractionResult, Transport, parse_extraction
from .prompting import (
    DYNAMIC,
    STATIC,
    Demonstration,
    PromptBundle,
    assemble_prompt,
    build_instructions,
    build_system_role,
)
from .seeding import derive_seed
from .selection_dynamic import EmbeddingIndex, EmbeddingRecord, knn_retrieve, load_embedding_file
from .selection_static import load_probability_file, select_static

ALLOCATIONS = {0: (0, 0), 2: (1, 1), 6: (2, 4), 8: (2, 6)}


def allocate_k(k: int) -> tuple[int, int]:
    """Split a total example budget into (static, dynamic) counts.

    The standard budgets are 0 -> (0, 0), 2 -> (1, 1), 6 -> (2, 4) and
    8 -> (2, 6). Other budgets get at most 2 static examples and the rest
    dynamic, as a documented extension.
    """
    if k < 0:
        raise ValidationError(f"k must be >= 0, got {k}")
    if k in ALLOCATIONS:
        return ALLOCATIONS[k]
    k_s = min(2, k // 2)
    return k_s, k - k_s


def method_allocation(method: str, k: int) -> tuple[int, int]:
    """Static/dynamic budget for one selection method."""
    if method == "zero_shot":
        return 0, 0
    if method in ("random", "representative"):
        return k, 0
    if method == "kate":
        return 0, k
    if method in ("staykate", "random_plus_kate"):
        return allocate_k(k)
    raise ValidationError(f"unknown method {method!r}")


def random_select(pool_ids: tuple[str, ...] | list[str], k: int, seed: int) -> list[str]:
    """Uniform sample of k ids without replacement, seed-deterministic."""
    ids = sorted(pool_ids)
    if k > len(ids):
        raise ValidationError(f"k={k} exceeds pool size {len(ids)}")
    return random.Random(seed).sample(ids, k)


def environment_fingerprint() -> dict:
    return {
        "package_version": __version__,
        "python_version": platform.python_version(),
        "platform": platform.platform(),
        "numpy_version": np.__version__,
    }


@dataclass
class SentenceArtifact:
    sentence_id: str
    static_ids: tuple[str, ...]
    dynamic: tuple[tuple[str, float], ...]
    prompt_digest: str
    extraction: ExtractionResult

    def to_dict(self) -> dict:
        return {
            "id": self.sentence_id,
            "static_ids": list(self.static_ids),
            "dynamic": [{"id": i, "similarity": s} for i, s in self.dynamic],
            "prompt_digest": self.prompt_digest,
            "extraction": {
                "predicted": self.extraction.predicted,
                "parse_status": self.extraction.parse_status,
            },
        }


@dataclass
class SeedRun:
    seed: int
    split: PoolSplit
    static: list[tuple[str, float]]
    sentences: list[SentenceArtifact]
    report: EvalReport

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "labeled_ids": list(self.split.labeled_ids),
            "unlabeled_ids": list(self.split.unlabeled_ids),
            "static": [{"id": i, "rank_key": r} for i, r in self.static],
            "sentences": [s.to_dict() for s in self.sentences],
            "report": self.report.to_dict(),
        }


@dataclass
class RunArtifacts:
    config: ExperimentConfig
    dataset_name: str
    k_static: int
    k_dynamic: int
    test_ids: tuple[str, ...]
    runs: list[SeedRun]
    report: EvalReport
    fingerprint: dict = field(default_factory=environment_fingerprint)

    def report_payload(self) -> dict:
        """Stable report content; machine-varying fields stay in artifacts."""
        return {
            "dataset": self.dataset_name,
            "method": self.config.method,
            "model": self.config.model_name,
            "k": self.config.k,
            "k_static": self.k_static,
            "k_dynamic": self.k_dynamic,
            "lambda": self.config.lambda_,
            "seeds": list(self.config.seeds),
            "labeled_size": self.config.labeled_size,
            "report": self.report.to_dict(),
        }

    def to_dict(self) -> dict:
        payload = self.report_payload()
        payload["fingerprint"] = self.fingerprint
        payload["test_ids"] = list(self.test_ids)
        payload["runs"] = [r.to_dict() for r in self.runs]
        return payload


def _demo_entities(sentence: Sentence) -> dict[str, list[str]]:
    entities: dict[str, list[str]] = {}
    for span in spans_from_bio(sentence):
        entities.setdefault(span.entity_type, []).append(span.surface)
    return entities


def _static_demo(sentence: Sentence, rank_key: float) -> Demonstration:
    return Demonstration(
        text=sentence.text, entities=_demo_entities(sentence), origin=STATIC, rank_key=rank_key
    )


def _select_test_ids(dataset: Dataset, config: ExperimentConfig) -> tuple[str, ...]:
    test_ids = sorted(dataset.splits.get("test", ()))
    if not test_ids:
        raise ValidationError("dataset manifest has no test split")
    if config.test_subsample is not None:
        if config.test_subsample.size > len(test_ids):
            raise ValidationError(
                f"test_subsample.size {config.test_subsample.size} exceeds "
                f"test split size {len(test_ids)}"
            )
        rng = random.Random(derive_seed(config.test_subsample.seed, "test-subsample"))
        test_ids = sorted(rng.sample(test_ids, config.test_subsample.size))
    return tuple(test_ids)


def _static_selection(
    dataset: Dataset, config: ExperimentConfig, split: PoolSplit, k_s: int, seed: int
) -> list[tuple[Sentence, float]]:
    """Pick the static demonstrations for one pool, enforcing pool discipline."""
    if k_s == 0:
        return []
    method = config.method
    if method in ("representative", "staykate"):
        if k_s > len(split.unlabeled_ids):
            raise ValidationError(
                f"k_static={k_s} exceeds unlabeled pool size {len(split.unlabeled_ids)}"
            )
        token_counts = {sid: len(dataset.sentences[sid]) for sid in split.unlabeled_ids}
        matrices = load_probability_file(
            config.probability_path_for(seed), token_counts=token_counts
        )
        missing = [sid for sid in split.unlabeled_ids if sid not in matrices]
        if missing:
            raise ValidationError(
                f"probability file lacks records for unlabeled sentences: {missing[:5]}"
            )
        file_labels = set(matrices[split.unlabeled_ids[0]].class_labels)
        if file_labels != set(dataset.scheme.tag_classes()):
            raise ValidationError(
                "probability file class labels do not match the corpus tag classes"
            )
        pool = [matrices[sid] for sid in split.unlabeled_ids]
        selection = select_static(pool, k_s, config.lambda_)
        chosen = list(zip(selection.chosen_ids, (selection.scores[i] for i in selection.chosen_ids)))
        sentences = UnlabeledPool(
            [dataset.sentences[sid] for sid in split.unlabeled_ids]
        ).annotate([sid for sid, _ in chosen])
        return [(s, score) for s, (_, score) in zip(sentences, chosen)]
    if method == "random":
        ids = random_select(split.labeled_ids, k_s, derive_seed(seed, "random-select"))
        return [(dataset.sentences[sid], float(i)) for i, sid in enumerate(ids)]
    if method == "random_plus_kate":
        ids = random_select(split.unlabeled_ids, k_s, derive_seed(seed, "random-select"))
        sentences = UnlabeledPool(
            [dataset.sentences[sid] for sid in split.unlabeled_ids]
        ).annotate(ids)
        return [(s, float(i)) for i, s in enumerate(sentences)]
    raise ValidationError(f"method {method!r} does not use static demonstrations")


def _check_pool_discipline(
    method: str, static_ids: list[str], dynamic_ids: set[str], split: PoolSplit
) -> None:
    labeled = set(split.labeled_ids)
    if method in ("staykate", "representative", "random_plus_kate"):
        leaked = sorted(set(static_ids) & labeled)
        if leaked:
            raise PoolDisciplineError(
                f"static picks must come from the unlabeled pool; found {leaked} in the labeled pool"
            )
    if method == "random":
        outside = sorted(set(static_ids) - labeled)
        if outside:
            raise PoolDisciplineError(f"random picks must come from the labeled pool; got {outside}")
    stray = sorted(dynamic_ids - labeled)
    if stray:
        raise PoolDisciplineError(
            f"dynamic picks must come from the labeled pool; got {stray}"
        )


def _build_index(
    embeddings: dict[str, EmbeddingRecord], split: PoolSplit, dimension: int | None
) -> EmbeddingIndex:
    missing = [sid for sid in split.labeled_ids if sid not in embeddings]
    if missing:
        raise ValidationError(f"embedding file lacks records for labeled sentences: {missing[:5]}")
    return EmbeddingIndex(
        [embeddings[sid] for sid in split.labeled_ids], dimension=dimension
    )


def run_experiment(
    config: ExperimentConfig,
    transport: Transport,
    dump_prompts_dir: str | Path | None = None,
) -> RunArtifacts:
    """Run the configured experiment over every pool seed and aggregate."""
    dataset = load_dataset(config.corpus_path, config.manifest_path)
    scheme = dataset.scheme
    system_role = build_system_role(config.domain, config.article_override)
    instructions = build_instructions(scheme)
    k_s, k_d = method_allocation(config.method, config.k)
    test_ids = _select_test_ids(dataset, config)

    embeddings: dict[str, EmbeddingRecord] = {}
    if k_d:
        if config.embedding_path is None:
            raise ValidationError(f"method {config.method!r} requires an embedding file")
        embeddings = load_embedding_file(config.embedding_path, dimension=config.embedding_dimension)

    train = dataset.split_sentences("train")
    seed_runs: list[SeedRun] = []
    for seed in config.seeds:
        split = split_pools(train, config.labeled_size, derive_seed(seed, "split"), test_ids=test_ids)
        static_pairs = _static_selection(dataset, config, split, k_s, seed)
        static_demos = [_static_demo(s, score) for s, score in static_pairs]
        static_ids = [s.id for s, _ in static_pairs]

        index: EmbeddingIndex | None = None
        if k_d:
            if k_d > len(split.labeled_ids):
                raise ValidationError(
                    f"k_dynamic={k_d} exceeds labeled pool size {len(split.labeled_ids)}"
                )
            index = _build_index(embeddings, split, config.embedding_dimension)

        def process(test_id: str) -> tuple[SentenceArtifact, ExtractionResult]:
            sentence = dataset.sentences[test_id]
            dynamic_demos: list[Demonstration] = []
            neighbors: tuple[tuple[str, float], ...] = ()
            if index is not None:
                if test_id not in embeddings:
                    raise ValidationError(f"embedding file lacks a record for test sentence {test_id!r}")
                retrieved = knn_retrieve(index, embeddings[test_id].vector, k_d)
                neighbors = tuple(retrieved)
                dynamic_demos = [
                    Demonstration(
                        text=dataset.sentences[nid].text,
                        entities=_demo_entities(dataset.sentences[nid]),
                        origin=DYNAMIC,
                        rank_key=sim,
                    )
                    for nid, sim in retrieved
                ]
            bundle = assemble_prompt(
                static_demos, dynamic_demos, sentence.text, system_role, instructions,
                scheme, k_s, k_d,
            )
            request = ChatRequest(
                model_name=config.model_name,
                system=bundle.system_role,
                user=bundle.user_text(),
                temperature=0.0,
            )
            response = transport.complete(request)
            extraction = parse_extraction(response, scheme, sentence_id=test_id)
            artifact = SentenceArtifact(
                sentence_id=test_id,
                static_ids=tuple(static_ids),
                dynamic=neighbors,
                prompt_digest=bundle.digest(),
                extraction=extraction,
            )
            return artifact, extraction

        if config.parallel > 1:
            with ThreadPoolExecutor(max_workers=config.parallel) as pool:
                outcomes = list(pool.map(process, test_ids))
        else:
            outcomes = [process(tid) for tid in test_ids]

        dynamic_ids = {nid for artifact, _ in outcomes for nid, _ in artifact.dynamic}
        _check_pool_discipline(config.method, static_ids, dynamic_ids, split)

        matches = [
            match_entities(extraction, dataset.gold_spans(extraction.sentence_id))
            for _, extraction in outcomes
        ]
        report = f1_scores(matches, scheme.entity_types)
        seed_runs.append(
            SeedRun(
                seed=seed,
                split=split,
                static=[(s.id, score) for s, score in static_pairs],
                sentences=[artifact for artifact, _ in outcomes],
                report=report,
            )
        )
        if dump_prompts_dir is not None:
            _dump_prompts(
                dump_prompts_dir, seed, dataset, config, static_demos,
                embeddings, split, k_s, k_d, system_role, instructions, test_ids,
            )

    aggregate = aggregate_runs([(r.seed, r.report) for r in seed_runs])
    return RunArtifacts(
        config=config,
        dataset_name=dataset.name,
        k_static=k_s,
        k_dynamic=k_d,
        test_ids=test_ids,
        runs=seed_runs,
        report=aggregate,
    )


def build_prompts(
    config: ExperimentConfig, seed: int, dataset: Dataset | None = None
) -> list[tuple[str, PromptBundle]]:
    """Assemble every test prompt for one pool seed without calling any model.

    Returns (test sentence id, bundle) pairs in canonical id order.
    """
    dataset = dataset or load_dataset(config.corpus_path, config.manifest_path)
    scheme = dataset.scheme
    system_role = build_system_role(config.domain, config.article_override)
    instructions = build_instructions(scheme)
    k_s, k_d = method_allocation(config.method, config.k)
    test_ids = _select_test_ids(dataset, config)
    train = dataset.split_sentences("train")
    split = split_pools(train, config.labeled_size, derive_seed(seed, "split"), test_ids=test_ids)
    static_pairs = _static_selection(dataset, config, split, k_s, seed)
    static_demos = [_static_demo(s, score) for s, score in static_pairs]
    index = None
    embeddings: dict[str, EmbeddingRecord] = {}
    if k_d:
        if config.embedding_path is None:
            raise ValidationError(f"method {config.method!r} requires an embedding file")
        embeddings = load_embedding_file(config.embedding_path, dimension=config.embedding_dimension)
        index = _build_index(embeddings, split, config.embedding_dimension)
    bundles = []
    for test_id in test_ids:
        sentence = dataset.sentences[test_id]
        dynamic_demos: list[Demonstration] = []
        if index is not None:
            if test_id not in embeddings:
                raise ValidationError(f"embedding file lacks a record for test sentence {test_id!r}")
            dynamic_demos = [
                Demonstration(
                    text=dataset.sentences[nid].text,
                    entities=_demo_entities(dataset.sentences[nid]),
                    origin=DYNAMIC,
                    rank_key=sim,
                )
                for nid, sim in knn_retrieve(index, embeddings[test_id].vector, k_d)
            ]
        bundles.append(
            (
                test_id,
                assemble_prompt(
                    static_demos, dynamic_demos, sentence.text, system_role, instructions,
                    scheme, k_s, k_d,
                ),
            )
        )
    return bundles


def _dump_prompts(
    dump_dir, seed, dataset, config, static_demos, embeddings, split, k_s, k_d,
    system_role, instructions, test_ids,
) -> None:
    index = None
    if k_d:
        index = _build_index(embeddings, split, config.embedding_dimension)
    dumps = []
    for test_id in test_ids:
        sentence = dataset.sentences[test_id]
        dynamic_demos: list[Demonstration] = []
        if index is not None:
            dynamic_demos = [
                Demonstration(
                    text=dataset.sentences[nid].text,
                    entities=_demo_entities(dataset.sentences[nid]),
                    origin=DYNAMIC,
                    rank_key=sim,
                )
                for nid, sim in knn_retrieve(index, embeddings[test_id].vector, k_d)
            ]
        bundle = assemble_prompt(
            static_demos, dynamic_demos, sentence.text, system_role, instructions,
            dataset.scheme, k_s, k_d,
        )
        dumps.append({"sentence_id": test_id, **bundle.to_dict()})
    out = Path(dump_dir)
    out.mkdir(parents=True, exist_ok=True)
    text = json.dumps(dumps, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
    (out / f"prompts_seed{seed}.json").write_text(text, encoding="utf-8")


def pseudo_label(config: ExperimentConfig, transport: Transport, out_path: str | Path) -> int:
    """Generate pseudo labels for the dev split with random demonstrations.

    Requires method=random with k=6. Writes a JSON-lines file with one header
    line followed by one record per dev sentence; the file doubles as
    validation data for the probability provider. Returns the record count.
    """
    if config.method != "random" or config.k != 6:
        raise ValidationError("pseudo labeling requires method=random with k=6")
    dataset = load_dataset(config.corpus_path, config.manifest_path)
    scheme = dataset.scheme
    system_role = build_system_role(config.domain, config.article_override)
    instructions = build_instructions(scheme)
    seed = config.seeds[0]
    train = dataset.split_sentences("train")
    split = split_pools(train, config.labeled_size, derive_seed(seed, "split"))
    demo_ids = random_select(split.labeled_ids, config.k, derive_seed(seed, "random-select"))
    demos = [_static_demo(dataset.sentences[sid], float(i)) for i, sid in enumerate(demo_ids)]

    dev_ids = sorted(dataset.splits.get("dev", ()))
    header = {
        "format": "pseudo-labels",
        "dataset": dataset.name,
        "model": config.model_name,
        "method": config.method,
        "k": config.k,
        "seed": seed,
        "demonstration_ids": demo_ids,
    }
    lines = [json.dumps(header, sort_keys=True, ensure_ascii=False)]
    for dev_id in dev_ids:
        sentence = dataset.sentences[dev_id]
        bundle = assemble_prompt(
            demos, [], sentence.text, system_role, instructions, scheme, config.k, 0
        )
        request = ChatRequest(
            model_name=config.model_name,
            system=bundle.system_role,
            user=bundle.user_text(),
            temperature=0.0,
        )
        extraction = parse_extraction(transport.complete(request), scheme, sentence_id=dev_id)
        lines.append(
            json.dumps(
                {
                    "id": dev_id,
                    "text": sentence.text,
                    "entities": extraction.predicted,
                    "parse_status": extraction.parse_status,
                },
                sort_keys=True,
                ensure_ascii=False,
            )
        )
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return len(dev_ids)


def rescore_artifacts(artifacts: dict, dataset: Dataset) -> dict:
    """Recompute the evaluation report from stored extractions."""
    seed_reports = []
    for run in artifacts["runs"]:
        matches = []
        for record in run["sentences"]:
            extraction = ExtractionResult(
                sentence_id=record["id"],
                predicted=record["extraction"]["predicted"],
                parse_status=record["extraction"]["parse_status"],
            )
            matches.append(match_entities(extraction, dataset.gold_spans(record["id"])))
        seed_reports.append((run["seed"], f1_scores(matches, dataset.scheme.entity_types)))
    aggregate = aggregate_runs(seed_reports)
    return {
        "dataset": artifacts["dataset"],
        "method": artifacts["method"],
        "model": artifacts["model"],
        "k": artifacts["k"],
        "k_static": artifacts["k_static"],
        "k_dynamic": artifacts["k_dynamic"],
        "lambda": artifacts["lambda"],
        "seeds": artifacts["seeds"],
        "labeled_size": artifacts["labeled_size"],
        "report": aggregate.to_dict(),
    }
