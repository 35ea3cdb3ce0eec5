"""Command-line interface.

Subcommands: split, select-static, select-dynamic, build-prompts, run,
score, pseudo-label, errors, diagnose. Exit codes: 0 success, 2 validation
error, 3 replay cache miss.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ExperimentConfig, load_config
from .corpus import load_dataset, non_entity_ratio, split_pools
from .errors import ReplayCacheMiss, StaykateError, ValidationError
from .evaluation import render_table, write_report_json
from .llm import LiveTransport, ReplayTransport, ResponseCache, Transport
from .pipeline import (
    build_prompts,
    method_allocation,
    pseudo_label,
    rescore_artifacts,
    run_experiment,
)
from .seeding import derive_seed
from .selection_dynamic import knn_retrieve, load_embedding_file, EmbeddingIndex
from .selection_static import load_probability_file, select_static

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CACHE_MISS = 3

logger = logging.getLogger(__name__)


def _add_common(parser: argparse.ArgumentParser, config_required: bool = True) -> None:
    parser.add_argument("--config", required=config_required, help="experiment config JSON")
    parser.add_argument("--cache", default="responses.jsonl", help="response cache file")
    mode = parser.add_mutually_exclusive_group()
    mode.add_argument("--replay", dest="transport", action="store_const", const="replay",
                      help="serve responses from the cache only (no network)")
    mode.add_argument("--live", dest="transport", action="store_const", const="live",
                      help="call the live endpoint and record responses")
    parser.set_defaults(transport=None)
    parser.add_argument("--report-dir", default="reports", help="output directory")
    parser.add_argument("--dump-prompts", action="store_true", help="write prompt dumps to the report dir")
    parser.add_argument("--allow-any-k", action="store_true", help="permit k outside {0,2,6,8}")
    parser.add_argument("--parallel", type=int, default=None, metavar="N",
                        help="process N test sentences concurrently (default: config value)")


def _load(args: argparse.Namespace) -> ExperimentConfig:
    config = load_config(args.config, transport_override=args.transport)
    if getattr(args, "allow_any_k", False):
        config.allow_any_k = True
    parallel = getattr(args, "parallel", None)
    if parallel is not None:
        if parallel < 1:
            raise ValidationError("--parallel must be >= 1")
        config.parallel = parallel
    return config


def _transport(config: ExperimentConfig, cache_path: str) -> Transport:
    cache = ResponseCache(cache_path)
    if config.transport == "replay":
        return ReplayTransport(cache)
    if not config.endpoint:
        raise ValidationError("live mode requires an 'endpoint' URL in the config")
    return LiveTransport(endpoint=config.endpoint, cache=cache)


def _write_json(payload, path: Path) -> None:
    write_report_json(payload, path)
    print(f"wrote {path}")


def _cmd_split(args: argparse.Namespace) -> int:
    config = _load(args)
    dataset = load_dataset(config.corpus_path, config.manifest_path)
    train = dataset.split_sentences("train")
    test_ids = sorted(dataset.splits.get("test", ()))
    payload = {"dataset": dataset.name, "labeled_size": config.labeled_size, "seeds": {}}
    for seed in config.seeds:
        split = split_pools(train, config.labeled_size, derive_seed(seed, "split"), tuple(test_ids))
        payload["seeds"][str(seed)] = {
            "labeled_ids": list(split.labeled_ids),
            "unlabeled_ids": list(split.unlabeled_ids),
            "test_ids": list(split.test_ids),
        }
    _write_json(payload, Path(args.report_dir) / "splits.json")
    return EXIT_OK


def _cmd_select_static(args: argparse.Namespace) -> int:
    config = _load(args)
    dataset = load_dataset(config.corpus_path, config.manifest_path)
    train = dataset.split_sentences("train")
    k_s, _ = method_allocation(config.method, config.k)
    if k_s == 0:
        raise ValidationError(f"method {config.method!r} with k={config.k} selects no static examples")
    payload = {"dataset": dataset.name, "lambda": config.lambda_, "k_static": k_s, "seeds": {}}
    for seed in config.seeds:
        split = split_pools(train, config.labeled_size, derive_seed(seed, "split"))
        token_counts = {sid: len(dataset.sentences[sid]) for sid in split.unlabeled_ids}
        matrices = load_probability_file(config.probability_path_for(seed), token_counts=token_counts)
        missing = [sid for sid in split.unlabeled_ids if sid not in matrices]
        if missing:
            raise ValidationError(f"probability file lacks records for: {missing[:5]}")
        selection = select_static([matrices[sid] for sid in split.unlabeled_ids], k_s, config.lambda_)
        payload["seeds"][str(seed)] = {
            "chosen": [{"id": sid, "score": selection.scores[sid]} for sid in selection.chosen_ids],
        }
    _write_json(payload, Path(args.report_dir) / "static_selection.json")
    return EXIT_OK


def _cmd_select_dynamic(args: argparse.Namespace) -> int:
    config = _load(args)
    dataset = load_dataset(config.corpus_path, config.manifest_path)
    train = dataset.split_sentences("train")
    _, k_d = method_allocation(config.method, config.k)
    if k_d == 0:
        raise ValidationError(f"method {config.method!r} with k={config.k} retrieves no dynamic examples")
    if config.embedding_path is None:
        raise ValidationError("select-dynamic requires paths.embeddings in the config")
    embeddings = load_embedding_file(config.embedding_path, dimension=config.embedding_dimension)
    test_ids = sorted(dataset.splits.get("test", ()))
    payload = {"dataset": dataset.name, "k_dynamic": k_d, "seeds": {}}
    for seed in config.seeds:
        split = split_pools(train, config.labeled_size, derive_seed(seed, "split"))
        missing = [sid for sid in split.labeled_ids if sid not in embeddings]
        if missing:
            raise ValidationError(f"embedding file lacks records for: {missing[:5]}")
        index = EmbeddingIndex(
            [embeddings[sid] for sid in split.labeled_ids], dimension=config.embedding_dimension
        )
        per_test = {}
        for tid in test_ids:
            if tid not in embeddings:
                raise ValidationError(f"embedding file lacks a record for test sentence {tid!r}")
            neighbors = knn_retrieve(index, embeddings[tid].vector, k_d)
            per_test[tid] = [{"id": nid, "similarity": sim} for nid, sim in neighbors]
        payload["seeds"][str(seed)] = per_test
    _write_json(payload, Path(args.report_dir) / "dynamic_selection.json")
    return EXIT_OK


def _cmd_build_prompts(args: argparse.Namespace) -> int:
    config = _load(args)
    out = Path(args.report_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset = load_dataset(config.corpus_path, config.manifest_path)
    for seed in config.seeds:
        dumps = [
            {"sentence_id": tid, **bundle.to_dict()}
            for tid, bundle in build_prompts(config, seed, dataset=dataset)
        ]
        path = out / f"prompts_seed{seed}.json"
        write_report_json(dumps, path)
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_run(args: argparse.Namespace) -> int:
    config = _load(args)
    transport = _transport(config, args.cache)
    dump_dir = Path(args.report_dir) if args.dump_prompts else None
    artifacts = run_experiment(config, transport, dump_prompts_dir=dump_dir)
    out = Path(args.report_dir)
    _write_json(artifacts.report_payload(), out / "report.json")
    _write_json(artifacts.to_dict(), out / "artifacts.json")
    print(render_table(artifacts.report))
    return EXIT_OK


def _cmd_score(args: argparse.Namespace) -> int:
    config = _load(args)
    artifacts_path = Path(args.artifacts)
    if not artifacts_path.is_file():
        raise ValidationError(f"artifacts file not found: {artifacts_path}")
    artifacts = json.loads(artifacts_path.read_text(encoding="utf-8"))
    dataset = load_dataset(config.corpus_path, config.manifest_path)
    payload = rescore_artifacts(artifacts, dataset)
    _write_json(payload, Path(args.report_dir) / "report.json")
    return EXIT_OK


def _cmd_pseudo_label(args: argparse.Namespace) -> int:
    config = _load(args)
    transport = _transport(config, args.cache)
    count = pseudo_label(config, transport, args.out)
    print(f"wrote {count} pseudo-labeled sentences to {args.out}")
    return EXIT_OK


def _cmd_errors(args: argparse.Namespace) -> int:
    rows = []
    for report_path in args.reports:
        path = Path(report_path)
        if not path.is_file():
            raise ValidationError(f"report file not found: {path}")
        payload = json.loads(path.read_text(encoding="utf-8"))
        errors = payload.get("report", payload).get("errors")
        if errors is None:
            raise ValidationError(f"{path} does not look like a run report (no errors block)")
        rows.append((payload.get("method", path.stem), errors))
    headers = ("method", "overpredicting", "oversight", "wrong_type")
    print("  ".join(h.ljust(16) for h in headers))
    for method, errors in rows:
        print(
            "  ".join(
                str(cell).ljust(16)
                for cell in (
                    method,
                    f"{errors['overpredicting']} ({errors['overpredicting_rate']:.3f})",
                    f"{errors['oversight']} ({errors['oversight_rate']:.3f})",
                    f"{errors['wrong_type']} ({errors['wrong_type_rate']:.3f})",
                )
            )
        )
    return EXIT_OK


def _cmd_diagnose(args: argparse.Namespace) -> int:
    dataset = load_dataset(args.corpus, args.manifest)
    for split in ("train", "dev", "test"):
        ids = dataset.splits.get(split, ())
        if not ids:
            continue
        report = non_entity_ratio([dataset.sentences[i] for i in ids])
        print(
            f"{split}: sentences={report.sentence_count} avg_tokens={report.avg_tokens:.2f} "
            f"avg_non_entity={report.avg_non_entity_tokens:.2f} non_entity_ratio={report.ratio:.4f}"
        )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="staykate",
        description="Hybrid static/dynamic in-context example selection for scientific NER",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn, help_text in (
        ("split", _cmd_split, "compute labeled/unlabeled pool splits per seed"),
        ("select-static", _cmd_select_static, "entropy-based static example selection"),
        ("select-dynamic", _cmd_select_dynamic, "similarity retrieval per test sentence"),
        ("build-prompts", _cmd_build_prompts, "assemble prompts without calling a model"),
        ("run", _cmd_run, "run the full experiment and write report + artifacts"),
        ("pseudo-label", _cmd_pseudo_label, "generate pseudo labels for the dev split"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        if name == "pseudo-label":
            p.add_argument("--out", required=True, help="output pseudo-label file")
        p.set_defaults(fn=fn)

    p = sub.add_parser("score", help="recompute the report from stored artifacts")
    _add_common(p)
    p.add_argument("--artifacts", required=True, help="artifacts.json from a previous run")
    p.set_defaults(fn=_cmd_score)

    p = sub.add_parser("errors", help="compare error taxonomies across run reports")
    p.add_argument("reports", nargs="+", help="report.json files")
    p.set_defaults(fn=_cmd_errors)

    p = sub.add_parser("diagnose", help="corpus diagnostics: non-entity token ratio")
    p.add_argument("--corpus", required=True)
    p.add_argument("--manifest", required=True)
    p.set_defaults(fn=_cmd_diagnose)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ReplayCacheMiss as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CACHE_MISS
    except (ValidationError, StaykateError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
