#!/usr/bin/env python3
"""Regenerate the bundled synthetic mini-corpus fixtures under tests/data/mini.

The fixture set contains a hand-tagged 48-sentence corpus (30 train / 8 dev /
10 test, three entity types), bag-of-token embeddings, per-seed probability
files, per-method experiment configs, a recorded response cache produced
against a deterministic local stub endpoint, and golden replay reports.

Run from the repository root:

    python3 scripts/make_mini_fixtures.py

The stub endpoint answers with the gold entities of the test sentence,
deterministically perturbed by a hash of the prompt, so the replayed reports
exercise every error bucket and parse status while staying bit-reproducible.
"""

from __future__ import annotations

import hashlib
import json
import random
import shutil
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT))
sys.path.insert(0, str(ROOT / "src"))

from staykate.config import load_config  # noqa: E402
from staykate.corpus import load_dataset, spans_from_bio, split_pools  # noqa: E402
from staykate.evaluation import write_report_json  # noqa: E402
from staykate.llm import LiveTransport, ReplayTransport, ResponseCache  # noqa: E402
from staykate.pipeline import build_prompts, pseudo_label, run_experiment  # noqa: E402
from staykate.seeding import derive_seed  # noqa: E402

from tests.stub_server import StubChatServer  # noqa: E402

MINI = ROOT / "tests" / "data" / "mini"
SEEDS = (1, 2, 3)
LABELED_SIZE = 15
EMBED_DIM = 16

# token|tag markup, one string per sentence
RAW = {
    "train": [
        "Dissolve|B-Operation 5|O g|O of|O NaCl|B-Material in|O deionized|B-Material water|I-Material .|O",
        "The|O mixture|O was|O stirred|B-Operation for|O 30|O minutes|O at|O room|O temperature|O .|O",
        "The|O resulting|O white|B-Property powder|I-Property was|O dried|B-Operation overnight|O .|O",
        "Zinc|B-Material oxide|I-Material nanoparticles|O were|O synthesized|B-Operation by|O precipitation|O .|O",
        "The|O solution|B-Material was|O heated|B-Operation to|O 90|O C|O .|O",
        "Ethanol|B-Material was|O added|B-Operation dropwise|O to|O the|O suspension|B-Material .|O",
        "The|O sample|O showed|O a|O crystalline|B-Property structure|O after|O annealing|B-Operation .|O",
        "Copper|B-Material sulfate|I-Material was|O dissolved|B-Operation in|O distilled|B-Material water|I-Material .|O",
        "The|O gel|B-Material was|O aged|B-Operation for|O 24|O hours|O .|O",
        "Titanium|B-Material dioxide|I-Material was|O calcined|B-Operation at|O 500|O C|O .|O",
        "The|O product|O was|O washed|B-Operation with|O acetone|B-Material three|O times|O .|O",
        "A|O transparent|B-Property film|O was|O obtained|O after|O spin|B-Operation coating|I-Operation .|O",
        "Silver|B-Material nitrate|I-Material solution|B-Material was|O kept|O in|O the|O dark|O .|O",
        "The|O precipitate|B-Material was|O collected|O by|O centrifugation|B-Operation .|O",
        "Sodium|B-Material hydroxide|I-Material pellets|O were|O weighed|B-Operation carefully|O .|O",
        "The|O slurry|B-Material appeared|O highly|B-Property viscous|I-Property after|O mixing|B-Operation .|O",
        "Graphene|B-Material oxide|I-Material sheets|O were|O sonicated|B-Operation in|O water|B-Material .|O",
        "The|O reaction|O completed|O within|O two|O hours|O .|O",
        "Iron|B-Material powder|I-Material was|O sintered|B-Operation under|O argon|B-Material flow|O .|O",
        "The|O final|O material|O exhibited|O a|O pale|B-Property yellow|I-Property color|O .|O",
        "PMMA|B-Material was|O dissolved|B-Operation in|O chloroform|B-Material .|O",
        "The|O furnace|O was|O cooled|B-Operation to|O ambient|O temperature|O .|O",
        "Quartz|B-Material sand|I-Material was|O sieved|B-Operation before|O use|O .|O",
        "An|O amorphous|B-Property phase|O formed|O during|O quenching|B-Operation .|O",
        "The|O mixture|O became|O homogeneous|B-Property after|O vigorous|O stirring|B-Operation .|O",
        "Sulfuric|B-Material acid|I-Material was|O diluted|B-Operation slowly|O .|O",
        "Measurements|O were|O repeated|O three|O times|O for|O accuracy|O .|O",
        "The|O powder|B-Material was|O ground|B-Operation in|O an|O agate|B-Material mortar|O .|O",
        "Hydrochloric|B-Material acid|I-Material vapor|O etched|B-Operation the|O surface|O .|O",
        "The|O porous|B-Property membrane|O allowed|O rapid|O filtration|B-Operation .|O",
    ],
    "dev": [
        "The|O filtrate|B-Material was|O evaporated|B-Operation under|O vacuum|O .|O",
        "Potassium|B-Material chloride|I-Material crystals|O were|O collected|B-Operation .|O",
        "The|O coating|O looked|O uniform|B-Property and|O smooth|B-Property .|O",
        "Samples|O were|O stored|B-Operation in|O a|O desiccator|O .|O",
        "Acetone|B-Material rinsing|B-Operation removed|O residual|O monomer|B-Material .|O",
        "No|O further|O purification|O was|O required|O .|O",
        "The|O suspension|B-Material turned|O cloudy|B-Property upon|O cooling|B-Operation .|O",
        "Nickel|B-Material foam|I-Material served|O as|O the|O substrate|O .|O",
    ],
    "test": [
        "Dissolve|B-Operation KCl|B-Material in|O deionized|B-Material water|I-Material .|O",
        "The|O solution|B-Material was|O stirred|B-Operation until|O homogeneous|B-Property .|O",
        "Zinc|B-Material oxide|I-Material powder|B-Material was|O annealed|B-Operation at|O 400|O C|O .|O",
        "The|O product|O was|O washed|B-Operation with|O ethanol|B-Material .|O",
        "A|O white|B-Property precipitate|B-Material formed|O immediately|O .|O",
        "The|O data|O were|O recorded|O at|O room|O temperature|O .|O",
        "Silver|B-Material nanoparticles|O were|O synthesized|B-Operation by|O reduction|O .|O",
        "The|O film|O appeared|O transparent|B-Property and|O crystalline|B-Property .|O",
        "Sulfuric|B-Material acid|I-Material was|O added|B-Operation dropwise|O .|O",
        "The|O resulting|O gel|B-Material was|O dried|B-Operation at|O 60|O C|O .|O",
    ],
}

SCHEME = [
    {"type": "Material", "definition": "a substance that is used or produced in a procedure"},
    {"type": "Operation", "definition": "an action performed on one or more materials"},
    {"type": "Property", "definition": "a descriptor of the state or characteristics of a material"},
]

METHOD_CONFIGS = {
    "zero_shot": {"method": "zero_shot", "k": 0},
    "random": {"method": "random", "k": 2},
    "representative": {"method": "representative", "k": 2, "lambda": 0.0, "probs": True},
    "kate": {"method": "kate", "k": 2, "embeddings": True},
    "random_plus_kate": {"method": "random_plus_kate", "k": 2, "embeddings": True},
    "staykate": {"method": "staykate", "k": 2, "lambda": 0.0, "probs": True, "embeddings": True},
    "staykate_k8": {"method": "staykate", "k": 8, "lambda": 0.0, "probs": True, "embeddings": True},
}


def parse_markup(line):
    tokens, tags = [], []
    for piece in line.split():
        token, _, tag = piece.rpartition("|")
        tokens.append(token)
        tags.append(tag)
    return tokens, tags


def write_corpus_and_manifest():
    ids = {split: [f"{split}-{i + 1:02d}" for i in range(len(RAW[split]))] for split in RAW}
    blocks = []
    texts = set()
    for split in ("train", "dev", "test"):
        for line in RAW[split]:
            tokens, tags = parse_markup(line)
            text = " ".join(tokens)
            assert text not in texts, f"duplicate sentence text: {text}"
            texts.add(text)
            blocks.append("\n".join(f"{tok}\t{tag}" for tok, tag in zip(tokens, tags)))
    (MINI / "corpus.txt").write_text("\n\n".join(blocks) + "\n", encoding="utf-8")
    manifest = {"dataset": "mini-synth", "scheme": SCHEME, "split": ids}
    (MINI / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def token_bucket_vector(tokens):
    v = [0.0] * EMBED_DIM
    for token in tokens:
        digest = hashlib.sha256(token.lower().encode("utf-8")).digest()
        v[int.from_bytes(digest[:4], "big") % EMBED_DIM] += 1.0
    return v


def write_embeddings(dataset):
    lines = []
    for sid in dataset.sentences:
        vector = token_bucket_vector([t.text for t in dataset.sentences[sid].tokens])
        lines.append(json.dumps({"id": sid, "vector": vector}))
    (MINI / "embeddings.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_probability_files(dataset):
    classes = list(dataset.scheme.tag_classes())
    train = dataset.split_sentences("train")
    for seed in SEEDS:
        split = split_pools(train, LABELED_SIZE, derive_seed(seed, "split"))
        lines = [json.dumps({"class_labels": classes})]
        for sid in split.unlabeled_ids:
            sentence = dataset.sentences[sid]
            rows = []
            for i, tag in enumerate(sentence.bio_tags):
                rng = random.Random(f"{seed}:{sid}:{i}")
                conf = 0.35 + 0.64 * rng.random()
                rest = (1.0 - conf) / (len(classes) - 1)
                row = [rest] * len(classes)
                row[classes.index(tag)] = conf
                rows.append(row)
            lines.append(json.dumps({"id": sid, "labels": classes, "probs": rows}))
        (MINI / f"probs_seed{seed}.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_configs():
    configs_dir = MINI / "configs"
    configs_dir.mkdir(exist_ok=True)
    for name, spec in METHOD_CONFIGS.items():
        config = {
            "dataset": {"corpus": "../corpus.txt", "manifest": "../manifest.json"},
            "domain": "materials science",
            "method": spec["method"],
            "k": spec["k"],
            "lambda": spec.get("lambda", 0.0),
            "seeds": list(SEEDS),
            "labeled_size": LABELED_SIZE,
            "model_name": "stub-chat",
            "transport": "replay",
        }
        paths = {}
        if spec.get("probs"):
            paths["probabilities"] = {str(s): f"../probs_seed{s}.jsonl" for s in SEEDS}
        if spec.get("embeddings"):
            paths["embeddings"] = "../embeddings.jsonl"
        if paths:
            config["paths"] = paths
        if spec.get("embeddings"):
            config["embedding_dimension"] = EMBED_DIM
        (configs_dir / f"{name}.json").write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")
    pseudo = {
        "dataset": {"corpus": "../corpus.txt", "manifest": "../manifest.json"},
        "domain": "materials science",
        "method": "random",
        "k": 6,
        "lambda": 0.0,
        "seeds": [1],
        "labeled_size": LABELED_SIZE,
        "model_name": "stub-chat",
        "transport": "replay",
    }
    (configs_dir / "pseudo.json").write_text(json.dumps(pseudo, indent=2) + "\n", encoding="utf-8")


def make_responder(dataset):
    """Answer with the test sentence's gold entities, hash-perturbed."""
    gold_by_text = {}
    for sentence in dataset.sentences.values():
        entities = {etype["type"]: [] for etype in SCHEME}
        for span in spans_from_bio(sentence):
            entities[span.entity_type].append(span.surface)
        gold_by_text[sentence.text] = entities

    def responder(system, user):
        tail = user.rsplit("Sentence: ", 1)[1]
        text = tail.rsplit("\nAnswer:", 1)[0]
        gold = {k: list(v) for k, v in gold_by_text[text].items()}
        digest = hashlib.sha256((system + "\x00" + user).encode("utf-8")).digest()
        rng = random.Random(digest)
        flat = [(t, s) for t, surfaces in gold.items() for s in surfaces]
        roll = rng.random()
        if roll < 0.50:
            pass  # exact gold
        elif roll < 0.62 and flat:
            etype, surface = rng.choice(flat)  # oversight
            gold[etype].remove(surface)
        elif roll < 0.74:
            tokens = [t for t in text.split() if t.isalpha() and t.lower() == t]
            spurious = rng.choice(tokens) if tokens else "thing"
            gold[rng.choice(list(gold))].append(spurious)  # overprediction
        elif roll < 0.84 and flat:
            etype, surface = rng.choice(flat)  # wrong type
            gold[etype].remove(surface)
            others = [t for t in gold if t != etype]
            gold[rng.choice(others)].append(surface)
        elif roll < 0.92:
            first = next(iter(gold))
            scalar = gold[first][0] if gold[first] else ""
            body = dict(gold)
            body[first] = scalar  # non-list value, parser repairs it
            return "```json\n" + json.dumps(body) + "\n```"
        elif roll < 0.97:
            return "Here are the entities I found: " + json.dumps(gold) + " Let me know!"
        else:
            return "I could not find any entities in this sentence."
        return json.dumps(gold)

    return responder


def record_and_freeze():
    dataset = load_dataset(MINI / "corpus.txt", MINI / "manifest.json")
    cache_path = MINI / "cache.jsonl"
    if cache_path.exists():
        cache_path.unlink()
    golden = MINI / "golden"
    if golden.exists():
        shutil.rmtree(golden)
    golden.mkdir()

    responder = make_responder(dataset)
    with StubChatServer(responder) as server:
        for name in METHOD_CONFIGS:
            config = load_config(MINI / "configs" / f"{name}.json", transport_override="live")
            config.endpoint = server.url
            transport = LiveTransport(
                endpoint=server.url, cache=ResponseCache(cache_path), api_key="fixture-key"
            )
            run_experiment(config, transport)
            print(f"recorded {name}")
        pseudo_config = load_config(MINI / "configs" / "pseudo.json", transport_override="live")
        pseudo_config.endpoint = server.url
        transport = LiveTransport(
            endpoint=server.url, cache=ResponseCache(cache_path), api_key="fixture-key"
        )
        pseudo_label(pseudo_config, transport, golden / "pseudo_labels.jsonl")
        print("recorded pseudo labels")

    staykate_config = load_config(MINI / "configs" / "staykate.json")
    prompt_dumps = [
        {"sentence_id": tid, **bundle.to_dict()}
        for tid, bundle in build_prompts(staykate_config, seed=1)
    ]
    write_report_json(prompt_dumps, golden / "prompts_staykate_seed1.json")

    print()
    cache = ResponseCache(cache_path)
    print(f"cache entries: {len(cache)}")
    pins = {}
    for name in METHOD_CONFIGS:
        config = load_config(MINI / "configs" / f"{name}.json", transport_override="replay")
        artifacts = run_experiment(config, ReplayTransport(cache))
        write_report_json(artifacts.report_payload(), golden / f"report_{name}.json")
        pins[name] = artifacts.report.micro.f1
        statuses = {}
        for run in artifacts.runs:
            for s in run.sentences:
                statuses[s.extraction.parse_status] = statuses.get(s.extraction.parse_status, 0) + 1
        print(f"{name:18s} micro F1 mean = {pins[name]!r}  parse statuses: {statuses}")
    print()
    print("audit: zero_shot seed 1, per-sentence predictions vs gold")
    config = load_config(MINI / "configs" / "zero_shot.json", transport_override="replay")
    artifacts = run_experiment(config, ReplayTransport(cache))
    run = artifacts.runs[0]
    for s in run.sentences:
        gold = {}
        for span in spans_from_bio(dataset.sentences[s.sentence_id]):
            gold.setdefault(span.entity_type, []).append(span.surface)
        print(f"  {s.sentence_id} [{s.extraction.parse_status}]")
        print(f"    pred: { {k: v for k, v in s.extraction.predicted.items() if v} }")
        print(f"    gold: {gold}")
    seed1 = run.report
    print(
        f"  seed-1 counts: tp={seed1.errors.true_positive} over={seed1.errors.overpredicting} "
        f"oversight={seed1.errors.oversight} wrong={seed1.errors.wrong_type} "
        f"pred_total={seed1.errors.predicted_total} gold_total={seed1.errors.gold_total}"
    )
    print(f"  seed-1 micro: P={seed1.micro.precision!r} R={seed1.micro.recall!r} F1={seed1.micro.f1!r}")
    return pins


def main():
    MINI.mkdir(parents=True, exist_ok=True)
    write_corpus_and_manifest()
    dataset = load_dataset(MINI / "corpus.txt", MINI / "manifest.json")
    write_embeddings(dataset)
    write_probability_files(dataset)
    write_configs()
    record_and_freeze()


if __name__ == "__main__":
    main()
