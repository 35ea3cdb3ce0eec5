"""Fine-tune a token-classification encoder on the labeled pool and export
per-token class probabilities for the unlabeled pool.

Probability rows are aligned to corpus tokens with the first sub-word's
distribution by default (mean pooling over sub-words is available behind the
manifest's alignment tag, off by default), so the row count of every record
equals the sentence's corpus token count. Rows are renormalized to sum to 1.

Early stopping uses surface-level span F1 against a pseudo-labeled dev file
when one is supplied; otherwise training runs the full epoch budget.
"""

from __future__ import annotations

import json
import logging
import random
from collections import Counter
from pathlib import Path

import torch

from .corpus_io import CorpusSentence, read_corpus, read_pseudo_labels, read_splits
from .errors import ProviderError
from .manifest import MEAN_SUBWORD, ProviderManifest

logger = logging.getLogger(__name__)


def _load_encoder(manifest: ProviderManifest):
    from transformers import AutoModelForTokenClassification, AutoTokenizer

    labels = list(manifest.labels)
    tokenizer = AutoTokenizer.from_pretrained(manifest.encoder)
    if not getattr(tokenizer, "is_fast", False):
        raise ProviderError(
            "encoder tokenizer must be a fast tokenizer (sub-word alignment needs word ids)"
        )
    model = AutoModelForTokenClassification.from_pretrained(
        manifest.encoder,
        num_labels=len(labels),
        id2label=dict(enumerate(labels)),
        label2id={label: i for i, label in enumerate(labels)},
        ignore_mismatched_sizes=True,
    )
    return tokenizer, model


def _encode_batch(tokenizer, sentences, max_length):
    return tokenizer(
        [list(s.tokens) for s in sentences],
        is_split_into_words=True,
        padding=True,
        truncation=True,
        max_length=max_length,
        return_tensors="pt",
    )


def _label_tensor(encoding, sentences, label2id):
    batch_labels = []
    for i, sentence in enumerate(sentences):
        word_ids = encoding.word_ids(i)
        ids = []
        previous = None
        for word_id in word_ids:
            if word_id is None or word_id == previous:
                ids.append(-100)  # specials and continuation sub-words
            else:
                ids.append(label2id[sentence.tags[word_id]])
            previous = word_id
        batch_labels.append(ids)
    return torch.tensor(batch_labels, dtype=torch.long)


def _dev_span_f1(model, tokenizer, manifest: ProviderManifest, dev_records) -> float:
    """Surface-level micro F1 of predicted entities against pseudo labels."""
    predicted: Counter = Counter()
    gold: Counter = Counter()
    matched = 0
    for record in dev_records:
        tokens = record["text"].split()
        sentence = CorpusSentence(id=record["id"], tokens=tuple(tokens), tags=("O",) * len(tokens))
        rows = _sentence_probabilities(model, tokenizer, manifest, sentence)
        tags = [manifest.labels[max(range(len(r)), key=r.__getitem__)] for r in rows]
        for etype, surface in _spans_from_tags(tokens, tags):
            predicted[(etype, surface.casefold())] += 1
        for etype, surfaces in record.get("entities", {}).items():
            for surface in surfaces:
                gold[(etype, surface.casefold())] += 1
    matched = sum((predicted & gold).values())
    total_predicted = sum(predicted.values())
    total_gold = sum(gold.values())
    if matched == 0:
        return 0.0
    precision = matched / total_predicted
    recall = matched / total_gold
    return 2 * precision * recall / (precision + recall)


def _spans_from_tags(tokens, tags):
    spans = []
    start = None
    current = None
    for i, tag in enumerate(tags):
        prefix, _, etype = tag.partition("-")
        if prefix == "B" or (prefix == "I" and etype != current):
            if current is not None:
                spans.append((current, " ".join(tokens[start:i])))
            start, current = i, etype
        elif prefix == "O" or not etype:
            if current is not None:
                spans.append((current, " ".join(tokens[start:i])))
            start, current = None, None
    if current is not None:
        spans.append((current, " ".join(tokens[start:])))
    return spans


def fine_tune(model, tokenizer, labeled, manifest: ProviderManifest, dev_records=None) -> dict:
    """Train the token classifier on the labeled pool; returns training info."""
    settings = manifest.training
    torch.manual_seed(settings.seed)
    rng = random.Random(settings.seed)
    label2id = {label: i for i, label in enumerate(manifest.labels)}
    optimizer = torch.optim.AdamW(model.parameters(), lr=settings.learning_rate)
    order = list(labeled)
    best_f1 = -1.0
    best_state = None
    best_epoch = 0
    stale = 0
    for epoch in range(1, settings.epochs + 1):
        model.train()
        rng.shuffle(order)
        epoch_loss = 0.0
        for start in range(0, len(order), settings.batch_size):
            batch = order[start : start + settings.batch_size]
            encoding = _encode_batch(tokenizer, batch, settings.max_length)
            labels = _label_tensor(encoding, batch, label2id)
            optimizer.zero_grad()
            output = model(**encoding, labels=labels)
            output.loss.backward()
            optimizer.step()
            epoch_loss += float(output.loss.detach())
        if dev_records:
            f1 = _dev_span_f1(model, tokenizer, manifest, dev_records)
            logger.info("epoch %d: loss %.4f dev span-F1 %.4f", epoch, epoch_loss, f1)
            if f1 > best_f1:
                best_f1, best_epoch, stale = f1, epoch, 0
                best_state = {k: v.clone() for k, v in model.state_dict().items()}
            else:
                stale += 1
                if stale >= settings.patience:
                    break
        else:
            logger.info("epoch %d: loss %.4f", epoch, epoch_loss)
            best_epoch = epoch
    if best_state is not None:
        model.load_state_dict(best_state)
    return {"best_epoch": best_epoch, "dev_f1": best_f1 if dev_records else None}


def _sentence_probabilities(model, tokenizer, manifest: ProviderManifest, sentence) -> list[list[float]]:
    encoding = tokenizer(
        [list(sentence.tokens)], is_split_into_words=True, return_tensors="pt"
    )
    max_positions = getattr(model.config, "max_position_embeddings", None)
    if max_positions and encoding["input_ids"].shape[1] > max_positions:
        raise ProviderError(
            f"sentence {sentence.id}: {encoding['input_ids'].shape[1]} sub-words exceed "
            f"the encoder's {max_positions} positions; rows cannot align to corpus tokens"
        )
    model.eval()
    with torch.no_grad():
        logits = model(**encoding).logits[0]
    probs = torch.softmax(logits.double(), dim=-1).tolist()
    word_ids = encoding.word_ids(0)

    by_word: dict[int, list[list[float]]] = {}
    for position, word_id in enumerate(word_ids):
        if word_id is not None:
            by_word.setdefault(word_id, []).append(probs[position])
    missing = [i for i in range(len(sentence.tokens)) if i not in by_word]
    if missing:
        raise ProviderError(
            f"sentence {sentence.id}: corpus tokens at {missing} produced no sub-words"
        )
    rows = []
    for i in range(len(sentence.tokens)):
        if manifest.alignment == MEAN_SUBWORD:
            pieces = by_word[i]
            row = [sum(col) / len(pieces) for col in zip(*pieces)]
        else:
            row = by_word[i][0]
        total = sum(row)
        rows.append([value / total for value in row])
    return rows


def export_token_probs(
    corpus_path: str | Path,
    manifest_path: str | Path,
    splits_path: str | Path,
    seed: int,
    provider_manifest: ProviderManifest,
    out_path: str | Path,
    dev_pseudo_path: str | Path | None = None,
) -> int:
    """Fine-tune on the labeled pool and write one probability record per
    unlabeled-pool sentence. Returns the record count."""
    corpus = read_corpus(corpus_path, manifest_path)
    classes = corpus.tag_classes()
    if set(provider_manifest.labels) != set(classes):
        raise ProviderError(
            "manifest label list does not match the corpus tag classes: "
            f"{sorted(set(provider_manifest.labels) ^ set(classes))}"
        )
    labeled_ids, unlabeled_ids = read_splits(splits_path, seed)
    missing = [sid for sid in (*labeled_ids, *unlabeled_ids) if sid not in corpus.sentences]
    if missing:
        raise ProviderError(f"splits reference unknown sentence ids: {missing[:5]}")
    labeled = [corpus.sentences[sid] for sid in labeled_ids]
    unlabeled = [corpus.sentences[sid] for sid in unlabeled_ids]

    dev_records = read_pseudo_labels(dev_pseudo_path) if dev_pseudo_path else None
    tokenizer, model = _load_encoder(provider_manifest)
    info = fine_tune(model, tokenizer, labeled, provider_manifest, dev_records)
    logger.info("fine-tuning done: %s", info)

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with out_path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"class_labels": list(provider_manifest.labels)}) + "\n")
        for sentence in unlabeled:
            rows = _sentence_probabilities(model, tokenizer, provider_manifest, sentence)
            record = {"id": sentence.id, "labels": list(provider_manifest.labels), "probs": rows}
            fh.write(json.dumps(record) + "\n")
    return len(unlabeled)
